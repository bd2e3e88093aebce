#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "textlrp/csv.hpp"
#include "textlrp/error.hpp"
#include "textlrp/pipeline.hpp"

using namespace textlrp;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec(std::size_t train, std::size_t eval) {
  SyntheticSpec s;
  s.train_docs = train;
  s.eval_docs = eval;
  s.neutral_vocab = 120;
  s.seed = 11;
  return s;
}

PipelineConfig small_config(const std::string& dir) {
  std::ostringstream log;
  cmd_synth(small_spec(300, 200), dir, log);
  auto c = PipelineConfig::load(dir + "/pipeline.json");
  c.cnn.pad_length = 40;
  c.cnn.filters_per_size = 6;
  c.cnn.epochs = 2;
  c.min_count = 3;
  c.ngram_min_count = 2;
  return c;
}

std::size_t line_count(const std::string& path) {
  const auto text = testutil::read_file(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::size_t predicted_positives(const PipelineConfig& c, Split split) {
  const auto data = load_pipeline_data(c);
  const auto model = load_linear_model(workdir_path(c, "blackbox.json"));
  std::size_t n = 0;
  for (const auto& d : label_with_model(model, data.split(split), data.table)) n += *d.predicted_label == 1;
  return n;
}

}  // namespace

TEST_CASE("config validation reports every problem without side effects") {
  testutil::TempDir dir("cfg");
  const nlohmann::json j = {{"train_corpus", "nope.csv"},
                            {"embeddings", "missing.txt"},
                            {"workdir", "out"},
                            {"lrp", {{"epsilon", 0.0}}},
                            {"cnn", {{"dropout_rate", 1.0}}},
                            {"target_class", 3}};
  const auto c = PipelineConfig::from_json(j, dir.path().string());
  const auto problems = c.problems();
  CHECK(problems.size() == 6);
  try {
    c.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("train_corpus not found") != std::string::npos);
    CHECK(msg.find("eval_corpus is required") != std::string::npos);
    CHECK(msg.find("embeddings not found") != std::string::npos);
    CHECK(msg.find("lrp.epsilon") != std::string::npos);
    CHECK(msg.find("target_class") != std::string::npos);
  }
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train_blackbox(c, log), ValidationError);
  CHECK(!fs::exists(dir.path() / "out"));

  CHECK_THROWS_AS(PipelineConfig::from_json({{"trian_corpus", "x"}}), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"cnn", {{"filter", 3}}}}), ValidationError);
  CHECK_THROWS_AS(PipelineConfig::load(dir.file("absent.json")), Error);
  testutil::write_file(dir.file("broken.json"), "{\"seed\": ");
  CHECK_THROWS_AS(PipelineConfig::load(dir.file("broken.json")), ValidationError);
}

TEST_CASE("config JSON round-trip resolves paths against the file") {
  testutil::TempDir dir("cfgrt");
  const auto c = small_config(dir.path().string());
  CHECK(c.train_corpus == (dir.path() / "train.csv").string());
  CHECK(c.workdir == (dir.path() / "work").string());
  CHECK(c.problems().empty());
  const auto again = PipelineConfig::from_json(c.to_json());
  CHECK(again.to_json() == c.to_json());
}

TEST_CASE("missing embeddings stop the run before any output") {
  testutil::TempDir dir("noemb");
  auto c = small_config(dir.path().string());
  fs::remove(c.embeddings);
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train_blackbox(c, log), ValidationError);
  CHECK(!fs::exists(c.workdir));
  CHECK_THROWS_AS(cmd_explain(c, Method::lrp, Split::eval, {}, {}, log), ValidationError);
}

TEST_CASE("stages need their checkpoints") {
  testutil::TempDir dir("order");
  const auto c = small_config(dir.path().string());
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train_surrogate(c, log), ValidationError);
  CHECK_THROWS_AS(cmd_explain(c, Method::permutation, Split::eval, {}, {}, log), ValidationError);
  CHECK_THROWS_AS(cmd_report(c, log), ValidationError);
  cmd_train_blackbox(c, log);
  CHECK_THROWS_AS(cmd_explain(c, Method::lrp, Split::eval, {}, {}, log), ValidationError);
  CHECK(cmd_explain(c, Method::permutation, Split::eval, {}, {}, log) > 0);
}

TEST_CASE("end-to-end run on a small synthetic corpus") {
  testutil::TempDir dir("e2e");
  const auto c = small_config(dir.path().string());
  std::ostringstream log;
  cmd_train_blackbox(c, log);
  const auto first = testutil::read_file(workdir_path(c, "blackbox.json"));
  cmd_train_blackbox(c, log);
  CHECK(testutil::read_file(workdir_path(c, "blackbox.json")) == first);
  CHECK(log.str().find("F1") != std::string::npos);

  cmd_train_surrogate(c, log);
  const auto surrogate = testutil::read_file(workdir_path(c, "surrogate.json"));
  cmd_train_surrogate(c, log);
  CHECK(testutil::read_file(workdir_path(c, "surrogate.json")) == surrogate);
  const auto metrics = nlohmann::json::parse(testutil::read_file(workdir_path(c, "surrogate_metrics.json")));
  CHECK(metrics["eval"].contains("vs_blackbox"));
  CHECK(metrics["train"].contains("vs_actual"));

  const std::size_t positives = predicted_positives(c, Split::eval);
  REQUIRE(positives > 0);
  for (Method m : {Method::permutation, Method::lrp, Method::gbsa}) {
    CHECK(cmd_explain(c, m, Split::eval, {}, {}, log) == positives);
    CHECK(line_count(workdir_path(c, explain_file_name(m, Split::eval))) == positives);
  }
  CHECK(cmd_explain(c, Method::lrp, Split::train, {}, {}, log) == predicted_positives(c, Split::train));

  const auto one = cmd_explain(c, Method::lrp, Split::eval, std::string("eval-003"), dir.file("one.html"), log);
  CHECK(one == 1);
  CHECK(fs::exists(workdir_path(c, "explain_lrp_eval_eval-003.jsonl")));
  CHECK(testutil::read_file(dir.file("one.html")).find("<span") != std::string::npos);
  CHECK_THROWS_AS(cmd_explain(c, Method::lrp, Split::eval, std::string("nope"), {}, log), ValidationError);

  cmd_report(c, log);
  const std::vector<std::string> outputs{"report_importance.csv",     "report_top_tokens.csv", "report_ngram_summary.csv",
                                         "report_ngrams.csv",         "report_deletion.csv",   "report_correlation.csv",
                                         "report_case_tp.html",       "report_case_fp.html",   "report_case_fn.html",
                                         "report_index.html",         "manifest.json"};
  std::map<std::string, std::string> before;
  for (const auto& f : outputs) {
    REQUIRE(fs::exists(workdir_path(c, f)));
    before[f] = testutil::read_file(workdir_path(c, f));
  }
  CHECK(csv::read_file(workdir_path(c, "report_correlation.csv")).size() == 1 + 4);
  cmd_report(c, log);
  for (const auto& f : outputs) CHECK(testutil::read_file(workdir_path(c, f)) == before[f]);

  const auto manifest = nlohmann::json::parse(before["manifest.json"]);
  CHECK(manifest["tool"] == "textlrp");
  CHECK(manifest["config"].contains("seed"));
  CHECK(!manifest["config"].contains("workdir"));
  CHECK(!manifest["config"].contains("workers"));
  CHECK(manifest["config"]["train_corpus"] == "../train.csv");
  CHECK(manifest["config"]["embeddings"] == "../embeddings.txt");
}

TEST_CASE("a single explained table gives a 1x1 correlation") {
  testutil::TempDir dir("single");
  const auto c = small_config(dir.path().string());
  std::ostringstream log;
  cmd_train_blackbox(c, log);
  cmd_explain(c, Method::permutation, Split::eval, {}, {}, log);
  cmd_report(c, log);
  const auto rows = csv::read_file(workdir_path(c, "report_correlation.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fields == std::vector<std::string>{"label", "permutation:eval"});
  CHECK(rows[1].fields == std::vector<std::string>{"permutation:eval", "1"});
}

TEST_CASE("no predicted positives gives an empty explanation file") {
  testutil::TempDir dir("empty");
  auto c = small_config(dir.path().string());
  testutil::write_file(dir.file("calm.csv"),
                       "id,text,label\nc1,delicious amazing friendly,0\nc2,fresh excellent wonderful tasty,0\n");
  c.eval_corpus = dir.file("calm.csv");
  std::ostringstream log;
  cmd_train_blackbox(c, log);
  CHECK(cmd_explain(c, Method::permutation, Split::eval, {}, {}, log) == 0);
  const auto path = workdir_path(c, explain_file_name(Method::permutation, Split::eval));
  REQUIRE(fs::exists(path));
  CHECK(testutil::read_file(path).empty());
}

TEST_CASE("synth output") {
  testutil::TempDir a("synA"), b("synB");
  std::ostringstream log;
  SUBCASE("tiny corpus") {
    cmd_synth(small_spec(2, 2), a.path().string(), log);
    const auto c = PipelineConfig::load(a.file("pipeline.json"));
    const auto data = load_pipeline_data(c);
    CHECK(data.train.size() == 2);
    CHECK(data.eval.size() == 2);
    CHECK(data.train.class_counts().size() == 2);
  }
  SUBCASE("same seed, same files") {
    cmd_synth(small_spec(50, 40), a.path().string(), log);
    cmd_synth(small_spec(50, 40), b.path().string(), log);
    for (const char* f : {"train.csv", "eval.csv", "embeddings.txt", "synth_spec.json", "pipeline.json"}) {
      CHECK(testutil::read_file(a.file(f)) == testutil::read_file(b.file(f)));
    }
    const auto spec = synthetic_spec_from_json(nlohmann::json::parse(testutil::read_file(a.file("synth_spec.json"))));
    CHECK(synthetic_spec_to_json(spec) == synthetic_spec_to_json(small_spec(50, 40)));
  }
  SUBCASE("triggers appear only where planted") {
    const auto spec = small_spec(400, 10);
    const auto data = generate_synthetic(spec);
    auto has = [](const std::vector<std::string>& list, const std::string& t) {
      return std::find(list.begin(), list.end(), t) != list.end();
    };
    for (const auto& d : data.train) {
      bool bad = false, good = false;
      for (std::size_t i = 0; i < d.tokens.size(); ++i) {
        const bool negated = i > 0 && has(spec.negation_words, d.tokens[i - 1]);
        if (has(spec.bad_triggers, d.tokens[i]) && !negated) bad = true;
        if (has(spec.good_triggers, d.tokens[i])) good = true;
      }
      if (*d.label == 1) {
        CHECK(bad);
        CHECK(!good);
      } else {
        CHECK(!bad);
      }
    }
  }
  CHECK_THROWS_AS(cmd_synth([] {
                    auto s = small_spec(5, 5);
                    s.good_triggers.push_back("rude");
                    return s;
                  }(), a.path().string(), log),
                  ValidationError);
}
