// textlrp command-line driver.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "textlrp/error.hpp"
#include "textlrp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace textlrp;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> workdir;
  std::optional<std::string> train;
  std::optional<std::string> eval;
  std::optional<std::string> embeddings;
  bool star_labels = false;
  bool oov_skip = false;
};

PipelineConfig build_config(const GlobalFlags& flags) {
  PipelineConfig config;
  if (!flags.config.empty()) config = PipelineConfig::load(flags.config);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.workers) config.workers = *flags.workers;
  if (flags.workdir) config.workdir = *flags.workdir;
  if (flags.train) config.train_corpus = *flags.train;
  if (flags.eval) config.eval_corpus = *flags.eval;
  if (flags.embeddings) config.embeddings = *flags.embeddings;
  if (flags.star_labels) config.star_labels = true;
  if (flags.oov_skip) config.blackbox.featurize.skip_oov = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explain a black-box text classifier through a CNN surrogate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GlobalFlags flags;
  app.add_option("--config", flags.config, "Pipeline config (JSON)");
  app.add_option("--seed", flags.seed, "Global seed");
  app.add_option("--workers", flags.workers, "Worker threads for per-document work")->check(CLI::PositiveNumber);
  app.add_option("--workdir", flags.workdir, "Directory for checkpoints and reports");
  app.add_option("--train", flags.train, "Training corpus (.csv or .jsonl)");
  app.add_option("--eval", flags.eval, "Evaluation corpus (.csv or .jsonl)");
  app.add_option("--embeddings", flags.embeddings, "Word embedding text file");
  app.add_flag("--star-labels", flags.star_labels, "Derive labels from a 'stars' column");
  app.add_flag("--oov-skip", flags.oov_skip, "Leave OOV tokens out of the black-box average");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and embedding table");
  std::string synth_out = "synthetic";
  std::string synth_spec;
  std::optional<std::size_t> synth_train, synth_eval;
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--spec", synth_spec, "Synthetic spec (JSON)");
  synth->add_option("--train-docs", synth_train, "Training documents");
  synth->add_option("--eval-docs", synth_eval, "Evaluation documents");

  auto* train_bb = app.add_subcommand("train-blackbox", "Train the black-box linear classifier");
  auto* train_sur = app.add_subcommand("train-surrogate", "Distill the black box into the CNN surrogate");

  auto* explain = app.add_subcommand("explain", "Compute token relevance for predicted-positive documents");
  std::string method_name = "lrp";
  std::string split_name = "eval";
  std::optional<std::string> doc_id;
  std::optional<std::string> html;
  explain->add_option("--method", method_name, "lrp, gbsa, ig or permutation");
  explain->add_option("--split", split_name, "train or eval");
  explain->add_option("--doc-id", doc_id, "Explain one document only");
  explain->add_option("--html", html, "Also render highlighted text to this file");

  auto* report = app.add_subcommand("report", "Build the report bundle from explanation files");
  auto* oov = app.add_subcommand("oov-report", "Out-of-vocabulary statistics per split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      SyntheticSpec spec;
      if (!synth_spec.empty()) {
        std::ifstream in(synth_spec);
        if (!in) throw ValidationError("cannot open synthetic spec " + synth_spec);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
          throw ValidationError("synthetic spec " + synth_spec + " is not valid JSON: " + e.what());
        }
        spec = synthetic_spec_from_json(j);
      }
      if (flags.seed) spec.seed = *flags.seed;
      if (synth_train) spec.train_docs = *synth_train;
      if (synth_eval) spec.eval_docs = *synth_eval;
      cmd_synth(spec, synth_out, std::cout);
      return 0;
    }
    const PipelineConfig config = build_config(flags);
    if (train_bb->parsed()) {
      cmd_train_blackbox(config, std::cout);
    } else if (train_sur->parsed()) {
      cmd_train_surrogate(config, std::cout);
    } else if (explain->parsed()) {
      const Method method = method_from_string(method_name);
      const Split split = split_from_string(split_name);
      cmd_explain(config, method, split, doc_id, html, std::cout);
    } else if (report->parsed()) {
      cmd_report(config, std::cout);
    } else if (oov->parsed()) {
      cmd_oov_report(config, std::cout);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
