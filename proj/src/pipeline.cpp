#include "textlrp/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "textlrp/analysis.hpp"
#include "textlrp/csv.hpp"
#include "textlrp/error.hpp"
#include "textlrp/format.hpp"
#include "textlrp/parallel.hpp"
#include "textlrp/reports.hpp"

namespace fs = std::filesystem;

namespace textlrp {

namespace {

constexpr std::uint64_t kStreamTrainSample = 201;
constexpr std::uint64_t kStreamEvalSample = 202;
constexpr std::uint64_t kStreamBlackbox = 203;
constexpr std::uint64_t kStreamCnn = 204;
constexpr std::uint64_t kStreamRandomDeletion = 205;

constexpr std::size_t kTopTokens = 20;
constexpr std::size_t kNgramTop = 20;

const std::vector<Method> kMethodOrder{Method::permutation, Method::lrp, Method::gbsa, Method::ig};
const std::vector<Split> kSplitOrder{Split::train, Split::eval};

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (fs::path(base_dir) / p).lexically_normal().string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

nlohmann::ordered_json confusion_json(const Confusion& c) {
  nlohmann::ordered_json j;
  j["cells"] = {{c.cells[0][0], c.cells[0][1]}, {c.cells[1][0], c.cells[1][1]}};
  j["precision"] = c.precision();
  j["recall"] = c.recall();
  j["f1"] = c.f1();
  j["macro_f1"] = c.macro_f1();
  j["accuracy"] = c.accuracy();
  return j;
}

void print_confusion(std::ostream& log, const std::string& title, const std::string& row_name,
                     const std::string& col_name, const Confusion& c) {
  log << title << '\n'
      << "              " << col_name << "=0  " << col_name << "=1\n"
      << "  " << row_name << "=0  " << c.cells[0][0] << "  " << c.cells[0][1] << '\n'
      << "  " << row_name << "=1  " << c.cells[1][0] << "  " << c.cells[1][1] << '\n'
      << "  F1(class 1)=" << format_fixed(c.f1(), 4) << "  macro-F1=" << format_fixed(c.macro_f1(), 4) << '\n';
}

bool has_labels(const Corpus& corpus) {
  return !corpus.empty() && std::all_of(corpus.begin(), corpus.end(), [](const Document& d) { return d.label.has_value(); });
}

std::vector<int> actual_labels(const Corpus& corpus) {
  std::vector<int> out;
  for (const auto& d : corpus) out.push_back(*d.label);
  return out;
}

std::vector<int> predicted_labels(const Corpus& corpus) {
  std::vector<int> out;
  for (const auto& d : corpus) out.push_back(*d.predicted_label);
  return out;
}

// Config without the workdir, so identical runs in different directories
// hash identically.
// Config as recorded in the manifest: input paths relative to the workdir,
// so a run directory can be moved or copied without changing its manifest.
// The worker count never changes results and is left out.
nlohmann::ordered_json manifest_config(const PipelineConfig& config) {
  auto j = config.to_json();
  const fs::path work = fs::absolute(config.workdir).lexically_normal();
  for (const char* key : {"train_corpus", "eval_corpus", "embeddings"}) {
    const fs::path p = fs::absolute(j[key].get<std::string>()).lexically_normal();
    j[key] = p.lexically_relative(work).generic_string();
  }
  j.erase("workdir");
  j.erase("workers");
  return j;
}

void update_manifest(const PipelineConfig& config) {
  nlohmann::ordered_json m;
  m["tool"] = "textlrp";
  m["tool_version"] = kToolVersion;
  std::ostringstream hash;
  const auto cfg = manifest_config(config);
  hash << std::hex << fnv1a64(cfg.dump());
  m["config_hash"] = hash.str();
  m["config"] = cfg;
  std::vector<std::string> artifacts;
  for (const auto& entry : fs::directory_iterator(config.workdir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      artifacts.push_back(entry.path().filename().string());
    }
  }
  std::sort(artifacts.begin(), artifacts.end());
  m["artifacts"] = artifacts;
  write_text(workdir_path(config, "manifest.json"), m.dump(2) + "\n");
}

void require_files(const std::vector<std::pair<std::string, std::string>>& files) {
  std::vector<std::string> missing;
  for (const auto& [path, what] : files) {
    if (!fs::exists(path)) missing.push_back(what + " not found: " + path);
  }
  if (missing.empty()) return;
  std::string msg = "missing inputs:";
  for (const auto& m : missing) msg += "\n  - " + m;
  throw ValidationError(msg);
}

}  // namespace

std::string to_string(Split split) { return split == Split::train ? "train" : "eval"; }

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "eval") return Split::eval;
  throw ValidationError("unknown split '" + name + "' (expected train or eval)");
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  require_keys(j,
               {"train_corpus", "eval_corpus", "embeddings", "workdir", "star_labels", "train_sample", "eval_sample",
                "blackbox", "cnn", "lrp", "ig_steps", "target_class", "min_count", "ngram_min_count",
                "deletion_steps", "case_limit", "seed", "workers"},
               "pipeline config");
  PipelineConfig c;
  try {
    c.train_corpus = resolve(base_dir, j.value("train_corpus", std::string{}));
    c.eval_corpus = resolve(base_dir, j.value("eval_corpus", std::string{}));
    c.embeddings = resolve(base_dir, j.value("embeddings", std::string{}));
    c.workdir = resolve(base_dir, j.value("workdir", std::string{"work"}));
    c.star_labels = j.value("star_labels", false);
    if (j.contains("train_sample") && !j["train_sample"].is_null()) c.train_sample = j["train_sample"].get<std::size_t>();
    if (j.contains("eval_sample") && !j["eval_sample"].is_null()) c.eval_sample = j["eval_sample"].get<std::size_t>();
    if (j.contains("blackbox")) {
      const auto& b = j["blackbox"];
      require_keys(b, {"loss_kind", "epochs", "learning_rate", "l2", "oov_skip", "reshuffle"}, "blackbox config");
      c.blackbox.loss_kind = loss_kind_from_string(b.value("loss_kind", to_string(c.blackbox.loss_kind)));
      c.blackbox.epochs = b.value("epochs", c.blackbox.epochs);
      c.blackbox.learning_rate = b.value("learning_rate", c.blackbox.learning_rate);
      c.blackbox.l2 = b.value("l2", c.blackbox.l2);
      c.blackbox.featurize.skip_oov = b.value("oov_skip", false);
      c.blackbox.reshuffle = b.value("reshuffle", true);
    }
    if (j.contains("cnn")) {
      const auto& n = j["cnn"];
      require_keys(n,
                   {"pad_length", "filter_sizes", "filters_per_size", "dropout_rate", "epochs", "batch_size",
                    "learning_rate"},
                   "cnn config");
      c.cnn.pad_length = n.value("pad_length", c.cnn.pad_length);
      c.cnn.filter_sizes = n.value("filter_sizes", c.cnn.filter_sizes);
      c.cnn.filters_per_size = n.value("filters_per_size", c.cnn.filters_per_size);
      c.cnn.dropout_rate = n.value("dropout_rate", c.cnn.dropout_rate);
      c.cnn.epochs = n.value("epochs", c.cnn.epochs);
      c.cnn.batch_size = n.value("batch_size", c.cnn.batch_size);
      c.cnn.learning_rate = n.value("learning_rate", c.cnn.learning_rate);
    }
    if (j.contains("lrp")) {
      require_keys(j["lrp"], {"epsilon"}, "lrp config");
      c.lrp.epsilon = j["lrp"].value("epsilon", c.lrp.epsilon);
    }
    c.ig_steps = j.value("ig_steps", c.ig_steps);
    c.target_class = j.value("target_class", c.target_class);
    c.min_count = j.value("min_count", c.min_count);
    c.ngram_min_count = j.value("ngram_min_count", c.ngram_min_count);
    c.deletion_steps = j.value("deletion_steps", c.deletion_steps);
    c.case_limit = j.value("case_limit", c.case_limit);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path + " is not valid JSON: " + e.what());
  }
  const auto parent = fs::path(path).parent_path();
  return from_json(j, parent.empty() ? "." : parent.string());
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["train_corpus"] = train_corpus;
  j["eval_corpus"] = eval_corpus;
  j["embeddings"] = embeddings;
  j["workdir"] = workdir;
  j["star_labels"] = star_labels;
  j["train_sample"] = train_sample ? nlohmann::ordered_json(*train_sample) : nlohmann::ordered_json(nullptr);
  j["eval_sample"] = eval_sample ? nlohmann::ordered_json(*eval_sample) : nlohmann::ordered_json(nullptr);
  j["blackbox"] = {{"loss_kind", to_string(blackbox.loss_kind)},
                   {"epochs", blackbox.epochs},
                   {"learning_rate", blackbox.learning_rate},
                   {"l2", blackbox.l2},
                   {"oov_skip", blackbox.featurize.skip_oov},
                   {"reshuffle", blackbox.reshuffle}};
  j["cnn"] = {{"pad_length", cnn.pad_length},       {"filter_sizes", cnn.filter_sizes},
              {"filters_per_size", cnn.filters_per_size}, {"dropout_rate", cnn.dropout_rate},
              {"epochs", cnn.epochs},               {"batch_size", cnn.batch_size},
              {"learning_rate", cnn.learning_rate}};
  j["lrp"] = {{"epsilon", lrp.epsilon}};
  j["ig_steps"] = ig_steps;
  j["target_class"] = target_class;
  j["min_count"] = min_count;
  j["ngram_min_count"] = ngram_min_count;
  j["deletion_steps"] = deletion_steps;
  j["case_limit"] = case_limit;
  j["seed"] = seed;
  j["workers"] = workers;
  return j;
}

std::vector<std::string> PipelineConfig::problems() const {
  std::vector<std::string> out;
  auto check_path = [&](const std::string& path, const std::string& what) {
    if (path.empty()) {
      out.push_back(what + " is required");
    } else if (!fs::exists(path)) {
      out.push_back(what + " not found: " + path);
    }
  };
  check_path(train_corpus, "train_corpus");
  check_path(eval_corpus, "eval_corpus");
  check_path(embeddings, "embeddings");
  if (workdir.empty()) out.push_back("workdir is required");
  if (fs::exists(workdir) && !fs::is_directory(workdir)) out.push_back("workdir is not a directory: " + workdir);
  if (blackbox.epochs < 1) out.push_back("blackbox.epochs must be at least 1");
  if (!(blackbox.learning_rate > 0)) out.push_back("blackbox.learning_rate must be positive");
  if (blackbox.l2 < 0) out.push_back("blackbox.l2 must be non-negative");
  try {
    CnnConfig probe = cnn;
    probe.dim = 1;
    probe.validate();
  } catch (const ValidationError& e) {
    out.push_back(e.what());
  }
  if (!(lrp.epsilon > 0)) out.push_back("lrp.epsilon must be positive");
  if (ig_steps < 1) out.push_back("ig_steps must be at least 1");
  if (target_class != 0 && target_class != 1) out.push_back("target_class must be 0 or 1");
  if (min_count < 1) out.push_back("min_count must be at least 1");
  if (workers < 1) out.push_back("workers must be at least 1");
  if (train_sample && *train_sample == 0) out.push_back("train_sample must be positive");
  if (eval_sample && *eval_sample == 0) out.push_back("eval_sample must be positive");
  return out;
}

void PipelineConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : list) msg += "\n  - " + p;
  throw ValidationError(msg);
}

LinearTrainConfig PipelineConfig::blackbox_config() const {
  LinearTrainConfig c = blackbox;
  c.seed = derive_seed(seed, kStreamBlackbox);
  return c;
}

CnnConfig PipelineConfig::cnn_config(std::size_t dim) const {
  CnnConfig c = cnn;
  c.dim = dim;
  c.seed = derive_seed(seed, kStreamCnn);
  return c;
}

PipelineData load_pipeline_data(const PipelineConfig& config) {
  PipelineData data;
  LoadOptions options;
  options.star_labels = config.star_labels;
  data.train = load_corpus(config.train_corpus, corpus_format_from_path(config.train_corpus), options);
  data.eval = load_corpus(config.eval_corpus, corpus_format_from_path(config.eval_corpus), options);
  if (config.train_sample) {
    data.train = stratified_sample(data.train, *config.train_sample, derive_seed(config.seed, kStreamTrainSample));
  }
  if (config.eval_sample) {
    data.eval = stratified_sample(data.eval, *config.eval_sample, derive_seed(config.seed, kStreamEvalSample));
  }
  data.table = load_embeddings(config.embeddings);
  return data;
}

std::string workdir_path(const PipelineConfig& config, const std::string& name) {
  return (fs::path(config.workdir) / name).string();
}

std::string explain_file_name(Method method, Split split) {
  return "explain_" + to_string(method) + "_" + to_string(split) + ".jsonl";
}

void cmd_train_blackbox(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const auto data = load_pipeline_data(config);
  const auto model = train_linear(data.train, data.table, config.blackbox_config());
  fs::create_directories(config.workdir);
  save_linear_model(model, workdir_path(config, "blackbox.json"));

  nlohmann::ordered_json metrics;
  for (Split s : kSplitOrder) {
    const Corpus& corpus = data.split(s);
    if (!has_labels(corpus)) continue;
    const auto c = eval_confusion(model, corpus, data.table);
    metrics[to_string(s)] = confusion_json(c);
    print_confusion(log, "black box vs actual labels (" + to_string(s) + ", n=" + std::to_string(c.total()) + ")",
                    "actual", "pred", c);
  }
  write_text(workdir_path(config, "blackbox_metrics.json"), metrics.dump(2) + "\n");
  update_manifest(config);
}

namespace {

std::vector<CnnPrediction> predict_surrogate(const CnnParams& params, const Corpus& corpus, const EmbeddingTable& table,
                                             std::size_t workers) {
  std::vector<CnnPrediction> out(corpus.size());
  parallel_for(corpus.size(), workers, [&](std::size_t i) { out[i] = cnn_predict(params, corpus[i].tokens, table); });
  return out;
}

}  // namespace

void cmd_train_surrogate(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  require_files({{workdir_path(config, "blackbox.json"), "black-box checkpoint"}});
  const auto data = load_pipeline_data(config);
  const auto model = load_linear_model(workdir_path(config, "blackbox.json"));
  const Corpus train = label_with_model(model, data.train, data.table);
  const Corpus eval = label_with_model(model, data.eval, data.table);
  const Corpus all = merge(train, eval);
  const auto params = cnn_train(config.cnn_config(data.table.dim()), all, data.table);
  save_cnn_params(params, workdir_path(config, "surrogate.json"));

  nlohmann::ordered_json metrics;
  for (Split s : kSplitOrder) {
    const Corpus& corpus = s == Split::train ? train : eval;
    const auto preds = predict_surrogate(params, corpus, data.table, config.workers);
    std::vector<int> cnn_labels;
    for (const auto& p : preds) cnn_labels.push_back(p.label);
    const auto actual = has_labels(corpus) ? actual_labels(corpus) : std::vector<int>{};
    const auto report = surrogate_fidelity(cnn_labels, predicted_labels(corpus), actual);
    nlohmann::ordered_json entry;
    entry["vs_blackbox"] = confusion_json(report.vs_blackbox);
    if (report.vs_actual) entry["vs_actual"] = confusion_json(*report.vs_actual);
    metrics[to_string(s)] = entry;
    const std::string n = std::to_string(corpus.size());
    if (report.vs_actual) {
      print_confusion(log, "surrogate vs actual labels (" + to_string(s) + ", n=" + n + ")", "actual", "cnn",
                      *report.vs_actual);
    }
    print_confusion(log, "surrogate vs black box (" + to_string(s) + ", n=" + n + ")", "blackbox", "cnn",
                    report.vs_blackbox);
  }
  write_text(workdir_path(config, "surrogate_metrics.json"), metrics.dump(2) + "\n");
  update_manifest(config);
}

std::size_t cmd_explain(const PipelineConfig& config, Method method, Split split,
                        const std::optional<std::string>& doc_id, const std::optional<std::string>& html_path,
                        std::ostream& log) {
  config.validate();
  std::vector<std::pair<std::string, std::string>> needed{{workdir_path(config, "blackbox.json"), "black-box checkpoint"}};
  if (method != Method::permutation) needed.push_back({workdir_path(config, "surrogate.json"), "surrogate checkpoint"});
  require_files(needed);
  const auto data = load_pipeline_data(config);
  const auto model = load_linear_model(workdir_path(config, "blackbox.json"));
  std::optional<CnnParams> params;
  if (fs::exists(workdir_path(config, "surrogate.json"))) params = load_cnn_params(workdir_path(config, "surrogate.json"));
  const Corpus corpus = label_with_model(model, data.split(split), data.table);

  ExplainConfig ec;
  ec.target_class = config.target_class;
  ec.lrp = config.lrp;
  ec.ig_steps = config.ig_steps;
  ec.workers = config.workers;
  const ModelBundle models{&model, params ? &*params : nullptr};

  std::vector<RelevanceMap> maps;
  std::string out_name = explain_file_name(method, split);
  if (doc_id) {
    const Document* doc = corpus.find(*doc_id);
    if (!doc) throw ValidationError("unknown document id '" + *doc_id + "' in " + to_string(split) + " split");
    maps.push_back(explain_document(method, models, *doc, data.table, ec));
    std::string safe = *doc_id;
    for (char& c : safe) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    out_name = "explain_" + to_string(method) + "_" + to_string(split) + "_" + safe + ".jsonl";
  } else {
    maps = explain_corpus(method, models, corpus, data.table, ec);
  }
  fs::create_directories(config.workdir);
  write_relevance_jsonl(maps, workdir_path(config, out_name));
  if (html_path) {
    HighlightOptions opts;
    opts.title = to_string(method) + " relevance (" + to_string(split) + ")";
    if (params) {
      for (const auto& m : maps) {
        opts.surrogate_scores[m.doc_id] = cnn_predict(*params, corpus.find(m.doc_id)->tokens, data.table).probability;
      }
    }
    render_highlights(maps, corpus, *html_path, opts);
  }
  log << "explained " << maps.size() << " document(s) with " << to_string(method) << " -> " << out_name << '\n';
  update_manifest(config);
  return maps.size();
}

namespace {

std::string html_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  out << "<table>\n<tr>";
  for (const auto& h : header) out << "<th>" << html_escape(h) << "</th>";
  out << "</tr>\n";
  for (const auto& r : rows) {
    out << "<tr>";
    for (const auto& c : r) out << "<td>" << html_escape(c) << "</td>";
    out << "</tr>\n";
  }
  out << "</table>\n";
  return out.str();
}

// Mean of the observed instance scores.
double missing_fill(const NgramEntry& e) {
  if (e.instances.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& i : e.instances) sum += i.joint_score;
  return sum / static_cast<double>(e.instances.size());
}

std::vector<std::vector<std::string>> confusion_rows(const Confusion& c, const std::string& row_name) {
  return {{row_name + "=0", std::to_string(c.cells[0][0]), std::to_string(c.cells[0][1])},
          {row_name + "=1", std::to_string(c.cells[1][0]), std::to_string(c.cells[1][1])},
          {"F1 (class 1)", format_fixed(c.f1(), 3), ""}};
}

}  // namespace

void cmd_report(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  std::vector<std::pair<Method, Split>> available;
  for (Method m : kMethodOrder) {
    for (Split s : kSplitOrder) {
      if (fs::exists(workdir_path(config, explain_file_name(m, s)))) available.emplace_back(m, s);
    }
  }
  {
    std::vector<std::string> missing;
    if (!fs::exists(workdir_path(config, "blackbox.json"))) {
      missing.push_back("black-box checkpoint not found: " + workdir_path(config, "blackbox.json"));
    }
    if (available.empty()) missing.push_back("no explain_<method>_<split>.jsonl files in " + config.workdir);
    if (!missing.empty()) {
      std::string msg = "missing inputs:";
      for (const auto& m : missing) msg += "\n  - " + m;
      throw ValidationError(msg);
    }
  }

  const auto data = load_pipeline_data(config);
  const auto model = load_linear_model(workdir_path(config, "blackbox.json"));
  std::optional<CnnParams> params;
  if (fs::exists(workdir_path(config, "surrogate.json"))) params = load_cnn_params(workdir_path(config, "surrogate.json"));
  const Corpus train = label_with_model(model, data.train, data.table);
  const Corpus eval = label_with_model(model, data.eval, data.table);
  auto split_corpus = [&](Split s) -> const Corpus& { return s == Split::train ? train : eval; };
  std::vector<std::string> notes;

  // Global importance, one table per (method, split).
  std::vector<GlobalImportance> importances;
  std::vector<std::vector<RelevanceMap>> all_maps;
  for (auto [m, s] : available) {
    auto maps = read_relevance_jsonl(workdir_path(config, explain_file_name(m, s)));
    if (maps.empty()) {
      notes.push_back(explain_file_name(m, s) + " is empty; skipped");
      continue;
    }
    importances.push_back(aggregate_global(maps, config.min_count, nullptr, AggregationMode::per_occurrence, to_string(s)));
    all_maps.push_back(std::move(maps));
  }
  export_plot_data(std::span<const GlobalImportance>(importances), workdir_path(config, "report_importance.csv"));

  // Side-by-side top tokens: each table's top entries with every table's score.
  {
    std::ofstream out(workdir_path(config, "report_top_tokens.csv"), std::ios::binary);
    if (!out) throw Error("cannot write report_top_tokens.csv");
    std::vector<std::string> header{"table", "rank", "token"};
    for (const auto& g : importances) header.push_back(g.label());
    csv::write_row(out, header);
    for (const auto& g : importances) {
      for (std::size_t r = 0; r < std::min(kTopTokens, g.entries.size()); ++r) {
        std::vector<std::string> row{g.label(), std::to_string(r + 1), g.entries[r].token};
        for (const auto& other : importances) {
          const auto* e = other.find(g.entries[r].token);
          row.push_back(e ? format_fixed(e->normalized_score, 4) : "");
        }
        csv::write_row(out, row);
      }
    }
  }

  // Ngram joint effects: strongest and weakest entries per report.
  {
    std::vector<NgramReport> scatter;
    std::ofstream summary(workdir_path(config, "report_ngram_summary.csv"), std::ios::binary);
    if (!summary) throw Error("cannot write report_ngram_summary.csv");
    // missing_fill stands in for documents without the ngram when plotting.
    csv::write_row(summary, {"method", "split", "n", "rank", "ngram", "mean_joint_score", "count", "missing_fill"});
    for (std::size_t t = 0; t < importances.size(); ++t) {
      const Split s = split_from_string(importances[t].split);
      for (std::size_t n = 1; n <= 3; ++n) {
        auto rep = ngram_scores(all_maps[t], split_corpus(s), n, config.ngram_min_count, importances[t].split);
        NgramReport trimmed{rep.method, rep.split, rep.n, {}};
        const std::size_t total = rep.entries.size();
        for (std::size_t i = 0; i < total; ++i) {
          if (i < kNgramTop || i + kNgramTop >= total) {
            const auto& e = rep.entries[i];
            csv::write_row(summary, {rep.method, rep.split, std::to_string(n), std::to_string(i + 1), e.ngram,
                                     format_double(e.mean_joint_score), std::to_string(e.count),
                                     format_double(missing_fill(e))});
            trimmed.entries.push_back(e);
          }
        }
        scatter.push_back(std::move(trimmed));
      }
    }
    export_plot_data(std::span<const NgramReport>(scatter), workdir_path(config, "report_ngrams.csv"));
  }

  // Token deletion on label-1 evaluation documents.
  std::vector<DeletionCurve> curves;
  if (has_labels(data.eval)) {
    std::size_t max_step = 0;
    for (auto n : config.deletion_steps) max_step = std::max(max_step, n);
    for (const auto& g : importances) {
      std::vector<std::size_t> steps;
      for (auto n : config.deletion_steps) {
        if (n <= g.entries.size()) steps.push_back(n);
      }
      if (steps.size() < config.deletion_steps.size()) {
        notes.push_back(g.label() + " ranks only " + std::to_string(g.entries.size()) +
                        " tokens; larger deletion steps skipped");
      }
      curves.push_back(deletion_eval(model, g, data.eval, data.table, steps));
    }
    const Vocabulary vocab = Vocabulary::build(data.eval);
    std::vector<std::string> pool;
    for (const auto& t : vocab.tokens()) {
      if (vocab.frequency(t) >= config.min_count) pool.push_back(t);
    }
    std::vector<std::size_t> steps;
    for (auto n : config.deletion_steps) {
      if (n <= pool.size()) steps.push_back(n);
    }
    const auto ranked = random_ranking(pool, derive_seed(config.seed, kStreamRandomDeletion));
    curves.push_back(deletion_eval_ranked(model, ranked, data.eval, data.table, steps, "random", "eval"));
  } else {
    notes.push_back("evaluation split has no labels; deletion curves skipped");
  }
  export_plot_data(std::span<const DeletionCurve>(curves), workdir_path(config, "report_deletion.csv"));

  // Score correlation across tables.
  std::optional<CorrelationMatrix> correlation;
  try {
    correlation = score_correlation(importances, config.min_count);
    export_correlation(*correlation, workdir_path(config, "report_correlation.csv"));
  } catch (const Error& e) {
    notes.push_back(std::string("correlation matrix unavailable: ") + e.what());
  }

  // Case sheets highlighted with LRP on the surrogate, or permutation deltas without it.
  HighlightOptions opts;
  ExplainConfig ec;
  ec.target_class = config.target_class;
  ec.lrp = config.lrp;
  const ModelBundle models{&model, params ? &*params : nullptr};
  const Method case_method = params ? Method::lrp : Method::permutation;
  auto sheet = [&](const Corpus& corpus, CaseKind kind, const std::string& file, const std::string& title) {
    if (!has_labels(corpus)) {
      notes.push_back(file + " skipped: split has no labels");
      return;
    }
    const auto rows = case_sheets({}, corpus, kind, config.case_limit, opts);
    std::vector<RelevanceMap> maps;
    HighlightOptions local = opts;
    local.title = title + " (" + to_string(case_method) + ")";
    for (const auto& r : rows.rows) {
      const Document* doc = corpus.find(r.doc_id);
      maps.push_back(explain_document(case_method, models, *doc, data.table, ec));
      if (params) local.surrogate_scores[doc->id] = cnn_predict(*params, doc->tokens, data.table).probability;
    }
    const auto full = case_sheets(maps, corpus, kind, config.case_limit, local);
    write_text(workdir_path(config, file), render_case_sheet_html(full, local));
  };
  sheet(train, CaseKind::true_positive, "report_case_tp.html", "Training records");
  sheet(eval, CaseKind::false_positive, "report_case_fp.html", "Evaluation records");
  sheet(eval, CaseKind::false_negative, "report_case_fn.html", "Evaluation records");

  // Index page.
  std::ostringstream idx;
  idx << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>textlrp report</title>\n"
      << "<style>body{font-family:sans-serif;margin:1.5em}table{border-collapse:collapse;margin-bottom:1em}"
      << "th,td{border:1px solid #999;padding:3px 6px}</style></head>\n<body>\n<h1>Explainability report</h1>\n";
  for (Split s : kSplitOrder) {
    if (!has_labels(data.split(s))) continue;
    const auto c = eval_confusion(model, data.split(s), data.table);
    idx << "<h2>Black box vs actual (" << to_string(s) << ", n=" << c.total() << ")</h2>\n"
        << html_table({"", "pred=0", "pred=1"}, confusion_rows(c, "actual"));
  }
  if (params) {
    for (Split s : kSplitOrder) {
      const Corpus& corpus = split_corpus(s);
      const auto preds = predict_surrogate(*params, corpus, data.table, config.workers);
      std::vector<int> cnn_labels;
      for (const auto& p : preds) cnn_labels.push_back(p.label);
      const auto fid = surrogate_fidelity(cnn_labels, predicted_labels(corpus), {});
      idx << "<h2>Surrogate vs black box (" << to_string(s) << ", n=" << corpus.size() << ")</h2>\n"
          << html_table({"", "cnn=0", "cnn=1"}, confusion_rows(fid.vs_blackbox, "blackbox"));
    }
  }
  {
    std::vector<std::string> header{"rank"};
    for (const auto& g : importances) header.push_back(g.label());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < kTopTokens; ++r) {
      std::vector<std::string> row{std::to_string(r + 1)};
      for (const auto& g : importances) {
        row.push_back(r < g.entries.size() ? g.entries[r].token + " " + format_fixed(g.entries[r].normalized_score, 2)
                                           : "");
      }
      rows.push_back(std::move(row));
    }
    idx << "<h2>Top tokens (normalized mean relevance, min count " << config.min_count << ")</h2>\n"
        << html_table(header, rows);
  }
  if (!curves.empty()) {
    std::vector<std::string> header{"n removed"};
    for (const auto& c : curves) header.push_back(c.method + ":" + c.split);
    std::vector<std::vector<std::string>> rows;
    for (auto n : config.deletion_steps) {
      std::vector<std::string> row{std::to_string(n)};
      for (const auto& c : curves) {
        auto it = std::find_if(c.points.begin(), c.points.end(), [&](const auto& p) { return p.n_removed == n; });
        row.push_back(it == c.points.end() ? "" : format_fixed(it->recall_drop, 3));
      }
      rows.push_back(std::move(row));
    }
    idx << "<h2>Decrease in class-1 recall after removing top-n tokens</h2>\n" << html_table(header, rows);
  }
  if (correlation) {
    std::vector<std::string> header{""};
    header.insert(header.end(), correlation->labels.begin(), correlation->labels.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < correlation->labels.size(); ++i) {
      std::vector<std::string> row{correlation->labels[i]};
      for (std::size_t j = 0; j < correlation->labels.size(); ++j) {
        row.push_back(format_fixed(correlation->values(i, j), 2));
      }
      rows.push_back(std::move(row));
    }
    idx << "<h2>Correlation of scores</h2>\n" << html_table(header, rows);
  }
  idx << "<h2>Files</h2>\n<ul>\n";
  for (const char* f : {"report_importance.csv", "report_top_tokens.csv", "report_ngrams.csv", "report_ngram_summary.csv",
                        "report_deletion.csv", "report_correlation.csv", "report_case_tp.html", "report_case_fp.html",
                        "report_case_fn.html"}) {
    if (fs::exists(workdir_path(config, f))) idx << "<li><a href=\"" << f << "\">" << f << "</a></li>\n";
  }
  idx << "</ul>\n";
  if (!notes.empty()) {
    idx << "<h2>Notes</h2>\n<ul>\n";
    for (const auto& n : notes) idx << "<li>" << html_escape(n) << "</li>\n";
    idx << "</ul>\n";
  }
  idx << "</body></html>\n";
  write_text(workdir_path(config, "report_index.html"), idx.str());
  for (const auto& n : notes) log << "note: " << n << '\n';
  log << "report written to " << workdir_path(config, "report_index.html") << '\n';
  update_manifest(config);
}

void cmd_oov_report(const PipelineConfig& config, std::ostream& log) {
  config.validate();
  const auto data = load_pipeline_data(config);
  fs::create_directories(config.workdir);
  for (Split s : kSplitOrder) {
    const auto report = oov_report(data.split(s), data.table);
    {
      std::ofstream out(workdir_path(config, "oov_" + to_string(s) + ".csv"), std::ios::binary);
      csv::write_row(out, {"doc_id", "oov_tokens", "total_tokens", "oov_rate"});
      for (const auto& d : report.documents) {
        csv::write_row(out, {d.doc_id, std::to_string(d.oov_tokens), std::to_string(d.total_tokens), format_double(d.rate)});
      }
    }
    {
      std::ofstream out(workdir_path(config, "oov_tokens_" + to_string(s) + ".csv"), std::ios::binary);
      csv::write_row(out, {"token", "frequency"});
      for (const auto& [token, n] : report.oov_frequencies) csv::write_row(out, {token, std::to_string(n)});
    }
    std::size_t with_oov = 0;
    for (const auto& d : report.documents) with_oov += d.oov_tokens > 0 ? 1 : 0;
    log << to_string(s) << ": " << report.oov_tokens << " of " << report.total_tokens << " tokens out of vocabulary ("
        << format_fixed(100.0 * report.corpus_rate(), 2) << "%), " << with_oov << " of " << report.documents.size()
        << " documents affected, " << report.oov_frequencies.size() << " distinct OOV tokens\n";
  }
  update_manifest(config);
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"train_docs", "eval_docs", "bad_triggers", "good_triggers", "negation_words", "neutral_vocab",
                "oov_vocab", "negation_rate", "min_length", "max_length", "min_triggers", "max_triggers", "lean_skew",
                "embedding_dim", "trigger_strength", "lean_strength", "noise", "seed"},
               "synthetic spec");
  SyntheticSpec s;
  try {
    s.train_docs = j.value("train_docs", s.train_docs);
    s.eval_docs = j.value("eval_docs", s.eval_docs);
    s.bad_triggers = j.value("bad_triggers", s.bad_triggers);
    s.good_triggers = j.value("good_triggers", s.good_triggers);
    s.negation_words = j.value("negation_words", s.negation_words);
    s.neutral_vocab = j.value("neutral_vocab", s.neutral_vocab);
    s.oov_vocab = j.value("oov_vocab", s.oov_vocab);
    s.negation_rate = j.value("negation_rate", s.negation_rate);
    s.min_length = j.value("min_length", s.min_length);
    s.max_length = j.value("max_length", s.max_length);
    s.min_triggers = j.value("min_triggers", s.min_triggers);
    s.max_triggers = j.value("max_triggers", s.max_triggers);
    s.lean_skew = j.value("lean_skew", s.lean_skew);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.trigger_strength = j.value("trigger_strength", s.trigger_strength);
    s.lean_strength = j.value("lean_strength", s.lean_strength);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid synthetic spec: ") + e.what());
  }
  return s;
}

nlohmann::ordered_json synthetic_spec_to_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["train_docs"] = s.train_docs;
  j["eval_docs"] = s.eval_docs;
  j["bad_triggers"] = s.bad_triggers;
  j["good_triggers"] = s.good_triggers;
  j["negation_words"] = s.negation_words;
  j["neutral_vocab"] = s.neutral_vocab;
  j["oov_vocab"] = s.oov_vocab;
  j["negation_rate"] = s.negation_rate;
  j["min_length"] = s.min_length;
  j["max_length"] = s.max_length;
  j["min_triggers"] = s.min_triggers;
  j["max_triggers"] = s.max_triggers;
  j["lean_skew"] = s.lean_skew;
  j["embedding_dim"] = s.embedding_dim;
  j["trigger_strength"] = s.trigger_strength;
  j["lean_strength"] = s.lean_strength;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  return j;
}

void cmd_synth(const SyntheticSpec& spec, const std::string& out_dir, std::ostream& log) {
  spec.validate();
  const auto data = generate_synthetic(spec);
  write_synthetic(data, out_dir);
  write_text((fs::path(out_dir) / "synth_spec.json").string(), synthetic_spec_to_json(spec).dump(2) + "\n");
  PipelineConfig config;
  config.train_corpus = "train.csv";
  config.eval_corpus = "eval.csv";
  config.embeddings = "embeddings.txt";
  config.workdir = "work";
  config.seed = spec.seed;
  write_text((fs::path(out_dir) / "pipeline.json").string(), config.to_json().dump(2) + "\n");
  log << "wrote " << data.train.size() << " train and " << data.eval.size() << " eval documents, "
      << data.table.size() << " embeddings (dim " << data.table.dim() << ") to " << out_dir << '\n';
}

}  // namespace textlrp
