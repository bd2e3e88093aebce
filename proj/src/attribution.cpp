#include "textlrp/attribution.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "textlrp/error.hpp"
#include "textlrp/parallel.hpp"

namespace textlrp {

std::string to_string(Method method) {
  switch (method) {
    case Method::lrp: return "lrp";
    case Method::gbsa: return "gbsa";
    case Method::ig: return "ig";
    case Method::permutation: return "permutation";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "lrp") return Method::lrp;
  if (name == "gbsa") return Method::gbsa;
  if (name == "ig") return Method::ig;
  if (name == "permutation") return Method::permutation;
  throw ValidationError("unknown method '" + name + "' (expected lrp, gbsa, ig or permutation)");
}

double RelevanceMap::total() const {
  double s = 0.0;
  for (const auto& t : scores) s += t.relevance;
  return s;
}

void LrpConfig::validate() const {
  if (!(epsilon > 0.0)) throw ValidationError("lrp epsilon must be positive");
}

namespace {

double stabilize(double z, double epsilon) { return z + (z >= 0.0 ? epsilon : -epsilon); }

void check_target(int target_class) {
  if (target_class != 0 && target_class != 1) throw ValidationError("target class must be 0 or 1");
}

}  // namespace

std::vector<double> lrp_epsilon_linear(std::span<const double> inputs, std::span<const double> weights, double bias,
                                       double relevance_out, double epsilon) {
  if (inputs.size() != weights.size()) throw Error("lrp: inputs and weights differ in length");
  double z = bias;
  for (std::size_t i = 0; i < inputs.size(); ++i) z += inputs[i] * weights[i];
  std::vector<double> out(inputs.size(), 0.0);
  const double denom = stabilize(z, epsilon);
  if (denom == 0.0) return out;
  const double scale = relevance_out / denom;
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = inputs[i] * weights[i] * scale;
  return out;
}

LrpTrace lrp_trace(const CnnParams& params, const ActivationCache& cache, int target_class, const LrpConfig& config) {
  check_target(target_class);
  if (cache.train_mode) throw Error("lrp: cache must come from an eval-mode forward");
  const Matrix& input = cache.input.rows;
  if (input.rows != params.config.pad_length || input.cols != params.config.dim ||
      cache.convs.size() != params.convs.size() || cache.pooled.size() != params.total_filters()) {
    throw Error("lrp: activation cache does not match parameters");
  }
  const auto c = static_cast<std::size_t>(target_class);
  const std::size_t total = params.total_filters();
  LrpTrace trace;
  trace.cells = Matrix(input.rows, input.cols);
  trace.filter_relevance.assign(total, 0.0);

  // Dense layer: the explained score is the raw target logit.
  const double logit = cache.logits[c];
  const double dense_denom = stabilize(logit, config.epsilon);
  if (dense_denom != 0.0) {
    const double scale = logit / dense_denom;
    for (std::size_t k = 0; k < total; ++k) {
      trace.filter_relevance[k] = cache.dense_input(k) * params.dense_weights(k, c) * scale;
    }
  }

  // Max pool routes each filter's relevance to its argmax window; the conv
  // layer spreads it over that window's cells.
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.convs.size(); ++b) {
    const auto& bank = params.convs[b];
    const auto& act = cache.convs[b];
    const std::size_t width = bank.size * input.cols;
    for (std::size_t f = 0; f < bank.biases.size(); ++f, ++k) {
      const double r = trace.filter_relevance[k];
      if (r == 0.0) continue;
      const std::size_t p = act.argmax[f];
      const double denom = stabilize(act.pre(p, f), config.epsilon);
      if (denom == 0.0) continue;
      const double scale = r / denom;
      const double* w = bank.weights.data.data() + f * width;
      const double* x = input.data.data() + p * input.cols;
      double* out = trace.cells.data.data() + p * input.cols;
      for (std::size_t i = 0; i < width; ++i) out[i] += x[i] * w[i] * scale;
    }
  }
  return trace;
}

std::vector<TokenScore> pool_token_relevance(const DocMatrix& matrix, const Matrix& cells) {
  std::vector<TokenScore> scores;
  scores.reserve(matrix.real_rows());
  for (std::size_t r = 0; r < matrix.real_rows(); ++r) {
    double s = 0.0;
    for (double v : cells.row(r)) s += v;
    scores.push_back({matrix.tokens[r], matrix.token_index[r], s});
  }
  return scores;
}

RelevanceMap lrp_explain(const CnnParams& params, const ActivationCache& cache, int target_class,
                         const LrpConfig& config, const std::string& doc_id) {
  config.validate();
  const auto trace = lrp_trace(params, cache, target_class, config);
  RelevanceMap map;
  map.doc_id = doc_id;
  map.method = Method::lrp;
  map.target_class = target_class;
  map.scores = pool_token_relevance(cache.input, trace.cells);
  map.model_output = cache.logits[static_cast<std::size_t>(target_class)];
  map.truncated = cache.input.truncated;
  return map;
}

RelevanceMap gbsa_explain(const CnnParams& params, const ActivationCache& cache, int target_class,
                          const std::string& doc_id) {
  check_target(target_class);
  Matrix grad = cnn_backward_gradients(params, cache, target_class);
  for (double& g : grad.data) g *= g;
  RelevanceMap map;
  map.doc_id = doc_id;
  map.method = Method::gbsa;
  map.target_class = target_class;
  map.scores = pool_token_relevance(cache.input, grad);
  map.model_output = cache.logits[static_cast<std::size_t>(target_class)];
  map.truncated = cache.input.truncated;
  return map;
}

Matrix ig_cells(const CnnParams& params, const Matrix& input, int target_class, std::size_t steps) {
  check_target(target_class);
  if (steps < 1) throw ValidationError("integrated gradients needs at least one step");
  Matrix sum(input.rows, input.cols);
  Matrix point(input.rows, input.cols);
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < input.data.size(); ++i) point.data[i] = alpha * input.data[i];
    const Matrix grad = cnn_input_gradient(params, point, target_class);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += grad.data[i];
  }
  const double inv = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] *= input.data[i] * inv;
  return sum;
}

RelevanceMap ig_explain(const CnnParams& params, const DocMatrix& matrix, int target_class, std::size_t steps,
                        const std::string& doc_id) {
  const Matrix cells = ig_cells(params, matrix.rows, target_class, steps);
  RelevanceMap map;
  map.doc_id = doc_id;
  map.method = Method::ig;
  map.target_class = target_class;
  map.scores = pool_token_relevance(matrix, cells);
  map.model_output = cnn_score(params, matrix.rows, target_class);
  map.truncated = matrix.truncated;
  return map;
}

Matrix fd_gradient(const CnnParams& params, const Matrix& input, int target_class, double h) {
  check_target(target_class);
  if (!(h > 0.0)) throw ValidationError("finite-difference step h must be positive");
  const double base = cnn_score(params, input, target_class);
  Matrix grad(input.rows, input.cols);
  Matrix shifted = input;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    shifted.data[i] = input.data[i] + h;
    grad.data[i] = (cnn_score(params, shifted, target_class) - base) / h;
    shifted.data[i] = input.data[i];
  }
  return grad;
}

RelevanceMap permutation_explain(const LinearModel& model, const Document& doc, const EmbeddingTable& table,
                                 int target_class) {
  check_target(target_class);
  RelevanceMap map;
  map.doc_id = doc.id;
  map.method = Method::permutation;
  map.target_class = target_class;
  const double p1 = predict_proba(model, doc, table);
  map.model_output = target_class == 1 ? p1 : 1.0 - p1;
  for (const auto& d : permutation_importance(model, doc, table)) {
    map.scores.push_back({d.token, d.position, target_class == 1 ? d.delta : -d.delta});
  }
  return map;
}

RelevanceMap explain_document(Method method, const ModelBundle& models, const Document& doc,
                              const EmbeddingTable& table, const ExplainConfig& config) {
  if (method == Method::permutation) {
    if (!models.blackbox) throw ValidationError("permutation explanations need the black-box model");
    return permutation_explain(*models.blackbox, doc, table, config.target_class);
  }
  if (!models.surrogate) throw ValidationError(to_string(method) + " explanations need the surrogate network");
  const CnnParams& params = *models.surrogate;
  const DocMatrix matrix = embed_pad(doc, table, params.config.pad_length);
  switch (method) {
    case Method::lrp:
      return lrp_explain(params, cnn_forward(params, matrix), config.target_class, config.lrp, doc.id);
    case Method::gbsa:
      return gbsa_explain(params, cnn_forward(params, matrix), config.target_class, doc.id);
    case Method::ig:
      return ig_explain(params, matrix, config.target_class, config.ig_steps, doc.id);
    case Method::permutation: break;
  }
  throw ValidationError("unsupported method");
}

std::vector<RelevanceMap> explain_corpus(Method method, const ModelBundle& models, const Corpus& corpus,
                                         const EmbeddingTable& table, const ExplainConfig& config) {
  check_target(config.target_class);
  std::vector<const Document*> selected;
  for (const auto& doc : corpus) {
    if (config.positive_only) {
      if (!doc.predicted_label) {
        throw ValidationError("document '" + doc.id + "' has no predicted label; cannot filter positives");
      }
      if (*doc.predicted_label != 1) continue;
    }
    selected.push_back(&doc);
  }
  std::vector<RelevanceMap> maps(selected.size());
  parallel_for(selected.size(), config.workers,
               [&](std::size_t i) { maps[i] = explain_document(method, models, *selected[i], table, config); });
  return maps;
}

std::string relevance_map_to_json(const RelevanceMap& map) {
  nlohmann::ordered_json j;
  j["doc_id"] = map.doc_id;
  j["method"] = to_string(map.method);
  j["target_class"] = map.target_class;
  j["model_output"] = map.model_output;
  auto scores = nlohmann::ordered_json::array();
  for (const auto& s : map.scores) {
    nlohmann::ordered_json e;
    e["token"] = s.token;
    e["pos"] = s.position;
    e["r"] = s.relevance;
    scores.push_back(std::move(e));
  }
  j["scores"] = std::move(scores);
  if (map.truncated > 0) j["truncated"] = map.truncated;
  return j.dump();
}

RelevanceMap relevance_map_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    RelevanceMap map;
    map.doc_id = j.at("doc_id").get<std::string>();
    map.method = method_from_string(j.at("method").get<std::string>());
    map.target_class = j.at("target_class").get<int>();
    map.model_output = j.at("model_output").get<double>();
    for (const auto& e : j.at("scores")) {
      map.scores.push_back({e.at("token").get<std::string>(), e.at("pos").get<std::size_t>(), e.at("r").get<double>()});
    }
    map.truncated = j.value("truncated", std::size_t{0});
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed relevance map: ") + e.what());
  }
}

void write_relevance_jsonl(std::span<const RelevanceMap> maps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& m : maps) out << relevance_map_to_json(m) << '\n';
}

std::vector<RelevanceMap> read_relevance_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<RelevanceMap> maps;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      maps.push_back(relevance_map_from_json(line));
    } catch (const Error& e) {
      throw Error(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return maps;
}

}  // namespace textlrp
