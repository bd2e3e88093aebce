#include "textlrp/blackbox.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "textlrp/error.hpp"
#include "textlrp/rng.hpp"

namespace textlrp {

std::string to_string(LossKind kind) { return kind == LossKind::hinge ? "hinge" : "logistic"; }

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "hinge") return LossKind::hinge;
  if (name == "logistic") return LossKind::logistic;
  throw ValidationError("unknown loss kind '" + name + "' (expected hinge or logistic)");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double LinearModel::margin(std::span<const double> features) const {
  if (features.size() != weights.size()) throw Error("feature dimension does not match model");
  return dot(weights, features) + bias;
}

double LinearModel::probability(std::span<const double> features) const {
  const double m = margin(features);
  return platt ? sigmoid(platt->a * m + platt->b) : sigmoid(m);
}

LinearModel train_linear(const Corpus& corpus, const EmbeddingTable& table, const LinearTrainConfig& config,
                         LinearTrainLog* log) {
  if (corpus.empty()) throw ValidationError("cannot train on an empty corpus");
  if (config.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (!(config.learning_rate > 0)) throw ValidationError("learning rate must be positive");
  if (config.l2 < 0) throw ValidationError("l2 must be non-negative");
  const std::size_t n = corpus.size();
  const std::size_t dim = table.dim();
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  features.reserve(n);
  labels.reserve(n);
  for (const auto& doc : corpus) {
    if (!doc.label) throw ValidationError("document '" + doc.id + "' has no label");
    features.push_back(featurize_avg(doc, table, config.featurize));
    labels.push_back(*doc.label);
  }
  if (corpus.class_counts().size() < 2) throw ValidationError("training corpus contains a single class");

  LinearModel model;
  model.weights.assign(dim, 0.0);
  model.loss_kind = config.loss_kind;
  model.featurize = config.featurize;

  auto objective = [&] {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double m = model.margin(features[i]);
      loss += config.loss_kind == LossKind::hinge ? std::max(0.0, 1.0 - y * m) : softplus(-y * m);
    }
    return loss / static_cast<double>(n) + 0.5 * config.l2 * dot(model.weights, model.weights);
  };

  Rng rng(derive_seed(config.seed, 0x11));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.reshuffle && epoch > 0) rng.shuffle(order);
    for (std::size_t i : order) {
      const double lr = config.learning_rate / (1.0 + config.learning_rate * config.l2 * static_cast<double>(step));
      ++step;
      const double y = labels[i] == 1 ? 1.0 : -1.0;
      const double m = model.margin(features[i]);
      // d loss / d margin
      double g = 0.0;
      if (config.loss_kind == LossKind::hinge) {
        g = y * m < 1.0 ? -y : 0.0;
      } else {
        g = -y * sigmoid(-y * m);
      }
      const double shrink = 1.0 - lr * config.l2;
      for (std::size_t d = 0; d < dim; ++d) model.weights[d] = shrink * model.weights[d] - lr * g * features[i][d];
      model.bias -= lr * g;
    }
    if (log) log->epoch_loss.push_back(objective());
  }

  if (config.loss_kind == LossKind::hinge) {
    std::vector<double> margins(n);
    for (std::size_t i = 0; i < n; ++i) margins[i] = model.margin(features[i]);
    model.platt = fit_platt(margins, labels);
  }
  return model;
}

PlattPair fit_platt(std::span<const double> margins, std::span<const int> labels) {
  if (margins.size() != labels.size() || margins.empty()) throw Error("platt: margins and labels must match");
  double pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg) += 1;
  const double hi = (pos + 1.0) / (pos + 2.0);
  const double lo = 1.0 / (neg + 2.0);
  std::vector<double> target(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) target[i] = labels[i] == 1 ? hi : lo;

  // Minimize sum of -t log p - (1-t) log(1-p), p = sigmoid(a m + b).
  auto nll = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double z = a * margins[i] + b;
      f += target[i] * softplus(-z) + (1.0 - target[i]) * softplus(z);
    }
    return f;
  };
  double a = 0.0;
  double b = std::log((pos + 1.0) / (neg + 1.0));
  double f = nll(a, b);
  constexpr double kSigma = 1e-12;
  for (int iter = 0; iter < 100; ++iter) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double p = sigmoid(a * margins[i] + b);
      const double w = p * (1.0 - p);
      const double d = p - target[i];
      h11 += margins[i] * margins[i] * w;
      h22 += w;
      h21 += margins[i] * w;
      g1 += margins[i] * d;
      g2 += d;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double na = a + step * da;
      const double nb = b + step * db;
      const double nf = nll(na, nb);
      if (nf < f + 1e-4 * step * gd) {
        a = na;
        b = nb;
        f = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return {a, b};
}

double predict_proba(const LinearModel& model, std::span<const std::string> tokens, const EmbeddingTable& table) {
  return model.probability(featurize_avg(tokens, table, model.featurize));
}

std::vector<TokenDelta> permutation_importance(const LinearModel& model, const Document& doc,
                                               const EmbeddingTable& table) {
  std::vector<TokenDelta> deltas;
  if (doc.tokens.empty()) return deltas;
  const double base = predict_proba(model, doc, table);
  std::vector<std::string> reduced;
  reduced.reserve(doc.tokens.size());
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    reduced.clear();
    for (std::size_t j = 0; j < doc.tokens.size(); ++j) {
      if (j != i) reduced.push_back(doc.tokens[j]);
    }
    deltas.push_back({doc.tokens[i], i, base - predict_proba(model, reduced, table)});
  }
  return deltas;
}

Confusion Confusion::from_labels(std::span<const int> actual, std::span<const int> predicted) {
  if (actual.size() != predicted.size()) throw ValidationError("label vectors differ in length");
  Confusion c;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if ((actual[i] != 0 && actual[i] != 1) || (predicted[i] != 0 && predicted[i] != 1)) {
      throw ValidationError("labels must be 0 or 1");
    }
    ++c.cells[actual[i]][predicted[i]];
  }
  return c;
}

double Confusion::precision(int cls) const {
  const double tp = static_cast<double>(cells[cls][cls]);
  const double predicted = static_cast<double>(cells[0][cls] + cells[1][cls]);
  return predicted == 0 ? 0.0 : tp / predicted;
}

double Confusion::recall(int cls) const {
  const double tp = static_cast<double>(cells[cls][cls]);
  const double actual = static_cast<double>(cells[cls][0] + cells[cls][1]);
  return actual == 0 ? 0.0 : tp / actual;
}

double Confusion::f1(int cls) const {
  const double tp = static_cast<double>(cells[cls][cls]);
  const double fp = static_cast<double>(cells[1 - cls][cls]);
  const double fn = static_cast<double>(cells[cls][1 - cls]);
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

double Confusion::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(cells[0][0] + cells[1][1]) / static_cast<double>(t);
}

Confusion eval_confusion(const LinearModel& model, const Corpus& corpus, const EmbeddingTable& table) {
  std::vector<int> actual, predicted;
  for (const auto& doc : corpus) {
    if (!doc.label) throw ValidationError("document '" + doc.id + "' has no label");
    actual.push_back(*doc.label);
    predicted.push_back(predicted_class(predict_proba(model, doc, table)));
  }
  return Confusion::from_labels(actual, predicted);
}

Corpus label_with_model(const LinearModel& model, const Corpus& corpus, const EmbeddingTable& table) {
  std::vector<int> labels;
  std::vector<double> scores;
  labels.reserve(corpus.size());
  scores.reserve(corpus.size());
  for (const auto& doc : corpus) {
    const double p = predict_proba(model, doc, table);
    scores.push_back(p);
    labels.push_back(predicted_class(p));
  }
  return corpus.with_predictions(labels, scores);
}

std::string linear_model_to_json(const LinearModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["dim"] = model.dim();
  j["loss_kind"] = to_string(model.loss_kind);
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  if (model.platt) j["platt"] = {{"A", model.platt->a}, {"B", model.platt->b}};
  j["oov_skip"] = model.featurize.skip_oov;
  return j.dump(2) + "\n";
}

LinearModel linear_model_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1) throw Error("unsupported linear model format_version");
    LinearModel model;
    model.weights = j.at("weights").get<std::vector<double>>();
    if (model.weights.size() != j.at("dim").get<std::size_t>()) throw Error("linear model: weights length != dim");
    model.bias = j.at("bias").get<double>();
    model.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
    if (j.contains("platt") && !j["platt"].is_null()) {
      model.platt = PlattPair{j["platt"].at("A").get<double>(), j["platt"].at("B").get<double>()};
    }
    model.featurize.skip_oov = j.value("oov_skip", false);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed linear model checkpoint: ") + e.what());
  }
}

void save_linear_model(const LinearModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << linear_model_to_json(model);
}

LinearModel load_linear_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open linear model checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return linear_model_from_json(buf.str());
}

}  // namespace textlrp
