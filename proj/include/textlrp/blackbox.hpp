#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"

namespace textlrp {

enum class LossKind { hinge, logistic };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// Sigmoid calibration p = sigmoid(a * margin + b).
struct PlattPair {
  double a = 1.0;
  double b = 0.0;
  bool operator==(const PlattPair&) const = default;
};

// Linear margin classifier on averaged embeddings.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  LossKind loss_kind = LossKind::logistic;
  std::optional<PlattPair> platt;
  FeaturizeOptions featurize;

  std::size_t dim() const { return weights.size(); }
  double margin(std::span<const double> features) const;
  double probability(std::span<const double> features) const;

  bool operator==(const LinearModel& o) const {
    return weights == o.weights && bias == o.bias && loss_kind == o.loss_kind && platt == o.platt &&
           featurize.skip_oov == o.featurize.skip_oov;
  }
};

double sigmoid(double x);

struct LinearTrainConfig {
  LossKind loss_kind = LossKind::logistic;
  int epochs = 20;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  // false keeps one fixed shuffle for every epoch.
  bool reshuffle = true;
  FeaturizeOptions featurize;
};

struct LinearTrainLog {
  // Regularized training objective after each epoch.
  std::vector<double> epoch_loss;
};

LinearModel train_linear(const Corpus& corpus, const EmbeddingTable& table, const LinearTrainConfig& config,
                         LinearTrainLog* log = nullptr);

// Fits (a, b) by Newton's method on prior-smoothed targets.
PlattPair fit_platt(std::span<const double> margins, std::span<const int> labels);

double predict_proba(const LinearModel& model, std::span<const std::string> tokens, const EmbeddingTable& table);
inline double predict_proba(const LinearModel& model, const Document& doc, const EmbeddingTable& table) {
  return predict_proba(model, doc.tokens, table);
}
inline int predicted_class(double probability) { return probability >= 0.5 ? 1 : 0; }

struct TokenDelta {
  std::string token;
  std::size_t position = 0;
  // p(doc) - p(doc without this occurrence), positive class.
  double delta = 0.0;
};

std::vector<TokenDelta> permutation_importance(const LinearModel& model, const Document& doc,
                                               const EmbeddingTable& table);

// cells[actual][predicted].
struct Confusion {
  std::array<std::array<std::size_t, 2>, 2> cells{};

  static Confusion from_labels(std::span<const int> actual, std::span<const int> predicted);

  std::size_t total() const { return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1]; }
  double precision(int cls = 1) const;
  double recall(int cls = 1) const;
  double f1(int cls = 1) const;
  double macro_f1() const { return 0.5 * (f1(0) + f1(1)); }
  double accuracy() const;
};

Confusion eval_confusion(const LinearModel& model, const Corpus& corpus, const EmbeddingTable& table);

// Predicted labels/probabilities for every document.
Corpus label_with_model(const LinearModel& model, const Corpus& corpus, const EmbeddingTable& table);

// Versioned JSON checkpoint.
std::string linear_model_to_json(const LinearModel& model);
LinearModel linear_model_from_json(const std::string& text);
void save_linear_model(const LinearModel& model, const std::string& path);
LinearModel load_linear_model(const std::string& path);

}  // namespace textlrp
