#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"
#include "textlrp/matrix.hpp"
#include "textlrp/rng.hpp"

namespace textlrp {

inline constexpr std::size_t kNumClasses = 2;

struct CnnConfig {
  std::size_t dim = 300;
  std::size_t pad_length = 100;
  std::vector<std::size_t> filter_sizes{2, 3, 4};
  std::size_t filters_per_size = 150;
  double dropout_rate = 0.4;
  std::uint64_t seed = 0;
  int epochs = 5;
  std::size_t batch_size = 30;
  double learning_rate = 0.05;

  // Throws ValidationError listing the first violated constraint.
  void validate() const;
  std::size_t total_filters() const { return filter_sizes.size() * filters_per_size; }
  bool operator==(const CnnConfig&) const = default;
};

// Filters of one height. Row f of `weights` is filter f flattened as
// (window row, embedding column).
struct ConvBank {
  std::size_t size = 0;
  Matrix weights;
  std::vector<double> biases;
  bool operator==(const ConvBank&) const = default;
};

struct CnnParams {
  CnnConfig config;
  std::vector<ConvBank> convs;
  // total_filters x 2
  Matrix dense_weights;
  std::array<double, kNumClasses> dense_biases{};

  // Glorot-uniform weights, zero biases.
  static CnnParams initialize(const CnnConfig& config);
  std::size_t total_filters() const { return dense_weights.rows; }
  bool operator==(const CnnParams&) const = default;
};

struct ConvActivation {
  std::size_t size = 0;
  // positions (L - size + 1) x filters
  Matrix pre;
  Matrix post;
  std::vector<double> max_value;
  std::vector<std::size_t> argmax;
};

struct ActivationCache {
  DocMatrix input;
  std::vector<ConvActivation> convs;
  // Max-pooled post-ReLU values, concatenated over banks.
  std::vector<double> pooled;
  // Inverted-dropout multipliers; empty in eval mode.
  std::vector<double> dropout_mask;
  // Raw class scores; no softmax.
  std::array<double, kNumClasses> logits{};
  bool train_mode = false;

  // Input of the dense layer (pooled times dropout mask).
  double dense_input(std::size_t k) const { return dropout_mask.empty() ? pooled[k] : pooled[k] * dropout_mask[k]; }
};

// Mask entries are 0 or 1/(1-rate).
std::vector<double> make_dropout_mask(std::size_t n, double rate, Rng& rng);

ActivationCache cnn_forward(const CnnParams& params, const DocMatrix& matrix, bool train_mode = false,
                            const std::vector<double>* dropout_mask = nullptr);

// Target-class logit only (eval mode).
double cnn_score(const CnnParams& params, const Matrix& input, int target_class);

// d logit[target] / d input, L x D. The cache must come from an eval-mode forward.
Matrix cnn_backward_gradients(const CnnParams& params, const ActivationCache& cache, int target_class);

// Same gradient without materializing an ActivationCache.
Matrix cnn_input_gradient(const CnnParams& params, const Matrix& input, int target_class);

struct CnnPrediction {
  double probability = 0.5;  // softmax probability of class 1
  int label = 0;
};

CnnPrediction cnn_predict(const CnnParams& params, std::span<const std::string> tokens, const EmbeddingTable& table);

struct CnnTrainLog {
  std::vector<double> epoch_loss;
};

// Cross-entropy on the documents' predicted labels, mini-batch SGD.
CnnParams cnn_train(const CnnConfig& config, const Corpus& corpus, const EmbeddingTable& table,
                    CnnTrainLog* log = nullptr);

std::string cnn_params_to_json(const CnnParams& params);
CnnParams cnn_params_from_json(const std::string& text);
void save_cnn_params(const CnnParams& params, const std::string& path);
CnnParams load_cnn_params(const std::string& path);

}  // namespace textlrp
