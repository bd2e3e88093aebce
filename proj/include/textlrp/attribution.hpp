#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textlrp/blackbox.hpp"
#include "textlrp/cnn.hpp"
#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"
#include "textlrp/matrix.hpp"

namespace textlrp {

enum class Method { lrp, gbsa, ig, permutation };

std::string to_string(Method method);
// Throws ValidationError for an unknown name.
Method method_from_string(const std::string& name);

struct TokenScore {
  std::string token;
  std::size_t position = 0;
  double relevance = 0.0;
  bool operator==(const TokenScore&) const = default;
};

// Per-token attribution for one document, method and target class.
struct RelevanceMap {
  std::string doc_id;
  Method method = Method::lrp;
  int target_class = 1;
  std::vector<TokenScore> scores;
  // The explained quantity: target logit for network methods, target-class
  // probability for permutation.
  double model_output = 0.0;
  // Tokens beyond the padding length that received no relevance.
  std::size_t truncated = 0;

  double total() const;
  bool operator==(const RelevanceMap&) const = default;
};

struct LrpConfig {
  double epsilon = 0.01;
  void validate() const;
};

// Epsilon rule for one linear unit: R_i = x_i w_i / (z + eps * sign(z)) * R_out,
// z = sum_i x_i w_i + bias, sign(0) = +1. A zero denominator yields zeros.
std::vector<double> lrp_epsilon_linear(std::span<const double> inputs, std::span<const double> weights, double bias,
                                       double relevance_out, double epsilon);

// Cell-level LRP result; `filter_relevance` is what each pooled unit received.
struct LrpTrace {
  Matrix cells;
  std::vector<double> filter_relevance;
};

LrpTrace lrp_trace(const CnnParams& params, const ActivationCache& cache, int target_class, const LrpConfig& config);

RelevanceMap lrp_explain(const CnnParams& params, const ActivationCache& cache, int target_class,
                         const LrpConfig& config, const std::string& doc_id = {});

// Squared input partials summed per token.
RelevanceMap gbsa_explain(const CnnParams& params, const ActivationCache& cache, int target_class,
                          const std::string& doc_id = {});

// Midpoint-rule integrated gradients from the all-zero baseline.
RelevanceMap ig_explain(const CnnParams& params, const DocMatrix& matrix, int target_class, std::size_t steps,
                        const std::string& doc_id = {});
Matrix ig_cells(const CnnParams& params, const Matrix& input, int target_class, std::size_t steps);

// Forward difference (F(x + h e_cell) - F(x)) / h for every cell.
Matrix fd_gradient(const CnnParams& params, const Matrix& input, int target_class, double h);

// Sums cell relevances over the embedding columns of each real row.
std::vector<TokenScore> pool_token_relevance(const DocMatrix& matrix, const Matrix& cells);

RelevanceMap permutation_explain(const LinearModel& model, const Document& doc, const EmbeddingTable& table,
                                 int target_class = 1);

struct ModelBundle {
  const LinearModel* blackbox = nullptr;
  const CnnParams* surrogate = nullptr;
};

struct ExplainConfig {
  int target_class = 1;
  // Keep only documents whose predicted label is 1.
  bool positive_only = true;
  LrpConfig lrp;
  std::size_t ig_steps = 64;
  std::size_t workers = 1;
};

RelevanceMap explain_document(Method method, const ModelBundle& models, const Document& doc,
                              const EmbeddingTable& table, const ExplainConfig& config);

std::vector<RelevanceMap> explain_corpus(Method method, const ModelBundle& models, const Corpus& corpus,
                                         const EmbeddingTable& table, const ExplainConfig& config);

// JSONL: {doc_id, method, target_class, model_output, scores:[{token, pos, r}]}
std::string relevance_map_to_json(const RelevanceMap& map);
RelevanceMap relevance_map_from_json(const std::string& line);
void write_relevance_jsonl(std::span<const RelevanceMap> maps, const std::string& path);
std::vector<RelevanceMap> read_relevance_jsonl(const std::string& path);

}  // namespace textlrp
