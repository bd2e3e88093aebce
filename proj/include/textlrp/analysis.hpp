#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "textlrp/attribution.hpp"
#include "textlrp/blackbox.hpp"
#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"
#include "textlrp/matrix.hpp"

namespace textlrp {

struct ImportanceEntry {
  std::string token;
  double mean_relevance = 0.0;
  std::size_t count = 0;
  double normalized_score = 0.0;
  bool operator==(const ImportanceEntry&) const = default;
};

// Corpus-level token importance. Entries are ranked by descending mean
// relevance, ties by token.
struct GlobalImportance {
  std::string method;
  std::string split;
  int target_class = 1;
  std::size_t min_count = 0;
  std::vector<ImportanceEntry> entries;

  const ImportanceEntry* find(const std::string& token) const;
  std::vector<std::string> top_tokens(std::size_t n) const;
  std::string label() const { return split.empty() ? method : method + ":" + split; }
  bool operator==(const GlobalImportance&) const = default;
};

enum class AggregationMode {
  // Every token occurrence counts once.
  per_occurrence,
  // Each document contributes the mean of its occurrences once.
  per_document,
};

// Throws on an empty list or mixed method/target class. When `vocab` is
// given, tokens outside it are ignored.
GlobalImportance aggregate_global(std::span<const RelevanceMap> maps, std::size_t min_count,
                                  const Vocabulary* vocab = nullptr,
                                  AggregationMode mode = AggregationMode::per_occurrence,
                                  const std::string& split = {});

struct NgramInstance {
  std::string doc_id;
  double joint_score = 0.0;
  // -1 when the document carries no predicted label.
  int predicted_label = -1;
  bool operator==(const NgramInstance&) const = default;
};

struct NgramEntry {
  std::string ngram;
  double mean_joint_score = 0.0;
  std::size_t count = 0;
  std::vector<NgramInstance> instances;
  bool operator==(const NgramEntry&) const = default;
};

struct NgramReport {
  std::string method;
  std::string split;
  std::size_t n = 1;
  std::vector<NgramEntry> entries;
  bool operator==(const NgramReport&) const = default;
};

NgramReport ngram_scores(std::span<const RelevanceMap> maps, const Corpus& corpus, std::size_t n,
                         std::size_t min_count, const std::string& split = {});

struct DeletionPoint {
  std::size_t n_removed = 0;
  double recall = 0.0;
  double recall_drop = 0.0;
  bool operator==(const DeletionPoint&) const = default;
};

struct DeletionCurve {
  std::string method;
  std::string split;
  std::vector<DeletionPoint> points;
  bool operator==(const DeletionCurve&) const = default;
};

// Removes the top-n tokens from every label-1 document and re-scores with the
// black box. Drops are relative to the unmodified recall.
DeletionCurve deletion_eval(const LinearModel& model, const GlobalImportance& importance, const Corpus& corpus,
                            const EmbeddingTable& table, std::span<const std::size_t> steps);

DeletionCurve deletion_eval_ranked(const LinearModel& model, std::span<const std::string> ranked_tokens,
                                   const Corpus& corpus, const EmbeddingTable& table,
                                   std::span<const std::size_t> steps, std::string method, std::string split);

// Random ranking of `pool` for the uniform-deletion baseline.
std::vector<std::string> random_ranking(std::span<const std::string> pool, std::uint64_t seed);

enum class CorrelationKind { pearson, spearman };

struct CorrelationMatrix {
  std::vector<std::string> labels;
  Matrix values;
};

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

// Pairwise correlation over tokens present with count >= min_count in both tables.
CorrelationMatrix score_correlation(std::span<const GlobalImportance> importances, std::size_t min_count,
                                    CorrelationKind kind = CorrelationKind::pearson);

struct FidelityReport {
  Confusion vs_blackbox;
  std::optional<Confusion> vs_actual;
  double f1_blackbox = 0.0;
  std::optional<double> f1_actual;
};

// `actual` may be empty when labels are unavailable.
FidelityReport surrogate_fidelity(std::span<const int> surrogate_predictions, std::span<const int> blackbox_predictions,
                                  std::span<const int> actual);

}  // namespace textlrp
