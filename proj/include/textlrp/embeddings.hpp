#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "textlrp/corpus.hpp"
#include "textlrp/matrix.hpp"

namespace textlrp {

// Token -> dense vector map. Absent tokens resolve to the zero vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim);

  // Keeps the first vector for a repeated token; returns false on a duplicate.
  bool add(std::string token, std::span<const double> vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  std::span<const double> lookup(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Number of duplicate lines skipped while loading.
  std::size_t duplicates_skipped() const { return duplicates_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<double> values_;
  std::vector<double> zero_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t duplicates_ = 0;
};

// Text vector format: `token v1 ... vD` per line, with an optional leading
// `COUNT DIM` header line.
EmbeddingTable load_embeddings(const std::string& path, std::optional<std::size_t> expected_dim = std::nullopt);
void save_embeddings(const EmbeddingTable& table, const std::string& path, bool with_header = true);

struct FeaturizeOptions {
  // Exclude OOV tokens from the averaging denominator.
  bool skip_oov = false;
};

std::vector<double> featurize_avg(std::span<const std::string> tokens, const EmbeddingTable& table,
                                  const FeaturizeOptions& options = {});
inline std::vector<double> featurize_avg(const Document& doc, const EmbeddingTable& table,
                                         const FeaturizeOptions& options = {}) {
  return featurize_avg(doc.tokens, table, options);
}

// Fixed-length L x D input for the surrogate network.
struct DocMatrix {
  Matrix rows;
  std::vector<bool> mask;
  // Row -> token position in the source document (real rows only).
  std::vector<std::size_t> token_index;
  // Tokens embedded in the real rows, in order.
  std::vector<std::string> tokens;
  // Tokens dropped because the document is longer than L.
  std::size_t truncated = 0;

  std::size_t length() const { return rows.rows; }
  std::size_t real_rows() const { return tokens.size(); }
};

DocMatrix embed_pad(std::span<const std::string> tokens, const EmbeddingTable& table, std::size_t pad_length);
inline DocMatrix embed_pad(const Document& doc, const EmbeddingTable& table, std::size_t pad_length) {
  return embed_pad(doc.tokens, table, pad_length);
}

struct OovReport {
  struct DocEntry {
    std::string doc_id;
    std::size_t oov_tokens = 0;
    std::size_t total_tokens = 0;
    double rate = 0.0;
  };
  std::vector<DocEntry> documents;
  // Sorted by descending frequency, then token.
  std::vector<std::pair<std::string, std::size_t>> oov_frequencies;
  std::size_t oov_tokens = 0;
  std::size_t total_tokens = 0;

  double corpus_rate() const {
    return total_tokens == 0 ? 0.0 : static_cast<double>(oov_tokens) / static_cast<double>(total_tokens);
  }
};

OovReport oov_report(const Corpus& corpus, const EmbeddingTable& table);

}  // namespace textlrp
