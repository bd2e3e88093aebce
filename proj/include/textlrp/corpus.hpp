#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace textlrp {

// Lowercases ASCII letters and splits on every character outside
// [a-z0-9']. Non-ASCII bytes act as separators too.
std::vector<std::string> tokenize(std::string_view raw_text);

struct Document {
  std::string id;
  std::string raw_text;
  std::vector<std::string> tokens;
  std::optional<int> label;
  std::optional<int> predicted_label;
  std::optional<double> predicted_score;

  bool operator==(const Document&) const = default;
};

// Immutable, ordered collection of documents with unique ids.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const { return documents_; }
  const std::map<int, std::size_t>& class_counts() const { return class_counts_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }
  const Document& operator[](std::size_t i) const { return documents_[i]; }

  // nullptr when absent.
  const Document* find(std::string_view id) const;

  auto begin() const { return documents_.begin(); }
  auto end() const { return documents_.end(); }

  // New snapshot with predictions attached; sizes must match.
  Corpus with_predictions(std::span<const int> labels, std::span<const double> scores) const;

  bool operator==(const Corpus& other) const { return documents_ == other.documents_; }

 private:
  std::vector<Document> documents_;
  std::map<int, std::size_t> class_counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Concatenation; ids must stay unique.
Corpus merge(const Corpus& a, const Corpus& b);

class Vocabulary {
 public:
  // Ids follow first appearance in corpus order.
  static Vocabulary build(const Corpus& corpus);

  std::optional<std::size_t> id(std::string_view token) const;
  std::size_t frequency(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const { return id(token).has_value(); }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> frequencies_;
  std::unordered_map<std::string, std::size_t> ids_;
};

enum class CorpusFormat { csv, jsonl };

CorpusFormat corpus_format_from_path(const std::string& path);

struct LoadOptions {
  // Read a 1..5 `stars` column and map it onto binary labels.
  bool star_labels = false;
};

Corpus load_corpus(const std::string& path, CorpusFormat format, const LoadOptions& options = {});
void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format);

// Equal-sized random draw per label; result keeps the source order.
Corpus stratified_sample(const Corpus& corpus, std::size_t n, std::uint64_t seed);

// 1,2 -> 1 (bad); 4,5 -> 0 (good); 3 -> nullopt.
std::optional<int> map_star_labels(int star);

}  // namespace textlrp
