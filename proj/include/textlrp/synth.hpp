#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textlrp/corpus.hpp"
#include "textlrp/embeddings.hpp"

namespace textlrp {

// Generator settings for a labeled sentiment-like corpus with planted
// trigger tokens. Label 1 is the "bad" class.
struct SyntheticSpec {
  std::size_t train_docs = 10000;
  std::size_t eval_docs = 20000;
  std::vector<std::string> bad_triggers{"mediocre", "pathetic",     "lackluster", "confusing", "flavorless",
                                        "disappointing", "poor", "worse", "crappy", "rude"};
  std::vector<std::string> good_triggers{"delicious", "amazing", "friendly", "fresh",     "excellent",
                                         "wonderful", "perfect", "tasty",    "fantastic", "attentive"};
  std::vector<std::string> negation_words{"not", "never"};
  // Background words; each gets a random class lean.
  std::size_t neutral_vocab = 500;
  // Background words left out of the embedding table.
  std::size_t oov_vocab = 20;
  // Share of class-0 documents that contain a negated bad trigger.
  double negation_rate = 0.15;
  std::size_t min_length = 8;
  std::size_t max_length = 40;
  std::size_t min_triggers = 1;
  std::size_t max_triggers = 3;
  // How strongly background-word frequencies depend on the class.
  double lean_skew = 1.0;
  std::size_t embedding_dim = 24;
  // Offset of trigger embeddings along the shared sentiment direction.
  double trigger_strength = 1.5;
  // Offset per unit of background lean.
  double lean_strength = 0.25;
  // Per-coordinate noise of every embedding vector.
  double noise = 0.35;
  std::uint64_t seed = 7;

  // Throws ValidationError on overlapping trigger lists, bad rates or counts.
  void validate() const;
};

struct SyntheticData {
  Corpus train;
  Corpus eval;
  EmbeddingTable table;
  std::vector<std::string> neutral_tokens;
  std::vector<std::string> oov_tokens;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Writes train.csv, eval.csv and embeddings.txt into `dir`.
void write_synthetic(const SyntheticData& data, const std::string& dir);

}  // namespace textlrp
