#include "textlrp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "textlrp/error.hpp"
#include "textlrp/rng.hpp"

namespace textlrp {

void SyntheticSpec::validate() const {
  if (train_docs % 2 != 0 || eval_docs % 2 != 0) throw ValidationError("synth: document counts must be even");
  if (train_docs == 0) throw ValidationError("synth: train_docs must be positive");
  if (bad_triggers.empty() || good_triggers.empty()) throw ValidationError("synth: trigger lists must not be empty");
  std::set<std::string> seen;
  for (const auto* list : {&bad_triggers, &good_triggers, &negation_words}) {
    for (const auto& t : *list) {
      if (tokenize(t) != std::vector<std::string>{t}) throw ValidationError("synth: '" + t + "' is not a single token");
      if (!seen.insert(t).second) throw ValidationError("synth: token '" + t + "' appears in more than one list");
    }
  }
  if (negation_rate > 0 && negation_words.empty()) throw ValidationError("synth: negation needs negation words");
  if (!(negation_rate >= 0.0 && negation_rate <= 1.0)) throw ValidationError("synth: negation_rate must be in [0,1]");
  if (min_length < 1 || max_length < min_length) throw ValidationError("synth: invalid length range");
  if (min_triggers < 1 || max_triggers < min_triggers) throw ValidationError("synth: invalid trigger count range");
  if (max_triggers + 2 > min_length) throw ValidationError("synth: min_length too small for the trigger count");
  if (neutral_vocab < 1) throw ValidationError("synth: neutral_vocab must be positive");
  if (embedding_dim < 1) throw ValidationError("synth: embedding_dim must be positive");
  if (lean_skew < 0 || noise < 0) throw ValidationError("synth: lean_skew and noise must be non-negative");
}

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "gr"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string pseudo_word(Rng& rng) {
  std::string w;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  return w;
}

// Categorical sampler over cumulative weights.
class Sampler {
 public:
  explicit Sampler(const std::vector<double>& weights) {
    double s = 0.0;
    for (double w : weights) cumulative_.push_back(s += w);
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng vocab_rng(derive_seed(spec.seed, 1));
  std::set<std::string> taken(spec.bad_triggers.begin(), spec.bad_triggers.end());
  taken.insert(spec.good_triggers.begin(), spec.good_triggers.end());
  taken.insert(spec.negation_words.begin(), spec.negation_words.end());

  SyntheticData data;
  std::vector<std::string> background;
  const std::size_t background_size = spec.neutral_vocab + spec.oov_vocab;
  while (background.size() < background_size) {
    auto w = pseudo_word(vocab_rng);
    if (taken.insert(w).second) background.push_back(std::move(w));
  }
  std::vector<double> lean(background_size);
  for (double& l : lean) l = vocab_rng.uniform(-1.0, 1.0);
  data.neutral_tokens.assign(background.begin(), background.begin() + static_cast<std::ptrdiff_t>(spec.neutral_vocab));
  data.oov_tokens.assign(background.begin() + static_cast<std::ptrdiff_t>(spec.neutral_vocab), background.end());

  // Embeddings: shared sentiment direction plus isotropic noise.
  Rng embed_rng(derive_seed(spec.seed, 2));
  const std::size_t dim = spec.embedding_dim;
  std::vector<double> direction(dim);
  double norm = 0.0;
  for (double& v : direction) {
    v = embed_rng.normal();
    norm += v * v;
  }
  for (double& v : direction) v /= std::sqrt(norm);
  data.table = EmbeddingTable(dim);
  std::vector<double> vec(dim);
  auto add = [&](const std::string& token, double offset) {
    for (std::size_t d = 0; d < dim; ++d) vec[d] = offset * direction[d] + spec.noise * embed_rng.normal();
    data.table.add(token, vec);
  };
  for (const auto& t : spec.bad_triggers) add(t, spec.trigger_strength);
  for (const auto& t : spec.good_triggers) add(t, -spec.trigger_strength);
  for (const auto& t : spec.negation_words) add(t, 0.0);
  for (std::size_t i = 0; i < spec.neutral_vocab; ++i) add(background[i], spec.lean_strength * lean[i]);

  std::vector<double> w_bad(background_size), w_good(background_size);
  for (std::size_t i = 0; i < background_size; ++i) {
    w_bad[i] = std::exp(spec.lean_skew * lean[i]);
    w_good[i] = std::exp(-spec.lean_skew * lean[i]);
  }
  const Sampler bad_background(w_bad);
  const Sampler good_background(w_good);

  auto make_split = [&](std::size_t n_docs, const std::string& prefix, std::uint64_t stream) {
    Rng rng(derive_seed(spec.seed, stream));
    std::vector<Document> docs;
    docs.reserve(n_docs);
    std::vector<int> labels(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) labels[i] = i < n_docs / 2 ? 1 : 0;
    rng.shuffle(labels);
    const int width = static_cast<int>(std::to_string(n_docs).size());
    for (std::size_t i = 0; i < n_docs; ++i) {
      const int label = labels[i];
      const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
      const std::size_t triggers = spec.min_triggers + rng.below(spec.max_triggers - spec.min_triggers + 1);
      const Sampler& bg = label == 1 ? bad_background : good_background;
      const auto& trig = label == 1 ? spec.bad_triggers : spec.good_triggers;
      std::vector<std::vector<std::string>> pieces;
      for (std::size_t t = 0; t < triggers; ++t) pieces.push_back({trig[rng.below(trig.size())]});
      if (label == 0 && rng.uniform() < spec.negation_rate) {
        pieces.push_back({spec.negation_words[rng.below(spec.negation_words.size())],
                          spec.bad_triggers[rng.below(spec.bad_triggers.size())]});
      }
      std::size_t used = 0;
      for (const auto& p : pieces) used += p.size();
      while (used < length) {
        pieces.push_back({background[bg.draw(rng)]});
        ++used;
      }
      rng.shuffle(pieces);
      std::string text;
      for (const auto& p : pieces) {
        for (const auto& t : p) {
          if (!text.empty()) text += ' ';
          text += t;
        }
      }
      text[0] = static_cast<char>(text[0] - 'a' + 'A');
      text += '.';
      Document doc;
      std::string num = std::to_string(i + 1);
      doc.id = prefix + "-" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
      doc.raw_text = std::move(text);
      doc.tokens = tokenize(doc.raw_text);
      doc.label = label;
      docs.push_back(std::move(doc));
    }
    return Corpus(std::move(docs));
  };
  data.train = make_split(spec.train_docs, "train", 3);
  data.eval = make_split(spec.eval_docs, "eval", 4);
  return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_corpus(data.train, (base / "train.csv").string(), CorpusFormat::csv);
  save_corpus(data.eval, (base / "eval.csv").string(), CorpusFormat::csv);
  save_embeddings(data.table, (base / "embeddings.txt").string());
}

}  // namespace textlrp
