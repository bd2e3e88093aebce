#include "textlrp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "textlrp/error.hpp"
#include "textlrp/rng.hpp"

namespace textlrp {

const ImportanceEntry* GlobalImportance::find(const std::string& token) const {
  for (const auto& e : entries) {
    if (e.token == token) return &e;
  }
  return nullptr;
}

std::vector<std::string> GlobalImportance::top_tokens(std::size_t n) const {
  if (n > entries.size()) {
    throw ValidationError("requested top " + std::to_string(n) + " tokens but only " + std::to_string(entries.size()) +
                          " are ranked");
  }
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(entries[i].token);
  return out;
}

GlobalImportance aggregate_global(std::span<const RelevanceMap> maps, std::size_t min_count, const Vocabulary* vocab,
                                  AggregationMode mode, const std::string& split) {
  if (maps.empty()) throw ValidationError("cannot aggregate an empty list of relevance maps");
  const Method method = maps.front().method;
  const int target = maps.front().target_class;
  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::string, Acc> acc;
  std::map<std::string, Acc> doc_acc;
  for (const auto& m : maps) {
    if (m.method != method || m.target_class != target) {
      throw ValidationError("relevance maps mix methods or target classes");
    }
    if (mode == AggregationMode::per_document) doc_acc.clear();
    for (const auto& s : m.scores) {
      if (vocab && !vocab->contains(s.token)) continue;
      auto& a = mode == AggregationMode::per_document ? doc_acc[s.token] : acc[s.token];
      a.sum += s.relevance;
      ++a.count;
    }
    if (mode == AggregationMode::per_document) {
      for (const auto& [token, a] : doc_acc) {
        auto& g = acc[token];
        g.sum += a.sum / static_cast<double>(a.count);
        ++g.count;
      }
    }
  }
  GlobalImportance out;
  out.method = to_string(method);
  out.split = split;
  out.target_class = target;
  out.min_count = min_count;
  double max_abs = 0.0;
  for (const auto& [token, a] : acc) {
    if (a.count < min_count) continue;
    const double mean = a.sum / static_cast<double>(a.count);
    max_abs = std::max(max_abs, std::abs(mean));
    out.entries.push_back({token, mean, a.count, 0.0});
  }
  for (auto& e : out.entries) e.normalized_score = max_abs == 0.0 ? 0.0 : e.mean_relevance / max_abs;
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const auto& a, const auto& b) { return a.mean_relevance > b.mean_relevance; });
  return out;
}

NgramReport ngram_scores(std::span<const RelevanceMap> maps, const Corpus& corpus, std::size_t n,
                         std::size_t min_count, const std::string& split) {
  if (n < 1 || n > 3) throw ValidationError("ngram order must be 1, 2 or 3");
  NgramReport report;
  report.n = n;
  report.split = split;
  if (!maps.empty()) report.method = to_string(maps.front().method);
  std::map<std::string, NgramEntry> by_ngram;
  for (const auto& m : maps) {
    const Document* doc = corpus.find(m.doc_id);
    const int predicted = doc && doc->predicted_label ? *doc->predicted_label : -1;
    if (m.scores.size() < n) continue;
    for (std::size_t i = 0; i + n <= m.scores.size(); ++i) {
      // Only contiguous positions form an ngram.
      if (m.scores[i + n - 1].position != m.scores[i].position + n - 1) continue;
      std::string key = m.scores[i].token;
      double joint = m.scores[i].relevance;
      for (std::size_t j = 1; j < n; ++j) {
        key += ' ';
        key += m.scores[i + j].token;
        joint += m.scores[i + j].relevance;
      }
      auto& e = by_ngram[key];
      e.ngram = key;
      e.instances.push_back({m.doc_id, joint, predicted});
    }
  }
  for (auto& [key, e] : by_ngram) {
    e.count = e.instances.size();
    if (e.count < min_count) continue;
    double sum = 0.0;
    for (const auto& inst : e.instances) sum += inst.joint_score;
    e.mean_joint_score = sum / static_cast<double>(e.count);
    report.entries.push_back(std::move(e));
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const auto& a, const auto& b) { return a.mean_joint_score > b.mean_joint_score; });
  return report;
}

DeletionCurve deletion_eval_ranked(const LinearModel& model, std::span<const std::string> ranked_tokens,
                                   const Corpus& corpus, const EmbeddingTable& table,
                                   std::span<const std::size_t> steps, std::string method, std::string split) {
  std::vector<const Document*> positives;
  for (const auto& doc : corpus) {
    if (!doc.label) throw ValidationError("deletion evaluation needs labels; document '" + doc.id + "' has none");
    if (*doc.label == 1) positives.push_back(&doc);
  }
  for (auto n : steps) {
    if (n > ranked_tokens.size()) {
      throw ValidationError("cannot remove top " + std::to_string(n) + " tokens: only " +
                            std::to_string(ranked_tokens.size()) + " are ranked");
    }
  }
  auto recall_without = [&](std::size_t n) {
    if (positives.empty()) return 0.0;
    std::unordered_set<std::string> removed(ranked_tokens.begin(),
                                            ranked_tokens.begin() + static_cast<std::ptrdiff_t>(n));
    std::size_t hits = 0;
    std::vector<std::string> kept;
    for (const Document* doc : positives) {
      kept.clear();
      for (const auto& t : doc->tokens) {
        if (!removed.contains(t)) kept.push_back(t);
      }
      hits += static_cast<std::size_t>(predicted_class(predict_proba(model, kept, table)));
    }
    return static_cast<double>(hits) / static_cast<double>(positives.size());
  };
  const double base = recall_without(0);
  DeletionCurve curve;
  curve.method = std::move(method);
  curve.split = std::move(split);
  for (auto n : steps) {
    const double r = n == 0 ? base : recall_without(n);
    curve.points.push_back({n, r, base - r});
  }
  return curve;
}

DeletionCurve deletion_eval(const LinearModel& model, const GlobalImportance& importance, const Corpus& corpus,
                            const EmbeddingTable& table, std::span<const std::size_t> steps) {
  if (importance.entries.empty()) throw ValidationError("deletion evaluation needs a nonempty importance table");
  std::vector<std::string> ranked;
  ranked.reserve(importance.entries.size());
  for (const auto& e : importance.entries) ranked.push_back(e.token);
  return deletion_eval_ranked(model, ranked, corpus, table, steps, importance.method, importance.split);
}

std::vector<std::string> random_ranking(std::span<const std::string> pool, std::uint64_t seed) {
  std::vector<std::string> ranked(pool.begin(), pool.end());
  std::sort(ranked.begin(), ranked.end());
  Rng rng(derive_seed(seed, 0x41));
  rng.shuffle(ranked);
  return ranked;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("pearson: need two equal-length samples of size >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: a sample has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Average ranks, ties share the mean rank.
std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

CorrelationMatrix score_correlation(std::span<const GlobalImportance> importances, std::size_t min_count,
                                    CorrelationKind kind) {
  if (importances.empty()) throw ValidationError("correlation needs at least one importance table");
  const std::size_t k = importances.size();
  std::vector<std::unordered_map<std::string, double>> scores(k);
  CorrelationMatrix out;
  out.values = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    out.labels.push_back(importances[i].label());
    for (const auto& e : importances[i].entries) {
      if (e.count >= min_count) scores[i].emplace(e.token, e.normalized_score);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.values(i, i) = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      std::vector<std::string> shared;
      for (const auto& [token, _] : scores[i]) {
        if (scores[j].contains(token)) shared.push_back(token);
      }
      if (shared.size() < 3) {
        throw Error("correlation of " + out.labels[i] + " and " + out.labels[j] + " has only " +
                    std::to_string(shared.size()) + " shared tokens (need >= 3)");
      }
      std::sort(shared.begin(), shared.end());
      std::vector<double> x, y;
      for (const auto& t : shared) {
        x.push_back(scores[i].at(t));
        y.push_back(scores[j].at(t));
      }
      const double r = kind == CorrelationKind::pearson ? pearson(x, y) : spearman(x, y);
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

FidelityReport surrogate_fidelity(std::span<const int> surrogate_predictions, std::span<const int> blackbox_predictions,
                                  std::span<const int> actual) {
  if (surrogate_predictions.size() != blackbox_predictions.size() ||
      (!actual.empty() && actual.size() != surrogate_predictions.size())) {
    throw ValidationError("prediction vectors differ in length");
  }
  FidelityReport r;
  r.vs_blackbox = Confusion::from_labels(blackbox_predictions, surrogate_predictions);
  r.f1_blackbox = r.vs_blackbox.f1();
  if (!actual.empty()) {
    r.vs_actual = Confusion::from_labels(actual, surrogate_predictions);
    r.f1_actual = r.vs_actual->f1();
  }
  return r;
}

}  // namespace textlrp
