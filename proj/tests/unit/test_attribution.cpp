#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "textlrp/attribution.hpp"
#include "textlrp/error.hpp"
#include "textlrp/synth.hpp"

using namespace textlrp;
using testutil::doc_matrix;
using testutil::make_doc;
using testutil::make_table;
using testutil::random_input;
using testutil::random_net;

namespace {

LrpConfig eps(double e) {
  LrpConfig c;
  c.epsilon = e;
  return c;
}

double sum_scores(const RelevanceMap& m) {
  double s = 0;
  for (const auto& t : m.scores) s += t.relevance;
  return s;
}

}  // namespace

TEST_CASE("epsilon rule on one dense unit") {
  const std::vector<double> x{1, 1}, w{2, 1};
  CHECK(lrp_epsilon_linear(x, w, 0.0, 3.0, 0.0) == std::vector<double>{2, 1});
  // Bias absorbs its share: (z - b) / z of the relevance reaches the inputs.
  const auto r = lrp_epsilon_linear(x, w, 1.0, 4.0, 0.0);
  CHECK(r[0] + r[1] == doctest::Approx(3.0));
  // sign(0) = +1, and an exactly zero denominator yields zeros.
  const std::vector<double> zx{1, -1}, zw{1, 1};
  const auto s = lrp_epsilon_linear(zx, zw, 0.0, 1.0, 0.5);
  CHECK(s[0] == doctest::Approx(2.0));
  CHECK(s[1] == doctest::Approx(-2.0));
  CHECK(lrp_epsilon_linear(zx, zw, 0.0, 1.0, 0.0) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(eps(0.0).validate(), ValidationError);
  CHECK_THROWS_AS(eps(-1.0).validate(), ValidationError);
}

TEST_CASE("LRP on the hand-computed micro-net") {
  CnnConfig c;
  c.dim = 2;
  c.pad_length = 3;
  c.filter_sizes = {2};
  c.filters_per_size = 1;
  auto p = CnnParams::initialize(c);
  p.convs[0].weights.data = {1, 0, 0, 1};
  p.dense_weights.data = {1, -1};
  Matrix in(3, 2);
  in(0, 0) = 1;
  in(1, 1) = 2;
  const auto m = doc_matrix(in, 2);
  const auto cache = cnn_forward(p, m);
  const auto map = lrp_explain(p, cache, 0, eps(1e-12), "micro");
  REQUIRE(map.scores.size() == 2);
  CHECK(map.scores[0].relevance == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(map.scores[1].relevance == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sum_scores(map) == doctest::Approx(cache.logits[0]).epsilon(1e-9));
  CHECK(map.model_output == 3.0);
  CHECK(map.doc_id == "micro");
  CHECK(map.method == Method::lrp);
}

TEST_CASE("LRP conserves the target logit on zero-bias nets") {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t L = 2 + rng.below(5), D = 1 + rng.below(4);
    std::vector<std::size_t> sizes{1 + rng.below(std::min<std::size_t>(L, 3))};
    const auto p = random_net(rng, L, D, sizes, 1 + rng.below(3), true);
    const std::size_t real = 1 + rng.below(L);
    const auto m = doc_matrix(random_input(rng, L, D, real), real);
    const auto cache = cnn_forward(p, m);
    for (int target = 0; target < 2; ++target) {
      const auto map = lrp_explain(p, cache, target, eps(1e-12));
      const double logit = cache.logits[static_cast<std::size_t>(target)];
      CHECK(std::abs(sum_scores(map) - logit) <= 1e-6 * std::max(std::abs(logit), 1e-12) + 1e-15);
    }
  }
}

TEST_CASE("winner-takes-all pooling") {
  // One size-2 filter over 6 rows; the argmax window is rows 2-3.
  CnnConfig c;
  c.dim = 2;
  c.pad_length = 6;
  c.filter_sizes = {2};
  c.filters_per_size = 1;
  auto p = CnnParams::initialize(c);
  p.convs[0].weights.data = {1, 0.5, -0.25, 1};
  p.dense_weights.data = {0.3, 1.2};
  Matrix in(6, 2);
  const double rows[6][2] = {{0.1, 0.2}, {0.3, -0.1}, {2.0, 1.0}, {0.5, 1.5}, {0.2, 0.1}, {-0.3, 0.4}};
  for (std::size_t r = 0; r < 6; ++r) {
    in(r, 0) = rows[r][0];
    in(r, 1) = rows[r][1];
  }
  const auto base_cache = cnn_forward(p, doc_matrix(in, 6));
  REQUIRE(base_cache.convs[0].argmax[0] == 2);
  const auto base = lrp_trace(p, base_cache, 1, eps(0.01));
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t d = 0; d < 2; ++d) {
      if (r == 2 || r == 3) {
        CHECK(base.cells(r, d) != 0.0);
      } else {
        CHECK(base.cells(r, d) == 0.0);
      }
    }
  }
  // Perturb non-argmax rows without changing the winner.
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix moved = in;
    for (std::size_t r : {0, 1, 5}) {
      for (std::size_t d = 0; d < 2; ++d) moved(r, d) = rng.uniform(-0.5, 0.5);
    }
    const auto cache = cnn_forward(p, doc_matrix(moved, 6));
    if (cache.convs[0].argmax[0] != 2) continue;
    const auto tr = lrp_trace(p, cache, 1, eps(0.01));
    for (std::size_t r : {0, 1, 4, 5}) {
      CHECK(tr.cells(r, 0) == 0.0);
      CHECK(tr.cells(r, 1) == 0.0);
    }
    CHECK(tr.cells(2, 0) == base.cells(2, 0));
    CHECK(tr.cells(3, 1) == base.cells(3, 1));
  }
}

TEST_CASE("padding and truncation receive no relevance") {
  Rng rng(8);
  const auto p = random_net(rng, 8, 3, {2, 3}, 3, false);
  const auto t = make_table(3, {{"a", {0.5, -1, 0.2}}, {"b", {1, 1, -0.5}}, {"c", {-0.3, 0.7, 0.9}}});
  const std::vector<std::string> toks{"a", "b", "c", "a", "b"};
  const auto m = embed_pad(toks, t, 8);
  const auto cache = cnn_forward(p, m);
  const auto lrp = lrp_trace(p, cache, 1, eps(0.01));
  const auto ig = ig_cells(p, m.rows, 1, 16);
  for (std::size_t r = 5; r < 8; ++r) {
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(lrp.cells(r, d) == 0.0);
      CHECK(ig(r, d) == 0.0);
    }
  }
  for (const auto& map : {lrp_explain(p, cache, 1, eps(0.01)), gbsa_explain(p, cache, 1), ig_explain(p, m, 1, 16)}) {
    REQUIRE(map.scores.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(map.scores[i].position == i);
      CHECK(map.scores[i].token == toks[i]);
    }
  }
  std::vector<std::string> long_doc(11, "a");
  const auto lm = embed_pad(long_doc, t, 8);
  const auto trunc = lrp_explain(p, cnn_forward(p, lm), 1, eps(0.01));
  CHECK(trunc.scores.size() == 8);
  CHECK(trunc.truncated == 3);
}

TEST_CASE("GbSA") {
  Rng rng(31);
  SUBCASE("non-negative and equal to squared finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_net(rng, 5, 3, {1, 2}, 2, false);
      const auto in = random_input(rng, 5, 3, 4);
      const auto m = doc_matrix(in, 4);
      const auto map = gbsa_explain(p, cnn_forward(p, m), 1);
      for (const auto& s : map.scores) CHECK(s.relevance >= 0.0);
      for (std::size_t r = 0; r < 4; ++r) {
        double fd_sq = 0;
        for (std::size_t d = 0; d < 3; ++d) {
          Matrix a = in, b = in;
          a(r, d) += 1e-6;
          b(r, d) -= 1e-6;
          const double g = (cnn_score(p, a, 1) - cnn_score(p, b, 1)) / 2e-6;
          fd_sq += g * g;
        }
        CHECK(map.scores[r].relevance == doctest::Approx(fd_sq).epsilon(1e-6));
      }
    }
  }
  SUBCASE("dead network") {
    auto p = random_net(rng, 4, 2, {2}, 2, true);
    for (auto& b : p.convs[0].biases) b = -50;
    const auto map = gbsa_explain(p, cnn_forward(p, doc_matrix(random_input(rng, 4, 2, 4), 4)), 0);
    for (const auto& s : map.scores) CHECK(s.relevance == 0.0);
  }
  SUBCASE("linear probe") {
    CnnConfig c;
    c.dim = 3;
    c.pad_length = 1;
    c.filter_sizes = {1};
    c.filters_per_size = 1;
    auto p = CnnParams::initialize(c);
    p.convs[0].weights.data = {0.5, -2.0, 1.5};
    p.convs[0].biases = {100.0};
    p.dense_weights.data = {0.0, 1.0};
    Matrix in(1, 3);
    in(0, 0) = 0.3;
    const auto map = gbsa_explain(p, cnn_forward(p, doc_matrix(in, 1)), 1);
    CHECK(map.scores[0].relevance == doctest::Approx(0.25 + 4.0 + 2.25));
  }
}

TEST_CASE("integrated gradients") {
  Rng rng(41);
  SUBCASE("input equal to the baseline") {
    const auto p = random_net(rng, 5, 2, {2}, 3, false);
    const auto map = ig_explain(p, doc_matrix(Matrix(5, 2), 3), 1, 32);
    for (const auto& s : map.scores) CHECK(s.relevance == 0.0);
  }
  SUBCASE("zero-bias nets are linear along the path") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = random_net(rng, 6, 3, {1, 2, 3}, 2, true);
      const auto in = random_input(rng, 6, 3, 6);
      const auto cells = ig_cells(p, in, 0, 1);
      const auto g = cnn_input_gradient(p, in, 0);
      double total = 0;
      for (std::size_t i = 0; i < in.data.size(); ++i) {
        CHECK(cells.data[i] == doctest::Approx(in.data[i] * g.data[i]).epsilon(1e-12));
        total += cells.data[i];
      }
      CHECK(total == doctest::Approx(cnn_score(p, in, 0) - cnn_score(p, Matrix(6, 3), 0)).epsilon(1e-10));
    }
  }
  SUBCASE("completeness at 512 steps") {
    for (int trial = 0; trial < 30; ++trial) {
      const auto p = random_net(rng, 5, 3, {1, 2}, 3, false);
      const auto in = random_input(rng, 5, 3, 5);
      const auto map = ig_explain(p, doc_matrix(in, 5), 1, 512);
      const double diff = cnn_score(p, in, 1) - cnn_score(p, Matrix(5, 3), 1);
      // Midpoint error comes from ReLU kinks crossed between steps.
      CHECK(std::abs(sum_scores(map) - diff) < 5e-3);
      const auto fine = ig_explain(p, doc_matrix(in, 5), 1, 4096);
      CHECK(std::abs(sum_scores(fine) - diff) < 2e-4);
    }
  }
  CHECK_THROWS_AS(ig_cells(random_net(rng, 3, 1, {1}, 1, true), Matrix(3, 1), 1, 0), ValidationError);
}

TEST_CASE("finite-difference diagnostic") {
  Rng rng(51);
  SUBCASE("matches the analytic gradient in a linear region") {
    const auto p = random_net(rng, 1, 3, {1}, 2, false);
    Matrix in(1, 3);
    in(0, 0) = 0.2;
    const auto cache = cnn_forward(p, doc_matrix(in, 1));
    const auto g = cnn_input_gradient(p, in, 1);
    // Pre-activations are at least `gap` from zero, so small steps stay linear.
    double gap = 1e300;
    for (double z : cache.convs[0].pre.data) gap = std::min(gap, std::abs(z));
    for (double h : {1e-7, 1e-5}) {
      if (h * 3 >= gap) continue;
      const auto fd = fd_gradient(p, in, 1, h);
      for (std::size_t i = 0; i < 3; ++i) CHECK(fd.data[i] == doctest::Approx(g.data[i]).epsilon(1e-4));
    }
  }
  SUBCASE("relative error below 1e-4 at h=1e-5 on smooth cells") {
    int checked = 0;
    while (checked < 10) {
      const auto p = random_net(rng, 4, 2, {1, 2}, 2, false);
      const auto in = random_input(rng, 4, 2, 4);
      const auto cache = cnn_forward(p, doc_matrix(in, 4));
      bool smooth = true;
      for (const auto& act : cache.convs) {
        for (double z : act.pre.data) smooth = smooth && std::abs(z) > 1e-2;
      }
      if (!smooth) continue;
      ++checked;
      const auto fd = fd_gradient(p, in, 0, 1e-5);
      const auto g = cnn_input_gradient(p, in, 0);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        CHECK(std::abs(fd.data[i] - g.data[i]) <= 1e-4 * std::max(1.0, std::abs(g.data[i])));
      }
    }
  }
  SUBCASE("step size matters next to a kink") {
    CnnConfig c;
    c.dim = 1;
    c.pad_length = 1;
    c.filter_sizes = {1};
    c.filters_per_size = 1;
    auto p = CnnParams::initialize(c);
    p.convs[0].weights.data = {1.0};
    p.convs[0].biases = {-0.001};
    p.dense_weights.data = {0.0, 1.0};
    Matrix in(1, 1);
    const double small = fd_gradient(p, in, 1, 1e-5).data[0];
    const double large = fd_gradient(p, in, 1, 1e-1).data[0];
    CHECK(small == 0.0);
    CHECK(large == doctest::Approx(0.99));
  }
  CHECK_THROWS_AS(fd_gradient(random_net(rng, 2, 1, {1}, 1, true), Matrix(2, 1), 1, 0.0), ValidationError);
}

TEST_CASE("permutation explanation wraps the black-box deltas") {
  const auto t = make_table(2, {{"a", {1, 0}}, {"b", {0, 1}}});
  LinearModel m;
  m.weights = {1.5, -2.0};
  m.bias = 0.1;
  const auto d = make_doc("x", {"a", "b", "a"}, 1, 1);
  const auto deltas = permutation_importance(m, d, t);
  const auto one = permutation_explain(m, d, t, 1);
  const auto zero = permutation_explain(m, d, t, 0);
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    CHECK(one.scores[i].relevance == deltas[i].delta);
    CHECK(zero.scores[i].relevance == -deltas[i].delta);
  }
  CHECK(one.model_output == predict_proba(m, d, t));
  CHECK(zero.model_output == doctest::Approx(1.0 - predict_proba(m, d, t)));
}

TEST_CASE("explain_corpus") {
  Rng rng(61);
  const auto t = make_table(2, {{"a", {1, 0.5}}, {"b", {-0.5, 1}}, {"c", {0.2, -0.7}}});
  const auto p = random_net(rng, 6, 2, {1, 2}, 3, false);
  LinearModel lin;
  lin.weights = {1, -1};
  const ModelBundle models{&lin, &p};
  std::vector<Document> docs;
  const std::vector<std::string> pool{"a", "b", "c"};
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> toks(1 + rng.below(9));
    for (auto& tok : toks) tok = pool[rng.below(3)];
    docs.push_back(make_doc("d" + std::to_string(i), toks, {}, i % 3 == 0 ? 1 : 0));
  }
  const Corpus corpus(docs);
  ExplainConfig cfg;
  cfg.ig_steps = 8;

  SUBCASE("empty selection") {
    const Corpus negatives({make_doc("n", {"a"}, {}, 0)});
    CHECK(explain_corpus(Method::lrp, models, negatives, t, cfg).empty());
  }
  SUBCASE("three positives keep their ids") {
    const Corpus three({make_doc("x", {"a"}, {}, 1), make_doc("y", {"b"}, {}, 0), make_doc("z", {"c", "a"}, {}, 1),
                        make_doc("w", {"b", "b"}, {}, 1)});
    const auto maps = explain_corpus(Method::gbsa, models, three, t, cfg);
    REQUIRE(maps.size() == 3);
    CHECK(maps[0].doc_id == "x");
    CHECK(maps[1].doc_id == "z");
    CHECK(maps[2].doc_id == "w");
  }
  SUBCASE("serial and parallel runs agree") {
    for (Method m : {Method::lrp, Method::gbsa, Method::ig, Method::permutation}) {
      auto serial = cfg;
      auto parallel = cfg;
      parallel.workers = 8;
      const auto a = explain_corpus(m, models, corpus, t, serial);
      const auto b = explain_corpus(m, models, corpus, t, parallel);
      CHECK(a.size() == 14);
      CHECK(a == b);
    }
  }
  SUBCASE("missing models and predictions") {
    const ModelBundle only_linear{&lin, nullptr};
    CHECK_THROWS_AS(explain_corpus(Method::lrp, only_linear, corpus, t, cfg), ValidationError);
    const Corpus unpredicted({make_doc("u", {"a"})});
    CHECK_THROWS_AS(explain_corpus(Method::lrp, models, unpredicted, t, cfg), ValidationError);
  }
  CHECK(method_from_string("lrp") == Method::lrp);
  CHECK(method_from_string("permutation") == Method::permutation);
  CHECK_THROWS_AS(method_from_string("shap"), ValidationError);
}

TEST_CASE("relevance JSONL round-trip") {
  testutil::TempDir dir("rel");
  RelevanceMap a;
  a.doc_id = "doc, \"1\"";
  a.method = Method::ig;
  a.target_class = 0;
  a.model_output = -1.0 / 3.0;
  a.scores = {{"it's", 0, 0.1}, {"x", 1, -2e-300}, {"y", 2, 1e10}};
  a.truncated = 4;
  RelevanceMap b;
  b.doc_id = "empty";
  const std::vector<RelevanceMap> maps{a, b};
  write_relevance_jsonl(maps, dir.file("r.jsonl"));
  CHECK(read_relevance_jsonl(dir.file("r.jsonl")) == maps);
  CHECK(relevance_map_from_json(relevance_map_to_json(a)) == a);
}

TEST_CASE("a planted trigger carries the largest relevance") {
  SyntheticSpec s;
  s.train_docs = 2000;
  s.eval_docs = 2;
  const auto data = generate_synthetic(s);
  LinearTrainConfig lc;
  const auto lin = train_linear(data.train, data.table, lc);
  const auto labeled = label_with_model(lin, data.train, data.table);
  CnnConfig cc;
  cc.dim = data.table.dim();
  cc.pad_length = 50;
  cc.filters_per_size = 20;
  cc.epochs = 3;
  cc.seed = 2;
  const auto p = cnn_train(cc, labeled, data.table);
  const auto toks = tokenize("Over priced and mediocre food");
  const auto m = embed_pad(toks, data.table, cc.pad_length);
  const auto map = lrp_explain(p, cnn_forward(p, m), 1, LrpConfig{});
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.scores.size(); ++i) {
    if (map.scores[i].relevance > map.scores[best].relevance) best = i;
  }
  CHECK(map.scores[best].token == "mediocre");
  CHECK(map.scores[best].relevance > 0.0);
}
