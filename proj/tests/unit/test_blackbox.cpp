#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "textlrp/blackbox.hpp"
#include "textlrp/error.hpp"
#include "textlrp/synth.hpp"

using namespace textlrp;
using testutil::make_doc;
using testutil::make_table;

namespace {

LinearModel fixed_model(std::vector<double> w, double b, std::optional<PlattPair> platt = {}) {
  LinearModel m;
  m.weights = std::move(w);
  m.bias = b;
  m.platt = platt;
  if (platt) m.loss_kind = LossKind::hinge;
  return m;
}

// Random table and corpus over a small vocabulary with some OOV words.
struct RandomWorld {
  EmbeddingTable table{5};
  std::vector<std::string> vocab;
  explicit RandomWorld(Rng& rng) {
    for (int i = 0; i < 40; ++i) {
      vocab.push_back("w" + std::to_string(i));
      std::vector<double> v(5);
      for (auto& x : v) x = rng.uniform(-1, 1);
      if (i < 34) table.add(vocab.back(), v);
    }
  }
  Document doc(Rng& rng, const std::string& id) const {
    std::vector<std::string> toks(1 + rng.below(25));
    for (auto& t : toks) t = vocab[rng.below(vocab.size())];
    return make_doc(id, toks);
  }
};

}  // namespace

TEST_CASE("predict_proba") {
  const auto t = make_table(2, {{"a", {1, 1}}, {"z", {0, 0}}});
  CHECK(predict_proba(fixed_model({1, 0}, 0), make_doc("d", {"z"}), t) == 0.5);
  CHECK(predict_proba(fixed_model({1, 0}, 0), make_doc("d", {}), t) == 0.5);
  const double p = predict_proba(fixed_model({2, -1}, 0.5), make_doc("d", {"a"}), t);
  CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))).epsilon(1e-15));
  CHECK(p == doctest::Approx(0.8176).epsilon(1e-4));
  const double q = predict_proba(fixed_model({2, -1}, 0.5, PlattPair{-2.0, 0.25}), make_doc("d", {"a"}), t);
  CHECK(q == doctest::Approx(1.0 / (1.0 + std::exp(-(-2.0 * 1.5 + 0.25)))));

  double last = 0.0;
  for (double m = -30; m <= 30; m += 0.5) {
    const double s = sigmoid(m);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(s >= last);
    last = s;
  }
  CHECK(sigmoid(40) > 0.999999);
  CHECK(predicted_class(0.5) == 1);
  CHECK(predicted_class(0.4999) == 0);
}

TEST_CASE("predict_proba is invariant to token order") {
  Rng rng(21);
  RandomWorld world(rng);
  const auto model = fixed_model({0.3, -1.2, 0.8, 2.0, -0.4}, 0.1);
  for (int i = 0; i < 100; ++i) {
    auto d = world.doc(rng, "d");
    const double p = predict_proba(model, d, world.table);
    std::reverse(d.tokens.begin(), d.tokens.end());
    CHECK(predict_proba(model, d, world.table) == doctest::Approx(p).epsilon(1e-14));
  }
}

TEST_CASE("train_linear") {
  const auto t = make_table(2, {{"good", {1, 0}}, {"bad", {0, 1}}});
  const Corpus toy({make_doc("a", {"good"}, 0), make_doc("b", {"bad"}, 1)});
  SUBCASE("separable toy set") {
    for (auto kind : {LossKind::logistic, LossKind::hinge}) {
      LinearTrainConfig c;
      c.loss_kind = kind;
      c.epochs = 50;
      const auto m = train_linear(toy, t, c);
      const auto conf = eval_confusion(m, toy, t);
      CHECK(conf.accuracy() == 1.0);
      CHECK(m.platt.has_value() == (kind == LossKind::hinge));
    }
  }
  SUBCASE("deterministic per seed") {
    LinearTrainConfig c;
    c.seed = 17;
    const auto data = generate_synthetic([] {
      SyntheticSpec s;
      s.train_docs = 200;
      s.eval_docs = 2;
      return s;
    }());
    const auto a = train_linear(data.train, data.table, c);
    const auto b = train_linear(data.train, data.table, c);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);
    CHECK(linear_model_to_json(a) == linear_model_to_json(b));
  }
  SUBCASE("single class is rejected") {
    const Corpus one({make_doc("a", {"good"}, 0), make_doc("b", {"bad"}, 0)});
    CHECK_THROWS_AS(train_linear(one, t, {}), ValidationError);
    const Corpus unlabeled({make_doc("a", {"good"})});
    CHECK_THROWS_AS(train_linear(unlabeled, t, {}), ValidationError);
  }
  SUBCASE("logistic loss is non-increasing on a fixed shuffle") {
    const auto t4 = make_table(2, {{"g", {1, 0.2}}, {"b", {0.1, 1}}, {"n", {0.4, 0.5}}, {"m", {0.5, 0.45}}});
    const Corpus c4({make_doc("a", {"g", "n"}, 0), make_doc("b", {"b", "m"}, 1), make_doc("c", {"g", "m"}, 0),
                     make_doc("d", {"b", "n"}, 1), make_doc("e", {"n", "m"}, 1), make_doc("f", {"g"}, 0)});
    LinearTrainConfig c;
    c.epochs = 40;
    c.learning_rate = 0.1;
    c.l2 = 1e-3;
    c.reshuffle = false;
    LinearTrainLog log;
    train_linear(c4, t4, c, &log);
    REQUIRE(log.epoch_loss.size() == 40);
    for (std::size_t i = 1; i < log.epoch_loss.size(); ++i) CHECK(log.epoch_loss[i] <= log.epoch_loss[i - 1] + 1e-12);
  }
}

TEST_CASE("black box reaches F1 >= 0.90 on the synthetic training split") {
  SyntheticSpec s;
  s.train_docs = 10000;
  s.eval_docs = 2;
  const auto data = generate_synthetic(s);
  LinearTrainConfig c;
  c.seed = 1;
  const auto m = train_linear(data.train, data.table, c);
  CHECK(eval_confusion(m, data.train, data.table).f1() >= 0.90);
}

TEST_CASE("fit_platt recovers a known calibration") {
  Rng rng(4);
  std::vector<double> margins;
  std::vector<int> labels;
  for (int i = 0; i < 20000; ++i) {
    const double m = rng.uniform(-4, 4);
    margins.push_back(m);
    labels.push_back(rng.uniform() < sigmoid(1.5 * m - 0.5) ? 1 : 0);
  }
  const auto p = fit_platt(margins, labels);
  CHECK(p.a == doctest::Approx(1.5).epsilon(0.08));
  CHECK(p.b == doctest::Approx(-0.5).epsilon(0.15));
}

TEST_CASE("permutation_importance") {
  const auto t = make_table(2, {{"a", {1, 2}}, {"b", {-1, 0.5}}});
  const auto m = fixed_model({0.7, -0.3}, 0.2, PlattPair{1.3, -0.1});
  SUBCASE("single token") {
    const auto d = make_doc("d", {"a"});
    const auto deltas = permutation_importance(m, d, t);
    REQUIRE(deltas.size() == 1);
    CHECK(deltas[0].delta == doctest::Approx(predict_proba(m, d, t) - sigmoid(1.3 * 0.2 - 0.1)).epsilon(1e-15));
  }
  SUBCASE("two identical tokens") {
    const auto deltas = permutation_importance(m, make_doc("d", {"b", "b"}), t);
    REQUIRE(deltas.size() == 2);
    CHECK(deltas[0].delta == deltas[1].delta);
    CHECK(deltas[0].position == 0);
    CHECK(deltas[1].position == 1);
  }
  SUBCASE("empty document") { CHECK(permutation_importance(m, make_doc("d", {}), t).empty()); }
}

TEST_CASE("permutation deltas match the closed-form mean update") {
  Rng rng(99);
  RandomWorld world(rng);
  const auto model = fixed_model({0.5, -1.0, 2.0, 0.25, -0.75}, -0.2, PlattPair{0.9, 0.05});
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto d = world.doc(rng, "d" + std::to_string(i));
    const auto deltas = permutation_importance(model, d, world.table);
    const auto mu = featurize_avg(d, world.table);
    const double base = model.probability(mu);
    const double n = static_cast<double>(d.tokens.size());
    REQUIRE(deltas.size() == d.tokens.size());
    for (std::size_t k = 0; k < d.tokens.size(); ++k) {
      std::vector<double> reduced(mu.size(), 0.0);
      if (d.tokens.size() > 1) {
        const auto e = world.table.lookup(d.tokens[k]);
        for (std::size_t j = 0; j < mu.size(); ++j) reduced[j] = mu[j] + (mu[j] - e[j]) / (n - 1.0);
      }
      worst = std::max(worst, std::abs(deltas[k].delta - (base - model.probability(reduced))));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("confusion and F1") {
  SUBCASE("all correct") {
    const std::vector<int> y{0, 1, 1, 0};
    const auto c = Confusion::from_labels(y, y);
    CHECK(c.cells[0][1] == 0);
    CHECK(c.cells[1][0] == 0);
    CHECK(c.f1() == 1.0);
  }
  SUBCASE("all predicted 0") {
    const std::vector<int> y{0, 1, 1, 0}, p{0, 0, 0, 0};
    const auto c = Confusion::from_labels(y, p);
    CHECK(c.recall() == 0.0);
    CHECK(c.f1() == 0.0);
    CHECK(c.total() == 4);
  }
  SUBCASE("published training matrix") {
    Confusion c;
    c.cells = {{{4286, 789}, {657, 4268}}};
    CHECK(c.total() == 10000);
    CHECK(std::round(c.f1() * 100) / 100 == doctest::Approx(0.86));
    Confusion e;
    e.cells = {{{8239, 1703}, {1520, 8538}}};
    CHECK(std::round(e.f1() * 100) / 100 == doctest::Approx(0.84));
  }
  CHECK_THROWS_AS(Confusion::from_labels(std::vector<int>{0}, std::vector<int>{0, 1}), ValidationError);
}

TEST_CASE("confusion cells partition the corpus") {
  Rng rng(6);
  RandomWorld world(rng);
  std::vector<Document> docs;
  for (int i = 0; i < 300; ++i) {
    auto d = world.doc(rng, "d" + std::to_string(i));
    d.label = static_cast<int>(rng.below(2));
    docs.push_back(d);
  }
  const Corpus c(docs);
  const auto m = fixed_model({1, -1, 0.5, 0, 0.2}, 0.0);
  const auto conf = eval_confusion(m, c, world.table);
  CHECK(conf.total() == c.size());
  const auto labeled = label_with_model(m, c, world.table);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(*labeled[i].predicted_score == predict_proba(m, c[i], world.table));
    CHECK(*labeled[i].predicted_label == predicted_class(*labeled[i].predicted_score));
  }
}

TEST_CASE("linear checkpoint round-trip") {
  testutil::TempDir dir("lin");
  auto m = fixed_model({0.1, 1.0 / 3.0, -2e-9}, 0.7, PlattPair{1.25, -0.5});
  m.featurize.skip_oov = true;
  save_linear_model(m, dir.file("m.json"));
  CHECK(load_linear_model(dir.file("m.json")) == m);
  const auto plain = fixed_model({1, 2}, 3);
  CHECK(linear_model_from_json(linear_model_to_json(plain)) == plain);
  CHECK_THROWS_AS(linear_model_from_json("{\"format_version\": 99}"), Error);
}
