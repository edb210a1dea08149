#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "deltarad/evaluation.hpp"
#include "deltarad/models.hpp"
#include "deltarad/rng.hpp"

using namespace deltarad;

namespace {

FeatureTable one_dim(std::initializer_list<std::pair<double, int>> points) {
  FeatureTable t;
  t.feature_names = {"x"};
  int i = 0;
  for (auto& [x, y] : points) t.add_row("p" + std::to_string(i++), {x}, y);
  return t;
}

FeatureTable random_table(std::size_t n, std::size_t d, std::uint64_t seed) {
  rng::Engine eng(seed);
  FeatureTable t;
  for (std::size_t c = 0; c < d; ++c)
    t.feature_names.push_back("f" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (auto& v : row) v = eng.uniform(-1, 1);
    t.add_row("p" + std::to_string(i), row, eng.bernoulli(0.5) ? 1 : 0);
  }
  bool has0 = false, has1 = false;
  for (int y : t.labels) (y ? has1 : has0) = true;
  if (!has0) t.labels[0] = 0;
  if (!has1) t.labels[0] = 1;
  return t;
}

double weight_norm(const LrModel& m) {
  double acc = 0;
  for (double w : m.weights) acc += w * w;
  return std::sqrt(acc);
}

// max |analytic - fd| / max-|fd| over a parameter vector
double gradcheck(const std::vector<double>& params,
                 const std::function<double(const std::vector<double>&,
                                            std::vector<double>*)>& f,
                 double h) {
  std::vector<double> g;
  f(params, &g);
  std::vector<double> p = params;
  double scale = 0, worst = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double lp = f(p, nullptr);
    p[i] = orig - h;
    const double lm = f(p, nullptr);
    p[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    scale = std::max(scale, std::abs(fd));
    worst = std::max(worst, std::abs(fd - g[i]));
  }
  return worst / std::max(scale, 1e-12);
}

}  // namespace

TEST_CASE("logistic regression") {
  ModelConfig cfg;
  cfg.kind = ModelKind::lr;

  SUBCASE("separable 1-D points train to accuracy 1") {
    FeatureTable t = one_dim({{-1.0, 0}, {1.0, 1}});
    auto m = train(cfg, t, 0);
    auto pred = predict_label(m, t);
    CHECK(pred == std::vector<int>{0, 1});
  }

  SUBCASE("all-zero features learn the class prior through the bias") {
    FeatureTable t = one_dim({{0, 1}, {0, 1}, {0, 1}, {0, 0}});
    auto m = train(cfg, t, 0);
    auto p = predict_proba(m, t);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-6));
  }

  SUBCASE("objective gradient matches central finite differences") {
    FeatureTable t = random_table(10, 5, 3);
    rng::Engine eng(4);
    std::vector<double> params(6);
    for (auto& v : params) v = eng.uniform(-0.5, 0.5);
    const double err = gradcheck(
        params,
        [&](const std::vector<double>& p, std::vector<double>* g) {
          return lr_objective(p, t, 0.4, g);
        },
        1e-6);
    CHECK(err < 1e-5);
  }

  SUBCASE("zero weights and bias predict one half") {
    FeatureTable t = one_dim({{0.3, 1}, {-0.2, 0}});
    TrainedModel m;
    m.kind = ModelKind::lr;
    m.schema = t.feature_names;
    m.lr.weights = {0.0};
    m.lr.bias = 0.0;
    CHECK(predict_proba(m, t)[0] == 0.5);
  }

  SUBCASE("an identically zero feature never moves the boundary") {
    FeatureTable t = random_table(30, 3, 5);
    auto m1 = train(cfg, t, 0);
    FeatureTable t2 = t;
    t2.feature_names.push_back("zero");
    FeatureTable widened;
    widened.feature_names = t2.feature_names;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::vector<double> row(t.cols() + 1, 0.0);
      for (std::size_t c = 0; c < t.cols(); ++c) row[c] = t.at(r, c);
      widened.add_row(t.ids[r], row, t.labels[r]);
    }
    auto m2 = train(cfg, widened, 0);
    auto p1 = predict_proba(m1, t);
    auto p2 = predict_proba(m2, widened);
    for (std::size_t i = 0; i < p1.size(); ++i)
      CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-8));
  }

  SUBCASE("a 1000x larger penalty strictly shrinks the weights") {
    FeatureTable t = random_table(40, 4, 6);
    auto weak = train(cfg, t, 0);
    ModelConfig strong = cfg;
    strong.lr.l2_weight = 400.0;
    auto hard = train(strong, t, 0);
    CHECK(weight_norm(hard.lr) < weight_norm(weak.lr));
  }

  SUBCASE("single-class labels throw") {
    FeatureTable t = one_dim({{1.0, 1}, {2.0, 1}});
    CHECK_THROWS_AS(train(cfg, t, 0), std::invalid_argument);
  }

  SUBCASE("non-finite inputs throw") {
    FeatureTable t = one_dim({{1.0, 1}, {2.0, 0}});
    t.at(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train(cfg, t, 0), std::invalid_argument);
  }
}

TEST_CASE("random forest") {
  ModelConfig cfg;
  cfg.kind = ModelKind::rf;

  SUBCASE("unanimous forests give probability 1") {
    // feature == label with enough rows that every bootstrap can split legally
    FeatureTable t;
    t.feature_names = {"x"};
    for (int i = 0; i < 80; ++i) t.add_row("p" + std::to_string(i), {i < 40 ? 0.0 : 1.0}, i < 40 ? 0 : 1);
    auto m = train(cfg, t, 1);
    FeatureTable q;
    q.feature_names = {"x"};
    q.add_row("q", {1.0}, 1);
    CHECK(predict_proba(m, q)[0] == doctest::Approx(1.0));
  }

  SUBCASE("beats LR on an axis-aligned staircase") {
    // y alternates along x: not linearly separable, trivially tree-separable
    FeatureTable t;
    t.feature_names = {"x"};
    for (int i = 0; i < 32; ++i)
      t.add_row("p" + std::to_string(i), {static_cast<double>(i)}, (i / 4) % 2);
    ModelConfig lr_cfg;
    lr_cfg.kind = ModelKind::lr;
    auto rf_m = train(cfg, t, 2);
    auto lr_m = train(lr_cfg, t, 2);
    const double rf_acc = accuracy(t.labels, predict_label(rf_m, t));
    const double lr_acc = accuracy(t.labels, predict_label(lr_m, t));
    CHECK(rf_acc >= lr_acc);
  }

  SUBCASE("training is bit-deterministic in (cfg, data, seed)") {
    FeatureTable t = random_table(40, 5, 9);
    auto a = serialize_model(train(cfg, t, 7));
    auto b = serialize_model(train(cfg, t, 7));
    CHECK(a == b);
  }
}

TEST_CASE("kernel svm") {
  ModelConfig cfg;
  cfg.kind = ModelKind::ksvm;

  SUBCASE("RBF separates XOR") {
    FeatureTable t;
    t.feature_names = {"x", "y"};
    t.add_row("a", {0.0, 0.0}, 0);
    t.add_row("b", {1.0, 1.0}, 0);
    t.add_row("c", {0.0, 1.0}, 1);
    t.add_row("d", {1.0, 0.0}, 1);
    auto m = train(cfg, t, 0);
    // decision sign, independent of the probability calibration
    std::vector<int> pred;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::vector<double> row = {t.at(r, 0), t.at(r, 1)};
      pred.push_back(m.svm.decision_value(row.data(), 2) > 0 ? 1 : 0);
    }
    CHECK(pred == t.labels);
  }

  SUBCASE("probabilities stay in [0,1]") {
    FeatureTable t = random_table(30, 3, 10);
    auto m = train(cfg, t, 0);
    for (double p : predict_proba(m, t)) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("mlp") {
  SUBCASE("zero parameters on zero input give one half") {
    TrainedModel m;
    m.kind = ModelKind::mlp;
    m.schema = {"a", "b"};
    m.mlp.layer_sizes = {2, 4, 1};
    m.mlp.weights = {std::vector<double>(8, 0.0), std::vector<double>(4, 0.0)};
    m.mlp.biases = {std::vector<double>(4, 0.0), std::vector<double>(1, 0.0)};
    FeatureTable t;
    t.feature_names = {"a", "b"};
    t.add_row("p", {0.0, 0.0}, 0);
    CHECK(predict_proba(m, t)[0] == 0.5);
  }

  SUBCASE("objective gradient matches central finite differences") {
    FeatureTable t = random_table(8, 3, 11);
    const std::vector<int> sizes = {3, 5, 4, 1};
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      count += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    rng::Engine eng(12);
    std::vector<double> params(count);
    for (auto& v : params) v = eng.normal(0, 0.4);
    const double err = gradcheck(
        params,
        [&](const std::vector<double>& p, std::vector<double>* g) {
          return mlp_objective(p, sizes, t, 1e-4, g);
        },
        1e-6);
    CHECK(err < 1e-5);
  }

  SUBCASE("small network learns a separable problem") {
    ModelConfig cfg;
    cfg.kind = ModelKind::mlp;
    cfg.mlp.hidden = {8, 8};
    cfg.mlp.max_iter = 400;
    FeatureTable t = one_dim({{-1.0, 0}, {-0.8, 0}, {0.8, 1}, {1.0, 1}});
    auto m = train(cfg, t, 3);
    CHECK(predict_label(m, t) == t.labels);
  }

  SUBCASE("training is bit-deterministic in (cfg, data, seed)") {
    ModelConfig cfg;
    cfg.kind = ModelKind::mlp;
    cfg.mlp.hidden = {6};
    cfg.mlp.max_iter = 50;
    FeatureTable t = random_table(20, 4, 13);
    CHECK(serialize_model(train(cfg, t, 5)) == serialize_model(train(cfg, t, 5)));
  }
}

TEST_CASE("model serialization round-trips predictions") {
  FeatureTable t = random_table(24, 4, 14);
  for (ModelKind kind : {ModelKind::lr, ModelKind::rf, ModelKind::ksvm, ModelKind::mlp}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.mlp.hidden = {6};
    cfg.mlp.max_iter = 60;
    auto m = train(cfg, t, 21);
    auto back = deserialize_model(serialize_model(m));
    auto p1 = predict_proba(m, t);
    auto p2 = predict_proba(back, t);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
  }
}
