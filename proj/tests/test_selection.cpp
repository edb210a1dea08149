#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deltarad/rng.hpp"
#include "deltarad/selection.hpp"

using namespace deltarad;

namespace {

// one informative column (equal to the label plus light noise) among noise
FeatureTable informative_cohort(std::size_t n, std::size_t d_noise,
                                std::uint64_t seed) {
  rng::Engine eng(seed);
  FeatureTable t;
  t.feature_names.push_back("signal");
  for (std::size_t c = 0; c < d_noise; ++c)
    t.feature_names.push_back("noise" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    const int y = eng.bernoulli(0.5) ? 1 : 0;
    std::vector<double> row;
    row.push_back(y + eng.normal(0, 0.15));
    for (std::size_t c = 0; c < d_noise; ++c) row.push_back(eng.uniform());
    t.add_row("p" + std::to_string(i), row, y);
  }
  return t;
}

}  // namespace

TEST_CASE("preprocess fit/apply") {
  FeatureTable train;
  train.feature_names = {"x", "bin", "flat"};
  train.add_row("a", {0.0, 0.0, 7.0}, 0);
  train.add_row("b", {10.0, 1.0, 7.0}, 1);
  train.add_row("c", {4.0, 1.0, 7.0}, 0);
  const PreprocessState st = fit_preprocess(train);

  SUBCASE("min-max scaling") {
    FeatureTable test;
    test.feature_names = train.feature_names;
    test.add_row("t", {5.0, 1.0, 7.0}, 0);
    auto out = apply_preprocess(st, test);
    CHECK(out.at(0, 0) == doctest::Approx(0.5));
  }

  SUBCASE("constant features map to 0") {
    auto out = apply_preprocess(st, train);
    for (std::size_t r = 0; r < out.rows(); ++r) CHECK(out.at(r, 2) == 0.0);
  }

  SUBCASE("binary features pass through unscaled") {
    auto out = apply_preprocess(st, train);
    CHECK(out.at(0, 1) == 0.0);
    CHECK(out.at(1, 1) == 1.0);
  }

  SUBCASE("missing test cell imputes the train median") {
    // median of {0, 10, 4} is 4; scaled by (x-0)/10
    FeatureTable test;
    test.feature_names = train.feature_names;
    test.add_row("t", {missing_value(), 0.0, 7.0}, 0);
    auto out = apply_preprocess(st, test);
    CHECK(out.at(0, 0) == doctest::Approx(0.4));
  }

  SUBCASE("out-of-range test values clamp to [0,1]") {
    FeatureTable test;
    test.feature_names = train.feature_names;
    test.add_row("t", {-5.0, 1.0, 7.0}, 0);
    test.add_row("u", {25.0, 1.0, 7.0}, 0);
    auto out = apply_preprocess(st, test);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(1, 0) == 1.0);
  }

  SUBCASE("empty training set throws") {
    FeatureTable empty;
    empty.feature_names = {"x"};
    CHECK_THROWS_AS(fit_preprocess(empty), std::invalid_argument);
  }

  SUBCASE("test rows never influence the fitted state") {
    auto st2 = fit_preprocess(train);
    CHECK(st2.min == st.min);
    CHECK(st2.max == st.max);
    CHECK(st2.median == st.median);
  }
}

TEST_CASE("chi2_scores") {
  SUBCASE("feature identical across balanced classes scores 0") {
    FeatureTable t;
    t.feature_names = {"x"};
    t.add_row("a", {3.0}, 0);
    t.add_row("b", {3.0}, 1);
    t.add_row("c", {3.0}, 0);
    t.add_row("d", {3.0}, 1);
    CHECK(chi2_scores(t)[0] == doctest::Approx(0.0));
  }

  SUBCASE("feature equal to the label on 4 balanced rows scores 2") {
    FeatureTable t;
    t.feature_names = {"x"};
    t.add_row("a", {0.0}, 0);
    t.add_row("b", {0.0}, 0);
    t.add_row("c", {1.0}, 1);
    t.add_row("d", {1.0}, 1);
    CHECK(chi2_scores(t)[0] == doctest::Approx(2.0));
  }

  SUBCASE("all-zero feature scores 0") {
    FeatureTable t;
    t.feature_names = {"x"};
    t.add_row("a", {0.0}, 0);
    t.add_row("b", {0.0}, 1);
    CHECK(chi2_scores(t)[0] == 0.0);
  }

  SUBCASE("duplicating the whole dataset scales scores linearly") {
    FeatureTable t = informative_cohort(30, 3, 77);
    // shift into [0, inf) as the scaler would
    for (auto& v : t.data) v = std::abs(v);
    auto s1 = chi2_scores(t);
    FeatureTable doubled = t;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::vector<double> row(t.cols());
      for (std::size_t c = 0; c < t.cols(); ++c) row[c] = t.at(r, c);
      doubled.add_row(t.ids[r] + "_dup", row, t.labels[r]);
    }
    auto s2 = chi2_scores(doubled);
    for (std::size_t c = 0; c < s1.size(); ++c)
      CHECK(s2[c] == doctest::Approx(2.0 * s1[c]).epsilon(1e-9));
  }

  SUBCASE("single-class labels throw") {
    FeatureTable t;
    t.feature_names = {"x"};
    t.add_row("a", {1.0}, 1);
    t.add_row("b", {2.0}, 1);
    CHECK_THROWS_AS(chi2_scores(t), std::invalid_argument);
  }
}

TEST_CASE("rf_importance_scores") {
  SUBCASE("scores sum to 1") {
    FeatureTable t = informative_cohort(60, 5, 11);
    auto s = rf_importance_scores(t, 1);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("the separating feature ranks first on most seeds") {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      FeatureTable t = informative_cohort(60, 5, 100 + seed);
      auto s = rf_importance_scores(t, seed);
      if (std::max_element(s.begin(), s.end()) == s.begin()) ++wins;
    }
    CHECK(wins >= 7);
  }

  SUBCASE("a duplicated top feature keeps the pair dominant") {
    FeatureTable t = informative_cohort(60, 4, 13);
    FeatureTable dup;
    dup.feature_names = t.feature_names;
    dup.feature_names.push_back("signal_copy");
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::vector<double> row(t.cols());
      for (std::size_t c = 0; c < t.cols(); ++c) row[c] = t.at(r, c);
      row.push_back(t.at(r, 0));
      dup.add_row(t.ids[r], row, t.labels[r]);
    }
    auto s = rf_importance_scores(dup, 3);
    const double pair = s[0] + s.back();
    for (std::size_t c = 1; c + 1 < s.size(); ++c) CHECK(pair > s[c]);
  }
}

TEST_CASE("rfe") {
  SUBCASE("k equal to feature count returns everything") {
    FeatureTable t = informative_cohort(40, 3, 15);
    auto r = rfe(t, t.cols(), 1);
    CHECK(r.names.size() == t.cols());
  }

  SUBCASE("the informative feature survives on most seeds") {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      FeatureTable t = informative_cohort(60, 6, 200 + seed);
      auto r = rfe(t, 1, seed);
      if (r.names.size() == 1 && r.names[0] == "signal") ++wins;
    }
    CHECK(wins >= 7);
  }

  SUBCASE("same seed, same selection") {
    FeatureTable t = informative_cohort(50, 6, 17);
    auto a = rfe(t, 3, 42);
    auto b = rfe(t, 3, 42);
    CHECK(a.names == b.names);
    CHECK(a.scores == b.scores);
  }
}

TEST_CASE("select dispatch") {
  FeatureTable t = informative_cohort(40, 4, 19);
  for (auto& v : t.data) v = std::abs(v);

  SUBCASE("returns exactly k features") {
    for (const char* m : {"chi2", "rf", "rfe"}) {
      auto r = select(m, t, 2, 7);
      CHECK(r.names.size() == 2);
      CHECK(r.method == m);
    }
  }

  SUBCASE("unknown method throws") {
    CHECK_THROWS_AS(select("mutual_info", t, 2, 7), std::invalid_argument);
  }

  SUBCASE("k out of range throws") {
    CHECK_THROWS_AS(select("chi2", t, 0, 7), std::invalid_argument);
    CHECK_THROWS_AS(select("chi2", t, t.cols() + 1, 7), std::invalid_argument);
  }

  SUBCASE("score ties break by schema order") {
    FeatureTable tie;
    tie.feature_names = {"first", "second"};
    tie.add_row("a", {1.0, 1.0}, 1);
    tie.add_row("b", {0.0, 0.0}, 0);
    tie.add_row("c", {1.0, 1.0}, 1);
    tie.add_row("d", {0.0, 0.0}, 0);
    auto r = select("chi2", tie, 1, 7);
    CHECK(r.names[0] == "first");
  }
}
