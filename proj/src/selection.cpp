#include "deltarad/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "deltarad/models.hpp"

namespace deltarad {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void require_two_classes(const FeatureTable& t, const char* what) {
  bool has0 = false, has1 = false;
  for (int y : t.labels) (y ? has1 : has0) = true;
  if (!has0 || !has1)
    throw std::invalid_argument(std::string(what) + ": both classes required");
}

}  // namespace

PreprocessState fit_preprocess(const FeatureTable& train) {
  if (train.rows() == 0)
    throw std::invalid_argument("fit_preprocess: empty training set");

  PreprocessState st;
  st.feature_names = train.feature_names;
  const std::size_t d = train.cols();
  st.min.assign(d, 0.0);
  st.max.assign(d, 0.0);
  st.median.assign(d, 0.0);
  st.passthrough.assign(d, 0);

  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> seen;
    bool binary = true;
    for (std::size_t r = 0; r < train.rows(); ++r) {
      const double v = train.at(r, c);
      if (std::isnan(v)) continue;
      seen.push_back(v);
      if (v != 0.0 && v != 1.0) binary = false;
    }
    if (seen.empty()) {
      // feature entirely missing in training: impute 0, scale collapses
      st.passthrough[c] = 0;
      continue;
    }
    st.median[c] = median_of(seen);
    st.min[c] = *std::min_element(seen.begin(), seen.end());
    st.max[c] = *std::max_element(seen.begin(), seen.end());
    st.passthrough[c] = binary ? 1 : 0;
  }
  return st;
}

FeatureTable apply_preprocess(const PreprocessState& state, const FeatureTable& t) {
  if (t.feature_names != state.feature_names)
    throw std::invalid_argument("apply_preprocess: schema mismatch");
  FeatureTable out = t;
  const std::size_t d = t.cols();
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      double v = out.at(r, c);
      if (std::isnan(v)) v = state.median[c];
      if (!state.passthrough[c]) {
        const double range = state.max[c] - state.min[c];
        v = range > 0 ? (v - state.min[c]) / range : 0.0;
        v = std::clamp(v, 0.0, 1.0);
      }
      out.at(r, c) = v;
    }
  return out;
}

std::vector<double> chi2_scores(const FeatureTable& t) {
  require_two_classes(t, "chi2_scores");
  const std::size_t n = t.rows(), d = t.cols();
  double n1 = 0;
  for (int y : t.labels) n1 += y;
  const double n0 = static_cast<double>(n) - n1;

  std::vector<double> scores(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double o0 = 0, o1 = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = t.at(r, c);
      if (v < 0)
        throw std::invalid_argument("chi2_scores: negative feature value");
      (t.labels[r] ? o1 : o0) += v;
    }
    const double total = o0 + o1;
    if (total <= 0) continue;
    const double e0 = total * n0 / static_cast<double>(n);
    const double e1 = total * n1 / static_cast<double>(n);
    scores[c] = (o0 - e0) * (o0 - e0) / e0 + (o1 - e1) * (o1 - e1) / e1;
  }
  return scores;
}

std::vector<double> rf_importance_scores(const FeatureTable& t, std::uint64_t seed) {
  require_two_classes(t, "rf_importance");
  ModelConfig cfg;
  cfg.kind = ModelKind::rf;
  TrainedModel m = train(cfg, t, seed);
  return m.rf.importances;
}

namespace {

SelectionResult top_k_by_score(const std::string& method,
                               const FeatureTable& t,
                               const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];  // stable: ties stay in schema order
  });
  SelectionResult r;
  r.method = method;
  for (std::size_t i = 0; i < k; ++i) {
    r.indices.push_back(order[i]);
    r.names.push_back(t.feature_names[order[i]]);
    r.scores.push_back(scores[order[i]]);
  }
  return r;
}

}  // namespace

SelectionResult rfe(const FeatureTable& t, std::size_t k, std::uint64_t seed) {
  require_two_classes(t, "rfe");
  const std::size_t d = t.cols();
  if (k < 1 || k > d) throw std::invalid_argument("rfe: k out of range");

  std::vector<std::size_t> remaining(d);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<double> elimination_rank(d, 0.0);  // larger = survived longer

  ModelConfig cfg;
  cfg.kind = ModelKind::lr;
  std::size_t step = 0;
  while (remaining.size() > k) {
    FeatureTable sub = t.subset_cols(remaining);
    TrainedModel m = train(cfg, sub, seed);
    if (!m.lr.converged)
      throw std::runtime_error("rfe: logistic regression did not converge at " +
                               std::to_string(remaining.size()) + " features");
    std::size_t drop = 0;
    double smallest = std::abs(m.lr.weights[0]);
    for (std::size_t c = 1; c < remaining.size(); ++c) {
      const double mag = std::abs(m.lr.weights[c]);
      if (mag < smallest) {
        smallest = mag;
        drop = c;
      }
    }
    elimination_rank[remaining[drop]] = static_cast<double>(++step);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
  }

  SelectionResult r;
  r.method = "rfe";
  for (auto c : remaining) {
    r.indices.push_back(c);
    r.names.push_back(t.feature_names[c]);
    r.scores.push_back(static_cast<double>(d) - elimination_rank[c]);
  }
  return r;
}

SelectionResult select(const std::string& method, const FeatureTable& t,
                       std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > t.cols())
    throw std::invalid_argument("select: k out of range");
  if (method == "chi2") return top_k_by_score("chi2", t, chi2_scores(t), k);
  if (method == "rf")
    return top_k_by_score("rf", t, rf_importance_scores(t, seed), k);
  if (method == "rfe") return rfe(t, k, seed);
  throw std::invalid_argument("select: unknown method '" + method +
                              "' (expected chi2|rf|rfe)");
}

std::string selection_to_json(const SelectionResult& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["k"] = r.names.size();
  j["names"] = r.names;
  j["scores"] = r.scores;
  return j.dump();
}

}  // namespace deltarad
