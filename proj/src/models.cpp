#include "deltarad/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "deltarad/rng.hpp"

namespace deltarad {

namespace {

using nlohmann::json;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double log1pexp(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

void validate_training_table(const FeatureTable& t) {
  if (t.rows() < 2) throw std::invalid_argument("train: need at least 2 rows");
  bool has0 = false, has1 = false;
  for (int y : t.labels) (y ? has1 : has0) = true;
  if (!has0 || !has1)
    throw std::invalid_argument("train: both classes must be present");
  for (double v : t.data)
    if (!std::isfinite(v))
      throw std::invalid_argument("train: non-finite feature value");
}

}  // namespace

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "rf") return ModelKind::rf;
  if (s == "lr") return ModelKind::lr;
  if (s == "ksvm") return ModelKind::ksvm;
  if (s == "mlp") return ModelKind::mlp;
  throw std::invalid_argument("unknown model kind '" + s +
                              "' (expected rf|lr|ksvm|mlp)");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::rf: return "rf";
    case ModelKind::lr: return "lr";
    case ModelKind::ksvm: return "ksvm";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

// --- logistic regression -----------------------------------------------------

double lr_objective(const std::vector<double>& params, const FeatureTable& table,
                    double l2_weight, std::vector<double>* grad) {
  const std::size_t n = table.rows(), d = table.cols();
  if (params.size() != d + 1)
    throw std::invalid_argument("lr_objective: params must be d+1");
  const double b = params[d];

  if (grad) grad->assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t c = 0; c < d; ++c) z += params[c] * table.at(i, c);
    const double y = table.labels[i];
    loss += log1pexp(z) - y * z;
    if (grad) {
      const double r = sigmoid(z) - y;
      for (std::size_t c = 0; c < d; ++c) (*grad)[c] += r * table.at(i, c);
      (*grad)[d] += r;
    }
  }
  // penalty on the summed-loss scale (the convention of the stack the tuned
  // value comes from), i.e. sum of log-losses + (l2/2)||w||^2, divided by n
  loss /= static_cast<double>(n);
  double reg = 0.0;
  for (std::size_t c = 0; c < d; ++c) reg += params[c] * params[c];
  loss += 0.5 * l2_weight * reg / static_cast<double>(n);
  if (grad) {
    for (std::size_t c = 0; c <= d; ++c) (*grad)[c] /= static_cast<double>(n);
    for (std::size_t c = 0; c < d; ++c)
      (*grad)[c] += l2_weight * params[c] / static_cast<double>(n);
  }
  return loss;
}

namespace {

// limited-memory BFGS with Armijo backtracking; deterministic
LrModel lbfgs_fit(const FeatureTable& table, const ModelConfig::Lr& cfg) {
  const std::size_t d = table.cols();
  std::vector<double> x(d + 1, 0.0), g, g_new;
  double f = lr_objective(x, table, cfg.l2_weight, &g);

  const int memory = 10;
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;

  LrModel model;
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
  };

  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    if (inf_norm(g) <= cfg.tol) {
      model.converged = true;
      break;
    }
    // two-loop recursion
    std::vector<double> q = g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      double dot = 0;
      for (std::size_t j = 0; j < q.size(); ++j) dot += s_hist[k][j] * q[j];
      alpha[k] = rho_hist[k] * dot;
      for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[k] * y_hist[k][j];
    }
    double h0 = 1.0;
    if (!s_hist.empty()) {
      double sy = 0, yy = 0;
      const auto& sl = s_hist.back();
      const auto& yl = y_hist.back();
      for (std::size_t j = 0; j < q.size(); ++j) {
        sy += sl[j] * yl[j];
        yy += yl[j] * yl[j];
      }
      if (yy > 0) h0 = sy / yy;
    }
    for (auto& v : q) v *= h0;
    for (int k = 0; k < static_cast<int>(s_hist.size()); ++k) {
      double dot = 0;
      for (std::size_t j = 0; j < q.size(); ++j) dot += y_hist[k][j] * q[j];
      const double beta = rho_hist[k] * dot;
      for (std::size_t j = 0; j < q.size(); ++j)
        q[j] += (alpha[k] - beta) * s_hist[k][j];
    }
    // descent direction; fall back to steepest descent if curvature failed
    double gd = 0;
    for (std::size_t j = 0; j < q.size(); ++j) gd += g[j] * q[j];
    if (gd <= 0) {
      q = g;
      gd = 0;
      for (double v : g) gd += v * v;
    }

    double t = 1.0;
    std::vector<double> x_new(x.size());
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < x.size(); ++j) x_new[j] = x[j] - t * q[j];
      f_new = lr_objective(x_new, table, cfg.l2_weight, &g_new);
      if (f_new <= f - 1e-4 * t * gd) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(x.size()), yv(x.size());
    double sy = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      s[j] = x_new[j] - x[j];
      yv[j] = g_new[j] - g[j];
      sy += s[j] * yv[j];
    }
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x = std::move(x_new);
    g = g_new;
    f = f_new;
  }
  if (!model.converged && inf_norm(g) <= cfg.tol) model.converged = true;

  model.weights.assign(x.begin(), x.begin() + d);
  model.bias = x[d];
  model.iterations = iter;
  return model;
}

}  // namespace

// --- random forest ------------------------------------------------------------

int DecisionTree::predict(const double* x) const {
  int node = 0;
  while (nodes[node].feature >= 0)
    node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                           : nodes[node].right;
  return nodes[node].leaf_class;
}

namespace {

struct TreeBuilder {
  const FeatureTable& table;
  const ModelConfig::Rf& cfg;
  rng::Engine& eng;
  std::vector<double>& importance;  // accumulated weighted impurity decrease
  std::size_t n_total;
  DecisionTree tree;

  int build(std::vector<std::size_t>& samples, int depth) {
    std::size_t c1 = 0;
    for (auto i : samples) c1 += static_cast<std::size_t>(table.labels[i]);
    const std::size_t n = samples.size();
    const std::size_t c0 = n - c1;

    auto make_leaf = [&]() {
      TreeNode leaf;
      leaf.leaf_class = c1 > c0 ? 1 : 0;  // tie breaks toward class 0
      tree.nodes.push_back(leaf);
      return static_cast<int>(tree.nodes.size() - 1);
    };

    if (c0 == 0 || c1 == 0 || depth >= cfg.max_depth ||
        n < static_cast<std::size_t>(cfg.min_samples_split) ||
        n < 2 * static_cast<std::size_t>(cfg.min_samples_leaf))
      return make_leaf();

    const std::size_t d = table.cols();
    const std::size_t mtry = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    // sample mtry distinct features, then visit in index order
    std::vector<std::size_t> feats(d);
    std::iota(feats.begin(), feats.end(), 0);
    for (std::size_t k = 0; k < mtry && k + 1 < d; ++k) {
      const std::size_t j = k + eng.uniform_index(d - k);
      std::swap(feats[k], feats[j]);
    }
    feats.resize(std::min(mtry, d));
    std::sort(feats.begin(), feats.end());

    const double imp_parent =
        1.0 - (static_cast<double>(c0) * c0 + static_cast<double>(c1) * c1) /
                  (static_cast<double>(n) * n);

    int best_feature = -1;
    double best_threshold = 0, best_gain = 0;
    std::vector<std::pair<double, int>> vals(n);
    for (auto f : feats) {
      for (std::size_t k = 0; k < n; ++k)
        vals[k] = {table.at(samples[k], f), table.labels[samples[k]]};
      std::sort(vals.begin(), vals.end());
      std::size_t l1 = 0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        l1 += static_cast<std::size_t>(vals[k].second);
        const std::size_t nl = k + 1, nr = n - nl;
        if (vals[k].first == vals[k + 1].first) continue;
        if (nl < static_cast<std::size_t>(cfg.min_samples_leaf) ||
            nr < static_cast<std::size_t>(cfg.min_samples_leaf))
          continue;
        const std::size_t l0 = nl - l1, r1 = c1 - l1, r0 = nr - r1;
        const double imp_l =
            1.0 - (static_cast<double>(l0) * l0 + static_cast<double>(l1) * l1) /
                      (static_cast<double>(nl) * nl);
        const double imp_r =
            1.0 - (static_cast<double>(r0) * r0 + static_cast<double>(r1) * r1) /
                      (static_cast<double>(nr) * nr);
        const double gain =
            imp_parent - (static_cast<double>(nl) / n) * imp_l -
            (static_cast<double>(nr) / n) * imp_r;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (vals[k].first + vals[k + 1].first);
        }
      }
    }
    if (best_feature < 0) return make_leaf();

    importance[static_cast<std::size_t>(best_feature)] +=
        (static_cast<double>(n) / static_cast<double>(n_total)) * best_gain;

    std::vector<std::size_t> left, right;
    for (auto i : samples)
      (table.at(i, static_cast<std::size_t>(best_feature)) <= best_threshold
           ? left
           : right)
          .push_back(i);

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    tree.nodes.push_back(node);
    const int self = static_cast<int>(tree.nodes.size() - 1);
    const int li = build(left, depth + 1);
    const int ri = build(right, depth + 1);
    tree.nodes[self].left = li;
    tree.nodes[self].right = ri;
    return self;
  }
};

RfModel rf_fit(const FeatureTable& table, const ModelConfig::Rf& cfg,
               std::uint64_t seed) {
  const std::size_t n = table.rows(), d = table.cols();
  RfModel model;
  model.importances.assign(d, 0.0);
  for (int t = 0; t < cfg.n_trees; ++t) {
    rng::Engine eng(rng::derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> bootstrap(n);
    bool has0 = false, has1 = false;
    for (auto& i : bootstrap) {
      i = eng.uniform_index(n);
      (table.labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) {
      // degenerate bootstrap: single-class sample becomes a single leaf
      DecisionTree dt;
      TreeNode leaf;
      leaf.leaf_class = has1 ? 1 : 0;
      dt.nodes.push_back(leaf);
      model.trees.push_back(std::move(dt));
      continue;
    }
    TreeBuilder builder{table, cfg, eng, model.importances, n, {}};
    builder.build(bootstrap, 0);
    model.trees.push_back(std::move(builder.tree));
  }
  double total = std::accumulate(model.importances.begin(),
                                 model.importances.end(), 0.0);
  if (total > 0)
    for (auto& v : model.importances) v /= total;
  else if (d > 0)
    for (auto& v : model.importances) v = 1.0 / static_cast<double>(d);
  return model;
}

}  // namespace

// --- kernel SVM -----------------------------------------------------------------

double SvmModel::decision_value(const double* x, std::size_t d) const {
  double acc = 0.0;
  for (std::size_t s = 0; s < support_vectors.size(); ++s) {
    const auto& sv = support_vectors[s];
    double k;
    if (kernel == SvmKernel::linear || kernel == SvmKernel::poly) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += sv[c] * x[c];
      k = kernel == SvmKernel::linear
              ? dot
              : std::pow(gamma * dot + 1.0, static_cast<double>(degree));
    } else {
      double dist = 0;
      for (std::size_t c = 0; c < d; ++c)
        dist += (sv[c] - x[c]) * (sv[c] - x[c]);
      k = std::exp(-gamma * dist);
    }
    acc += dual_coef[s] * k;
  }
  return acc - intercept;
}

namespace {

double svm_kernel(const FeatureTable& t, std::size_t i, std::size_t j,
                  SvmKernel kernel, double gamma, int degree) {
  const std::size_t d = t.cols();
  if (kernel == SvmKernel::rbf) {
    double dist = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = t.at(i, c) - t.at(j, c);
      dist += diff * diff;
    }
    return std::exp(-gamma * dist);
  }
  double dot = 0;
  for (std::size_t c = 0; c < d; ++c) dot += t.at(i, c) * t.at(j, c);
  if (kernel == SvmKernel::linear) return dot;
  return std::pow(gamma * dot + 1.0, static_cast<double>(degree));
}

// Platt sigmoid fit on decision values (Newton with backtracking).
void platt_fit(const std::vector<double>& f, const std::vector<int>& y,
               double& a_out, double& b_out) {
  const std::size_t n = f.size();
  double np = 0, nm = 0;
  for (int yi : y) (yi ? np : nm) += 1;
  const double hi = (np + 1.0) / (np + 2.0);
  const double lo = 1.0 / (nm + 2.0);

  double a = 0.0, b = std::log((nm + 1.0) / (np + 1.0));
  auto objective = [&](double aa, double bb) {
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = y[i] ? hi : lo;
      const double z = aa * f[i] + bb;
      // cross-entropy of sigma(-z) ; stable form
      obj += t * log1pexp(z) + (1 - t) * log1pexp(-z);
    }
    return obj;
  };

  double obj = objective(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double g_a = 0, g_b = 0, h_aa = 1e-12, h_ab = 0, h_bb = 1e-12;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = y[i] ? hi : lo;
      const double z = a * f[i] + b;
      const double p = sigmoid(-z);
      const double d1 = t - p;
      const double d2 = p * (1 - p);
      g_a += f[i] * d1;
      g_b += d1;
      h_aa += f[i] * f[i] * d2;
      h_ab += f[i] * d2;
      h_bb += d2;
    }
    if (std::abs(g_a) < 1e-10 && std::abs(g_b) < 1e-10) break;
    const double det = h_aa * h_bb - h_ab * h_ab;
    const double da = -(h_bb * g_a - h_ab * g_b) / det;
    const double db = -(-h_ab * g_a + h_aa * g_b) / det;
    double step = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 30; ++ls) {
      const double na = a + step * da, nb = b + step * db;
      const double nobj = objective(na, nb);
      if (nobj < obj + 1e-4 * step * (g_a * da + g_b * db)) {
        a = na;
        b = nb;
        obj = nobj;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
  }
  a_out = a;
  b_out = b;
}

SvmModel svm_fit(const FeatureTable& table, const ModelConfig::Svm& cfg) {
  const std::size_t n = table.rows(), d = table.cols();

  // gamma = 1/(d * Var(X)) over all entries
  double mean = 0;
  for (double v : table.data) mean += v;
  mean /= static_cast<double>(table.data.size());
  double var = 0;
  for (double v : table.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(table.data.size());
  const double gamma = var > 0 ? 1.0 / (static_cast<double>(d) * var)
                               : 1.0 / static_cast<double>(d);

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = table.labels[i] ? 1.0 : -1.0;

  // full kernel matrix (cohort-scale problems are small)
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double k = svm_kernel(table, i, j, cfg.kernel, gamma, cfg.degree);
      K[i * n + j] = k;
      K[j * n + i] = k;
    }

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // gradient of 0.5 a'Qa - e'a
  const double C = cfg.c;
  const double eps = 1e-3;
  const double tau = 1e-12;

  auto in_up = [&](std::size_t t) {
    return (ys[t] > 0 && alpha[t] < C) || (ys[t] < 0 && alpha[t] > 0);
  };
  auto in_low = [&](std::size_t t) {
    return (ys[t] < 0 && alpha[t] < C) || (ys[t] > 0 && alpha[t] > 0);
  };

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    // maximal violating pair
    double gmax = -1e300, gmin = 1e300;
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -ys[t] * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < eps) break;

    const double qii = K[i * n + i], qjj = K[j * n + j];
    const double qij = ys[i] * ys[j] * K[i * n + j];
    const double old_ai = alpha[i], old_aj = alpha[j];

    if (ys[i] != ys[j]) {
      double quad = qii + qjj + 2 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
      }
    } else {
      double quad = qii + qjj - 2 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }

    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += ys[t] * (ys[i] * K[i * n + t] * dai + ys[j] * K[j * n + t] * daj);
  }

  // intercept (rho)
  double rho;
  {
    double sum_free = 0;
    std::size_t n_free = 0;
    double ub = 1e300, lb = -1e300;
    for (std::size_t t = 0; t < n; ++t) {
      const double ygt = ys[t] * grad[t];
      if (alpha[t] > 0 && alpha[t] < C) {
        sum_free += ygt;
        ++n_free;
      } else if ((alpha[t] == 0 && ys[t] > 0) || (alpha[t] == C && ys[t] < 0)) {
        ub = std::min(ub, ygt);
      } else {
        lb = std::max(lb, ygt);
      }
    }
    rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;
  }

  SvmModel model;
  model.kernel = cfg.kernel;
  model.degree = cfg.degree;
  model.gamma = gamma;
  model.intercept = rho;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0) continue;
    std::vector<double> sv(d);
    for (std::size_t c = 0; c < d; ++c) sv[c] = table.at(t, c);
    model.support_vectors.push_back(std::move(sv));
    model.dual_coef.push_back(alpha[t] * ys[t]);
  }

  // probability calibration on training decision values
  std::vector<double> f(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> row(d);
    for (std::size_t c = 0; c < d; ++c) row[c] = table.at(t, c);
    f[t] = model.decision_value(row.data(), d);
  }
  platt_fit(f, table.labels, model.platt_a, model.platt_b);
  return model;
}

}  // namespace

// --- multilayer perceptron -------------------------------------------------------

double MlpModel::forward(const double* x) const {
  std::vector<double> cur(x, x + layer_sizes.front());
  std::vector<double> next;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    next.assign(static_cast<std::size_t>(fan_out), 0.0);
    for (int o = 0; o < fan_out; ++o) {
      double z = biases[l][static_cast<std::size_t>(o)];
      const double* wrow = &weights[l][static_cast<std::size_t>(o) * fan_in];
      for (int c = 0; c < fan_in; ++c) z += wrow[c] * cur[static_cast<std::size_t>(c)];
      const bool last = l + 2 == layer_sizes.size();
      next[static_cast<std::size_t>(o)] = last ? sigmoid(z) : std::max(0.0, z);
    }
    cur.swap(next);
  }
  return cur[0];
}

namespace {

std::size_t mlp_param_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  return n;
}

}  // namespace

double mlp_objective(const std::vector<double>& params,
                     const std::vector<int>& layer_sizes,
                     const FeatureTable& table, double alpha,
                     std::vector<double>* grad) {
  const std::size_t n = table.rows();
  const std::size_t n_layers = layer_sizes.size() - 1;
  if (params.size() != mlp_param_count(layer_sizes))
    throw std::invalid_argument("mlp_objective: bad parameter count");
  if (grad) grad->assign(params.size(), 0.0);

  // per-layer offsets into the flat parameter vector
  std::vector<std::size_t> w_off(n_layers), b_off(n_layers);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      w_off[l] = off;
      off += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
      b_off[l] = off;
      off += static_cast<std::size_t>(layer_sizes[l + 1]);
    }
  }

  double loss = 0.0;
  std::vector<std::vector<double>> act(n_layers + 1);
  std::vector<std::vector<double>> deltas(n_layers);
  for (std::size_t i = 0; i < n; ++i) {
    act[0].assign(static_cast<std::size_t>(layer_sizes[0]), 0.0);
    for (int c = 0; c < layer_sizes[0]; ++c)
      act[0][static_cast<std::size_t>(c)] = table.at(i, static_cast<std::size_t>(c));

    for (std::size_t l = 0; l < n_layers; ++l) {
      const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
      act[l + 1].assign(static_cast<std::size_t>(fan_out), 0.0);
      for (int o = 0; o < fan_out; ++o) {
        double z = params[b_off[l] + static_cast<std::size_t>(o)];
        const double* wrow = &params[w_off[l] + static_cast<std::size_t>(o) * fan_in];
        for (int c = 0; c < fan_in; ++c) z += wrow[c] * act[l][static_cast<std::size_t>(c)];
        act[l + 1][static_cast<std::size_t>(o)] =
            (l + 1 == n_layers) ? z : std::max(0.0, z);  // output kept as logit
      }
    }

    const double z_out = act[n_layers][0];
    const double y = table.labels[i];
    loss += log1pexp(z_out) - y * z_out;

    if (grad) {
      deltas[n_layers - 1].assign(1, sigmoid(z_out) - y);
      for (std::size_t l = n_layers - 1; l-- > 0;) {
        const int fan_out = layer_sizes[l + 1];
        const int fan_up = layer_sizes[l + 2];
        deltas[l].assign(static_cast<std::size_t>(fan_out), 0.0);
        for (int o = 0; o < fan_out; ++o) {
          if (act[l + 1][static_cast<std::size_t>(o)] <= 0.0) continue;  // relu gate
          double acc = 0;
          for (int u = 0; u < fan_up; ++u)
            acc += params[w_off[l + 1] + static_cast<std::size_t>(u) * fan_out + o] *
                   deltas[l + 1][static_cast<std::size_t>(u)];
          deltas[l][static_cast<std::size_t>(o)] = acc;
        }
      }
      for (std::size_t l = 0; l < n_layers; ++l) {
        const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        for (int o = 0; o < fan_out; ++o) {
          const double dl = deltas[l][static_cast<std::size_t>(o)];
          if (dl == 0.0) continue;
          double* grow = &(*grad)[w_off[l] + static_cast<std::size_t>(o) * fan_in];
          for (int c = 0; c < fan_in; ++c)
            grow[c] += dl * act[l][static_cast<std::size_t>(c)];
          (*grad)[b_off[l] + static_cast<std::size_t>(o)] += dl;
        }
      }
    }
  }

  loss /= static_cast<double>(n);
  double reg = 0.0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t wn = static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
    for (std::size_t k = 0; k < wn; ++k) reg += params[w_off[l] + k] * params[w_off[l] + k];
  }
  loss += 0.5 * alpha * reg / static_cast<double>(n);

  if (grad) {
    for (auto& v : *grad) v /= static_cast<double>(n);
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t wn = static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
      for (std::size_t k = 0; k < wn; ++k)
        (*grad)[w_off[l] + k] += alpha * params[w_off[l] + k] / static_cast<double>(n);
    }
  }
  return loss;
}

namespace {

MlpModel mlp_fit(const FeatureTable& table, const ModelConfig::Mlp& cfg,
                 std::uint64_t seed) {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(table.cols()));
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(1);

  rng::Engine eng(rng::derive_seed(seed, 0x6d6c70ULL));
  std::vector<double> params(mlp_param_count(sizes), 0.0);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int fan_in = sizes[l], fan_out = sizes[l + 1];
      const double sd = std::sqrt(2.0 / fan_in);  // He initialization
      for (int k = 0; k < fan_out * fan_in; ++k) params[off + k] = eng.normal(0, sd);
      off += static_cast<std::size_t>(fan_out) * fan_in;
      off += static_cast<std::size_t>(fan_out);  // biases stay zero
    }
  }

  // full-batch Adam
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), g;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    mlp_objective(params, sizes, table, cfg.alpha, &g);
    double gmax = 0;
    for (double x : g) gmax = std::max(gmax, std::abs(x));
    if (gmax < 1e-10) break;
    b1t *= b1;
    b2t *= b2;
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      const double mhat = m[k] / (1 - b1t);
      const double vhat = v[k] / (1 - b2t);
      params[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
  }

  MlpModel model;
  model.layer_sizes = sizes;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t wn = static_cast<std::size_t>(sizes[l]) * sizes[l + 1];
    model.weights.emplace_back(params.begin() + off, params.begin() + off + wn);
    off += wn;
    model.biases.emplace_back(params.begin() + off, params.begin() + off + sizes[l + 1]);
    off += static_cast<std::size_t>(sizes[l + 1]);
  }
  return model;
}

}  // namespace

// --- public entry points ---------------------------------------------------------

TrainedModel train(const ModelConfig& cfg, const FeatureTable& table,
                   std::uint64_t seed) {
  validate_training_table(table);
  TrainedModel m;
  m.kind = cfg.kind;
  m.schema = table.feature_names;
  switch (cfg.kind) {
    case ModelKind::lr: m.lr = lbfgs_fit(table, cfg.lr); break;
    case ModelKind::rf: m.rf = rf_fit(table, cfg.rf, seed); break;
    case ModelKind::ksvm: m.svm = svm_fit(table, cfg.svm); break;
    case ModelKind::mlp: m.mlp = mlp_fit(table, cfg.mlp, seed); break;
  }
  return m;
}

std::vector<double> predict_proba(const TrainedModel& m, const FeatureTable& table) {
  if (table.feature_names != m.schema)
    throw std::invalid_argument("predict: feature schema does not match training");
  const std::size_t n = table.rows(), d = table.cols();
  std::vector<double> out(n, 0.0);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) row[c] = table.at(i, c);
    switch (m.kind) {
      case ModelKind::lr: {
        double z = m.lr.bias;
        for (std::size_t c = 0; c < d; ++c) z += m.lr.weights[c] * row[c];
        out[i] = sigmoid(z);
        break;
      }
      case ModelKind::rf: {
        int votes = 0;
        for (const auto& t : m.rf.trees) votes += t.predict(row.data());
        out[i] = static_cast<double>(votes) / static_cast<double>(m.rf.trees.size());
        break;
      }
      case ModelKind::ksvm: {
        const double f = m.svm.decision_value(row.data(), d);
        out[i] = sigmoid(-(m.svm.platt_a * f + m.svm.platt_b));
        break;
      }
      case ModelKind::mlp: out[i] = m.mlp.forward(row.data()); break;
    }
  }
  return out;
}

std::vector<int> predict_label(const TrainedModel& m, const FeatureTable& table) {
  auto p = predict_proba(m, table);
  std::vector<int> out(p.size());
  if (m.kind == ModelKind::rf) {
    const double half = 0.5;
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > half ? 1 : 0;
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= 0.5 ? 1 : 0;
  }
  return out;
}

// --- serialization ----------------------------------------------------------------

std::string serialize_model(const TrainedModel& m) {
  json j;
  j["version"] = 1;
  j["kind"] = to_string(m.kind);
  j["schema"] = m.schema;
  switch (m.kind) {
    case ModelKind::lr:
      j["lr"] = {{"weights", m.lr.weights},
                 {"bias", m.lr.bias},
                 {"converged", m.lr.converged},
                 {"iterations", m.lr.iterations}};
      break;
    case ModelKind::rf: {
      json trees = json::array();
      for (const auto& t : m.rf.trees) {
        json nodes = json::array();
        for (const auto& nd : t.nodes)
          nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.leaf_class});
        trees.push_back(nodes);
      }
      j["rf"] = {{"trees", trees}, {"importances", m.rf.importances}};
      break;
    }
    case ModelKind::ksvm:
      j["ksvm"] = {{"kernel", static_cast<int>(m.svm.kernel)},
                   {"degree", m.svm.degree},
                   {"gamma", m.svm.gamma},
                   {"support_vectors", m.svm.support_vectors},
                   {"dual_coef", m.svm.dual_coef},
                   {"intercept", m.svm.intercept},
                   {"platt_a", m.svm.platt_a},
                   {"platt_b", m.svm.platt_b}};
      break;
    case ModelKind::mlp:
      j["mlp"] = {{"layer_sizes", m.mlp.layer_sizes},
                  {"weights", m.mlp.weights},
                  {"biases", m.mlp.biases}};
      break;
  }
  return j.dump();
}

TrainedModel deserialize_model(const std::string& text) {
  json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported model version");
  TrainedModel m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.schema = j.at("schema").get<std::vector<std::string>>();
  switch (m.kind) {
    case ModelKind::lr: {
      const auto& l = j.at("lr");
      m.lr.weights = l.at("weights").get<std::vector<double>>();
      m.lr.bias = l.at("bias").get<double>();
      m.lr.converged = l.at("converged").get<bool>();
      m.lr.iterations = l.at("iterations").get<int>();
      break;
    }
    case ModelKind::rf: {
      const auto& r = j.at("rf");
      for (const auto& tj : r.at("trees")) {
        DecisionTree t;
        for (const auto& nj : tj) {
          TreeNode nd;
          nd.feature = nj[0].get<int>();
          nd.threshold = nj[1].get<double>();
          nd.left = nj[2].get<int>();
          nd.right = nj[3].get<int>();
          nd.leaf_class = nj[4].get<int>();
          t.nodes.push_back(nd);
        }
        m.rf.trees.push_back(std::move(t));
      }
      m.rf.importances = r.at("importances").get<std::vector<double>>();
      break;
    }
    case ModelKind::ksvm: {
      const auto& s = j.at("ksvm");
      m.svm.kernel = static_cast<SvmKernel>(s.at("kernel").get<int>());
      m.svm.degree = s.at("degree").get<int>();
      m.svm.gamma = s.at("gamma").get<double>();
      m.svm.support_vectors =
          s.at("support_vectors").get<std::vector<std::vector<double>>>();
      m.svm.dual_coef = s.at("dual_coef").get<std::vector<double>>();
      m.svm.intercept = s.at("intercept").get<double>();
      m.svm.platt_a = s.at("platt_a").get<double>();
      m.svm.platt_b = s.at("platt_b").get<double>();
      break;
    }
    case ModelKind::mlp: {
      const auto& p = j.at("mlp");
      m.mlp.layer_sizes = p.at("layer_sizes").get<std::vector<int>>();
      m.mlp.weights = p.at("weights").get<std::vector<std::vector<double>>>();
      m.mlp.biases = p.at("biases").get<std::vector<std::vector<double>>>();
      break;
    }
  }
  return m;
}

}  // namespace deltarad
