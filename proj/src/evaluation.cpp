#include "deltarad/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deltarad/rng.hpp"

namespace deltarad {

namespace {

using nlohmann::json;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct MeanStd {
  double mean = 0, sd = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0;
    for (double x : v) acc += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace

std::vector<int> stratified_folds(const std::vector<int>& y, int n_folds,
                                  std::uint64_t seed) {
  if (n_folds < 2) throw std::invalid_argument("stratified_folds: need >= 2 folds");
  if (static_cast<int>(y.size()) < n_folds)
    throw std::invalid_argument("stratified_folds: fewer samples than folds");

  std::vector<std::size_t> class_idx[2];
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw std::invalid_argument("stratified_folds: labels must be 0/1");
    class_idx[y[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (static_cast<int>(class_idx[c].size()) < n_folds)
      throw std::invalid_argument(
          "stratified_folds: class " + std::to_string(c) +
          " has fewer members than folds");

  std::vector<int> fold(y.size(), -1);
  rng::Engine eng(seed);
  for (int c = 0; c < 2; ++c) {
    auto& idx = class_idx[c];
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
      const std::size_t j = k + eng.uniform_index(idx.size() - k);
      std::swap(idx[k], idx[j]);
    }
    for (std::size_t k = 0; k < idx.size(); ++k)
      fold[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(n_folds));
  }
  return fold;
}

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.empty() || y_true.size() != y_pred.size())
    throw std::invalid_argument("accuracy: bad input sizes");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    hits += static_cast<std::size_t>(y_true[i] == y_pred[i]);
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

double auc(const std::vector<int>& y_true, const std::vector<double>& scores) {
  if (y_true.empty() || y_true.size() != scores.size())
    throw std::invalid_argument("auc: bad input sizes");
  std::uint64_t n1 = 0, n0 = 0;
  for (int y : y_true) (y ? n1 : n0) += 1;
  if (n1 == 0 || n0 == 0)
    throw std::invalid_argument("auc: both classes required");

  // sort by score; walk tie groups counting (positive, negative) pairs
  std::vector<std::size_t> order(y_true.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::uint64_t wins = 0, ties = 0, negatives_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (y_true[order[j]] ? pos : neg) += 1;
      ++j;
    }
    wins += pos * negatives_below;
    ties += pos * neg;
    negatives_below += neg;
    i = j;
  }
  return static_cast<double>(2 * wins + ties) / (2.0 * static_cast<double>(n1) * static_cast<double>(n0));
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("wilcoxon: unequal lengths");

  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);

  WilcoxonResult res;
  res.n_used = static_cast<int>(d.size());
  if (d.empty()) return res;  // incomparable: every difference is zero
  res.comparable = true;

  const std::size_t n = d.size();
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(d[i]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return mag[i] < mag[j]; });

  // tie-averaged ranks, doubled so they are integers
  std::vector<std::int64_t> rank2(n);
  std::vector<std::int64_t> tie_sizes;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && mag[order[j]] == mag[order[i]]) ++j;
    const std::int64_t sum2 = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = sum2;
    tie_sizes.push_back(static_cast<std::int64_t>(j - i));
    i = j;
  }

  std::int64_t total2 = 0, wplus2 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    total2 += rank2[k];
    if (d[k] > 0) wplus2 += rank2[k];
  }
  const std::int64_t wobs2 = std::min(wplus2, total2 - wplus2);
  res.statistic = static_cast<double>(wobs2) / 2.0;

  if (n <= 20) {
    // exact: distribution of the doubled W+ over all sign patterns
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k)
      for (std::int64_t s = total2; s >= rank2[k]; --s)
        ways[static_cast<std::size_t>(s)] +=
            ways[static_cast<std::size_t>(s - rank2[k])];
    double count = 0.0;
    for (std::int64_t s = 0; s <= total2; ++s)
      if (std::min(s, total2 - s) <= wobs2) count += ways[static_cast<std::size_t>(s)];
    res.p = count / std::pow(2.0, static_cast<double>(n));
    res.exact = true;
  } else {
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
    for (auto t : tie_sizes) {
      const double td = static_cast<double>(t);
      var -= (td * td * td - td) / 48.0;
    }
    const double w = res.statistic;
    const double z = (w - mu + 0.5) / std::sqrt(var);  // continuity corrected
    res.p = std::min(1.0, 2.0 * normal_cdf(z));
    res.exact = false;
  }
  return res;
}

// --- experiment protocol -----------------------------------------------------

FoldFit fit_fold(const FeatureTable& train_rows, const std::string& selector,
                 const ModelConfig& model_cfg, const std::vector<std::size_t>& k_grid,
                 std::uint64_t seed) {
  const std::size_t d = train_rows.cols();
  std::vector<std::size_t> grid;
  for (auto k : k_grid)
    if (k >= 1 && k <= d) grid.push_back(k);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) grid.push_back(d);

  std::size_t best_k = grid.back();
  if (grid.size() > 1) {
    // deterministic inner 80/20 split of the training rows
    bool inner_ok = true;
    std::vector<int> inner_fold;
    try {
      inner_fold = stratified_folds(train_rows.labels, 5,
                                    rng::derive_seed(seed, 0x1aabbULL));
    } catch (const std::invalid_argument&) {
      inner_ok = false;  // a class is too small to split; keep the default k
    }
    if (inner_ok) {
      std::vector<std::size_t> tr, va;
      for (std::size_t r = 0; r < train_rows.rows(); ++r)
        (inner_fold[r] == 0 ? va : tr).push_back(r);
      const FeatureTable inner_train = train_rows.subset_rows(tr);
      const FeatureTable inner_val = train_rows.subset_rows(va);

      double best_acc = -1.0;
      for (auto k : grid) {
        const PreprocessState pre = fit_preprocess(inner_train);
        const FeatureTable xs = apply_preprocess(pre, inner_train);
        const SelectionResult sel = select(selector, xs, k, seed);
        const TrainedModel model = train(model_cfg, xs.subset_cols(sel.indices), seed);
        const FeatureTable vs = apply_preprocess(pre, inner_val).subset_cols(sel.indices);
        const double acc = accuracy(inner_val.labels, predict_label(model, vs));
        if (acc > best_acc) {  // ties keep the smaller k (grid is ascending)
          best_acc = acc;
          best_k = k;
        }
      }
    }
  } else {
    best_k = grid.front();
  }

  FoldFit fit;
  fit.chosen_k = best_k;
  fit.preprocess = fit_preprocess(train_rows);
  const FeatureTable xs = apply_preprocess(fit.preprocess, train_rows);
  fit.selection = select(selector, xs, best_k, seed);
  fit.model = train(model_cfg, xs.subset_cols(fit.selection.indices), seed);
  return fit;
}

EvalReport run_experiment(const std::map<std::string, FeatureTable>& variants,
                          const ExperimentSpec& spec) {
  if (variants.empty()) throw std::invalid_argument("run_experiment: no variants");
  const FeatureTable& first = variants.begin()->second;
  for (const auto& [name, table] : variants) {
    if (table.ids != first.ids || table.labels != first.labels)
      throw std::invalid_argument(
          "run_experiment: variant '" + name +
          "' does not hold the same patients as the others");
  }
  const std::vector<int>& y = first.labels;

  EvalReport report;
  report.plan = spec.plan;

  for (std::uint64_t seed : spec.plan.seeds) {
    const std::vector<int> fold_of = stratified_folds(y, spec.plan.n_folds, seed);
    for (int f = 0; f < spec.plan.n_folds; ++f) {
      std::vector<std::size_t> train_idx, test_idx;
      for (std::size_t r = 0; r < y.size(); ++r)
        (fold_of[r] == f ? test_idx : train_idx).push_back(r);

      for (const auto& [vname, table] : variants) {
        const FeatureTable train_rows = table.subset_rows(train_idx);
        const FeatureTable test_rows = table.subset_rows(test_idx);
        for (const auto& selector : spec.selectors) {
          for (const auto& mcfg : spec.models) {
            const std::uint64_t fold_seed =
                rng::derive_seed(seed, static_cast<std::uint64_t>(f));
            FoldFit fit = fit_fold(train_rows, selector, mcfg,
                                   spec.k_grid, fold_seed);
            const FeatureTable xt = apply_preprocess(fit.preprocess, test_rows)
                                        .subset_cols(fit.selection.indices);
            EvalCell cell;
            cell.variant = vname;
            cell.selector = selector;
            cell.model = to_string(mcfg.kind);
            cell.seed = seed;
            cell.fold = f;
            cell.k = fit.chosen_k;
            cell.accuracy = accuracy(test_rows.labels, predict_label(fit.model, xt));
            cell.auc = auc(test_rows.labels, predict_proba(fit.model, xt));
            report.cells.push_back(std::move(cell));
          }
        }
      }
    }
  }

  // aggregates
  std::map<std::string, std::vector<double>> acc_by, auc_by;
  for (const auto& c : report.cells) {
    const std::string key = c.variant + "/" + c.selector + "/" + c.model;
    acc_by[key].push_back(c.accuracy);
    auc_by[key].push_back(c.auc);
  }
  for (const auto& [key, accs] : acc_by) {
    VariantSummary s;
    const auto p1 = key.find('/');
    const auto p2 = key.find('/', p1 + 1);
    s.variant = key.substr(0, p1);
    s.selector = key.substr(p1 + 1, p2 - p1 - 1);
    s.model = key.substr(p2 + 1);
    const auto am = mean_std(accs);
    const auto um = mean_std(auc_by[key]);
    s.accuracy_mean = am.mean;
    s.accuracy_std = am.sd;
    s.auc_mean = um.mean;
    s.auc_std = um.sd;
    report.summaries.push_back(std::move(s));
  }

  // paired signed-rank tests over (seed, fold) cells
  auto collect = [&](const std::string& variant, const std::string& selector,
                     const std::string& model, bool use_auc) {
    std::vector<double> vals;
    for (const auto& c : report.cells)
      if (c.variant == variant && c.selector == selector && c.model == model)
        vals.push_back(use_auc ? c.auc : c.accuracy);
    return vals;
  };
  for (const auto& [va, vb] : spec.pairings) {
    if (!variants.count(va) || !variants.count(vb))
      throw std::invalid_argument("run_experiment: pairing names unknown variant");
    for (const auto& selector : spec.selectors)
      for (const auto& mcfg : spec.models)
        for (bool use_auc : {false, true}) {
          PairedTest pt;
          pt.variant_a = va;
          pt.variant_b = vb;
          pt.selector = selector;
          pt.model = to_string(mcfg.kind);
          pt.metric = use_auc ? "auc" : "accuracy";
          pt.test = wilcoxon_signed_rank(collect(va, selector, pt.model, use_auc),
                                         collect(vb, selector, pt.model, use_auc));
          pt.significant = pt.test.comparable && pt.test.p < 0.05;
          report.paired.push_back(std::move(pt));
        }
  }
  return report;
}

std::string EvalReport::to_json() const {
  json j;
  j["plan"] = {{"n_folds", plan.n_folds},
               {"seeds", plan.seeds},
               {"stratified", plan.stratified}};
  json cell_arr = json::array();
  for (const auto& c : cells)
    cell_arr.push_back({{"variant", c.variant},
                        {"selector", c.selector},
                        {"model", c.model},
                        {"seed", c.seed},
                        {"fold", c.fold},
                        {"k", c.k},
                        {"accuracy", c.accuracy},
                        {"auc", c.auc}});
  j["cells"] = cell_arr;
  json sum_arr = json::array();
  for (const auto& s : summaries)
    sum_arr.push_back({{"variant", s.variant},
                       {"selector", s.selector},
                       {"model", s.model},
                       {"accuracy_mean", s.accuracy_mean},
                       {"accuracy_std", s.accuracy_std},
                       {"auc_mean", s.auc_mean},
                       {"auc_std", s.auc_std}});
  j["summaries"] = sum_arr;
  json pair_arr = json::array();
  for (const auto& p : paired)
    pair_arr.push_back({{"variant_a", p.variant_a},
                        {"variant_b", p.variant_b},
                        {"selector", p.selector},
                        {"model", p.model},
                        {"metric", p.metric},
                        {"statistic", p.test.statistic},
                        {"p", p.test.p},
                        {"n_used", p.test.n_used},
                        {"comparable", p.test.comparable},
                        {"exact", p.test.exact},
                        {"significant", p.significant}});
  j["paired_tests"] = pair_arr;
  return j.dump(2);
}

std::string EvalReport::cells_csv() const {
  std::ostringstream out;
  out << "variant,selector,model,seed,fold,k,accuracy,auc\n";
  for (const auto& c : cells)
    out << c.variant << "," << c.selector << "," << c.model << "," << c.seed
        << "," << c.fold << "," << c.k << "," << c.accuracy << "," << c.auc
        << "\n";
  return out.str();
}

std::string EvalReport::render_table(const std::string& variant_a,
                                     const std::string& variant_b) const {
  auto summary_of = [&](const std::string& v, const std::string& sel,
                        const std::string& model) -> const VariantSummary* {
    for (const auto& s : summaries)
      if (s.variant == v && s.selector == sel && s.model == model) return &s;
    return nullptr;
  };
  auto p_of = [&](const std::string& sel, const std::string& model) {
    for (const auto& p : paired)
      if (p.variant_a == variant_a && p.variant_b == variant_b &&
          p.selector == sel && p.model == model && p.metric == "auc")
        return p.test.p;
    return std::nan("");
  };

  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %-8s %-23s %-23s %s\n", "Model",
                "Selector", "Accuracy (A | B)", "AUC (A | B)", "p(AUC)");
  out << "A = " << variant_a << "   B = " << variant_b << "\n" << line;
  std::set<std::pair<std::string, std::string>> combos;
  for (const auto& s : summaries) combos.insert({s.model, s.selector});
  for (const auto& [model, sel] : combos) {
    const auto* a = summary_of(variant_a, sel, model);
    const auto* b = summary_of(variant_b, sel, model);
    if (!a || !b) continue;
    std::snprintf(line, sizeof(line),
                  "%-6s %-8s %.2f±%.2f | %.2f±%.2f   %.2f±%.2f | %.2f±%.2f   %.3f\n",
                  model.c_str(), sel.c_str(), a->accuracy_mean, a->accuracy_std,
                  b->accuracy_mean, b->accuracy_std, a->auc_mean, a->auc_std,
                  b->auc_mean, b->auc_std, p_of(sel, model));
    out << line;
  }
  return out.str();
}

}  // namespace deltarad
