// Acceptance suite: end-to-end checks of the whole toolkit against
// independent oracles, phantom ground truth, and the experimental protocol.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deltarad/evaluation.hpp"
#include "deltarad/longitudinal.hpp"
#include "deltarad/parallel.hpp"
#include "deltarad/pipeline.hpp"
#include "deltarad/radiomics.hpp"
#include "deltarad/registration.hpp"
#include "deltarad/rng.hpp"
#include "deltarad/synth.hpp"
#include "oracles.hpp"

using namespace deltarad;
namespace fs = std::filesystem;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Volume3D random_volume(Dims d, std::uint64_t seed) {
  rng::Engine eng(seed);
  Volume3D v(d, Spacing{});
  for (auto& x : v.data) x = static_cast<float>(eng.uniform(0, 100));
  return v;
}

Mask3D random_mask(Dims d, std::uint64_t seed, double p) {
  rng::Engine eng(seed);
  Mask3D m(d, Spacing{});
  bool any = false;
  for (auto& x : m.data) {
    x = eng.bernoulli(p) ? 1 : 0;
    any = any || x;
  }
  if (!any) m.data[0] = 1;
  return m;
}

// --- criterion 1: radiomics oracle equivalence ------------------------------

Outcome criterion_radiomics_oracles() {
  const double t0 = now_seconds();
  const int instances = 102;
  const int ngs[3] = {2, 4, 8};
  double worst = 0.0;
  std::string worst_name;

  for (int i = 0; i < instances; ++i) {
    const Dims d{6, 6, 6};
    Volume3D v = random_volume(d, 1000 + i);
    Mask3D m = random_mask(d, 2000 + i, i % 5 == 0 ? 1.0 : 0.65);
    const int ng = ngs[i % 3];

    auto impl = extract_all(v, m, m, ng);
    auto want = oracles::naive_intensity_features(v, m, ng);
    for (auto& [k, val] : oracles::naive_shape(m)) want[k] = val;

    for (std::size_t c = 0; c < impl.size(); ++c) {
      const double got = impl.values[c];
      const double ref = want.at(impl.names[c]);
      const double rel =
          std::abs(got - ref) / std::max({std::abs(got), std::abs(ref), 1.0});
      if (rel > worst) {
        worst = rel;
        worst_name = impl.names[c];
      }
    }
  }
  const double elapsed = now_seconds() - t0;

  Outcome o;
  o.pass = worst < 1e-10 && elapsed < 60.0;
  std::ostringstream msg;
  msg << instances << " regions x " << feature_schema().size()
      << " features, worst rel err " << worst;
  if (!worst_name.empty()) msg << " (" << worst_name << ")";
  msg << ", " << elapsed << " s";
  o.detail = msg.str();
  return o;
}

// --- criterion 2: registration recovery --------------------------------------

float translation_phantom(double x, double y, double z, std::uint64_t seed) {
  rng::Engine eng(seed);
  double v = 0.15 * x + 0.05 * y;
  for (int i = 0; i < 14; ++i) {
    const double cx = eng.uniform(10, 54), cy = eng.uniform(10, 54),
                 cz = eng.uniform(10, 54);
    const double amp = eng.uniform(40, 120);
    const double sg = eng.uniform(4.0, 9.0);
    const double r2 =
        (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
    v += amp * std::exp(-r2 / (2 * sg * sg));
  }
  return static_cast<float>(v);
}

Outcome criterion_registration_recovery(const fs::path& work, int threads) {
  const double t0 = now_seconds();

  SynthConfig synth_cfg;
  synth_cfg.n_patients = 10;
  synth_cfg.dims = 128;
  synth_cfg.seed = 424242;
  auto cohort = generate(synth_cfg, (work / "reg128").string(), threads);

  RegistrationConfig reg;  // table regime: weights (96,48,24,16), guided
  reg.mask_guided = true;
  reg.working_dims = Dims{128, 128, 128};

  std::vector<double> dices(cohort.entries.size(), 0.0);
  parallel_for(cohort.entries.size(), threads, [&](std::size_t i) {
    PatientRecord p = load_patient(cohort.entries[i], cohort.manifest_path);
    auto res = register_pair(p.volume_a, p.volume_b, reg, &p.breast_a, &p.breast_b);
    dices[i] = dice(warp_nearest(p.breast_a, res.field), p.breast_b);
  });
  int ok = 0;
  for (double d : dices) ok += d >= 0.95;

  // pure translation: target(x) = source(x + 3)
  const Dims td{64, 64, 64};
  Volume3D src(td, Spacing{});
  Volume3D tgt(td, Spacing{});
  for (int z = 0; z < td.nz; ++z)
    for (int y = 0; y < td.ny; ++y)
      for (int x = 0; x < td.nx; ++x) {
        src.at(x, y, z) = translation_phantom(x, y, z, 777);
        tgt.at(x, y, z) = translation_phantom(x + 3.0, y, z, 777);
      }
  RegistrationConfig treg;
  treg.working_dims = td;
  auto tres = register_pair(src, tgt, treg);
  std::vector<double> ux = tres.field.ux;
  std::nth_element(ux.begin(), ux.begin() + ux.size() / 2, ux.end());
  const double median_ux = ux[ux.size() / 2];
  const double elapsed = now_seconds() - t0;

  Outcome o;
  o.pass = ok >= 8 && std::abs(median_ux - 3.0) < 0.5 && elapsed < 600.0;
  std::ostringstream msg;
  msg << "breast dice >= 0.95 on " << ok << "/10 pairs [";
  for (std::size_t i = 0; i < dices.size(); ++i)
    msg << (i ? " " : "") << static_cast<int>(dices[i] * 1000) / 1000.0;
  msg << "], translation median ux " << median_ux << ", " << elapsed << " s";
  o.detail = msg.str();
  return o;
}

// --- criterion 3: gradient checks ---------------------------------------------

Outcome criterion_gradient_checks() {
  double reg_worst = 0.0;

  for (int rep = 0; rep < 3; ++rep) {
    const Dims d{6, 6, 6};
    Volume3D s = random_volume(d, 3100 + rep);
    Volume3D t = random_volume(d, 3200 + rep);
    rng::Engine eng(3300 + rep);
    DisplacementField u(d);
    for (std::size_t i = 0; i < u.ux.size(); ++i) {
      auto draw = [&]() {
        const double m = eng.uniform(0.05, 0.4);
        return eng.bernoulli(0.5) ? m : -m;
      };
      u.ux[i] = draw();
      u.uy[i] = draw();
      u.uz[i] = draw();
    }
    Mask3D roi = random_mask(d, 3400 + rep, 0.6);
    Volume3D sg(d, Spacing{});
    Volume3D tg(d, Spacing{});
    for (std::size_t i = 0; i < sg.data.size(); ++i) {
      sg.data[i] = (i % 7) < 3 ? 1.0f : 0.0f;
      tg.data[i] = (i % 5) < 2 ? 1.0f : 0.0f;
    }
    const bool guided = rep % 2 == 0;
    auto ga = registration_loss_gradient(s, t, u, 8.0, guided ? &roi : nullptr,
                                         guided ? &sg : nullptr,
                                         guided ? &tg : nullptr);
    auto fd = oracles::fd_loss_gradient(s, t, u, 8.0, guided ? &roi : nullptr,
                                        guided ? &sg : nullptr,
                                        guided ? &tg : nullptr, 1e-5);
    double scale = 0, diff = 0;
    for (std::size_t i = 0; i < fd.ux.size(); ++i) {
      scale = std::max({scale, std::abs(fd.ux[i]), std::abs(fd.uy[i]),
                        std::abs(fd.uz[i])});
      diff = std::max({diff, std::abs(ga.ux[i] - fd.ux[i]),
                       std::abs(ga.uy[i] - fd.uy[i]),
                       std::abs(ga.uz[i] - fd.uz[i])});
    }
    reg_worst = std::max(reg_worst, diff / std::max(scale, 1e-12));
  }

  // LR and MLP objective gradients
  auto model_gradcheck = [](const std::function<double(const std::vector<double>&,
                                                       std::vector<double>*)>& f,
                            std::vector<double> params, double h) {
    std::vector<double> g;
    f(params, &g);
    double scale = 0, worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + h;
      const double lp = f(params, nullptr);
      params[i] = orig - h;
      const double lm = f(params, nullptr);
      params[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      scale = std::max(scale, std::abs(fd));
      worst = std::max(worst, std::abs(fd - g[i]));
    }
    return worst / std::max(scale, 1e-12);
  };

  rng::Engine eng(3500);
  FeatureTable t;
  for (int c = 0; c < 5; ++c) t.feature_names.push_back("f" + std::to_string(c));
  for (int i = 0; i < 10; ++i) {
    std::vector<double> row(5);
    for (auto& v : row) v = eng.uniform(-1, 1);
    t.add_row("p" + std::to_string(i), row, i % 2);
  }

  std::vector<double> lrp(6);
  for (auto& v : lrp) v = eng.uniform(-0.5, 0.5);
  const double lr_err = model_gradcheck(
      [&](const std::vector<double>& p, std::vector<double>* g) {
        return lr_objective(p, t, 0.4, g);
      },
      lrp, 1e-6);

  const std::vector<int> sizes = {5, 6, 4, 1};
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
    count += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  std::vector<double> mlpp(count);
  for (auto& v : mlpp) v = eng.normal(0, 0.4);
  const double mlp_err = model_gradcheck(
      [&](const std::vector<double>& p, std::vector<double>* g) {
        return mlp_objective(p, sizes, t, 1e-4, g);
      },
      mlpp, 1e-6);

  Outcome o;
  o.pass = reg_worst < 1e-4 && lr_err < 1e-5 && mlp_err < 1e-5;
  std::ostringstream msg;
  msg << "registration " << reg_worst << " (<1e-4), lr " << lr_err << ", mlp "
      << mlp_err << " (<1e-5)";
  o.detail = msg.str();
  return o;
}

// --- criterion 4: statistics oracles -------------------------------------------

Outcome criterion_statistics_oracles() {
  rng::Engine eng(4000);
  int auc_exact = 0, auc_total = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + eng.uniform_index(40);
    std::vector<int> y(n);
    std::vector<double> s(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = eng.bernoulli(0.4) ? 1 : 0;
      (y[i] ? has1 : has0) = true;
      s[i] = static_cast<double>(eng.uniform_index(8)) / 7.0;  // ties likely
    }
    if (!has0 || !has1) continue;
    ++auc_total;
    if (auc(y, s) == oracles::naive_auc(y, s)) ++auc_exact;
  }

  int wil_checked = 0;
  double wil_worst = 0.0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      std::vector<double> a(n), b(n);
      bool all_zero = true;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(eng.uniform_index(6));
        b[i] = static_cast<double>(eng.uniform_index(6));
        all_zero = all_zero && a[i] == b[i];
      }
      if (all_zero) continue;
      const double got = wilcoxon_signed_rank(a, b).p;
      const double want = oracles::naive_wilcoxon_exact_p(a, b);
      wil_worst = std::max(wil_worst, std::abs(got - want));
      ++wil_checked;
    }
  }

  Outcome o;
  o.pass = auc_exact == auc_total && wil_worst < 1e-12 && wil_checked > 300;
  std::ostringstream msg;
  msg << "auc exact on " << auc_exact << "/" << auc_total
      << " instances, wilcoxon max |dp| " << wil_worst << " over " << wil_checked
      << " vectors (n<=12)";
  o.detail = msg.str();
  return o;
}

// --- shared end-to-end cohort (criteria 5, 6, 7) -----------------------------

struct E2E {
  PipelineConfig cfg;
  EvalReport report;
  double elapsed = 0.0;
  std::vector<SynthPatientTruth> truths;
  FeatureTable withreg, noreg, baseline;
};

E2E run_e2e_cohort(const fs::path& work, int threads) {
  E2E e;
  const double t0 = now_seconds();

  e.cfg.output_dir = (work / "e2e").string();
  e.cfg.threads = threads;
  e.cfg.registration.mask_guided = true;
  e.cfg.registration.working_dims = Dims{64, 64, 64};
  e.cfg.registration.iterations_per_level = 60;
  e.cfg.selection_methods = {"rfe"};
  e.cfg.model_kinds = {"lr"};
  e.cfg.synth.n_patients = 200;
  e.cfg.synth.dims = 64;
  e.cfg.synth.seed = 20260809;
  e.cfg.synth.disappear_fraction = 0.3;
  e.cfg.synth.pcr_prevalence = 0.279;

  e.report = run_pipeline(e.cfg);
  e.elapsed = now_seconds() - t0;
  e.truths = load_ground_truth(
      (fs::path(e.cfg.output_dir) / "cohort" / "ground_truth.json").string());
  e.withreg =
      load_csv((fs::path(e.cfg.output_dir) / "features_withreg.csv").string());
  e.noreg =
      load_csv((fs::path(e.cfg.output_dir) / "features_noreg.csv").string());
  e.baseline =
      load_csv((fs::path(e.cfg.output_dir) / "features_baseline.csv").string());
  return e;
}

// --- criterion 5: zero-cube semantics ------------------------------------------

Outcome criterion_zero_cube(const E2E& e) {
  int patients = 0, bad_noreg = 0;
  double min_frac_differ = 1.0;

  for (std::size_t r = 0; r < e.noreg.rows(); ++r) {
    const auto& id = e.noreg.ids[r];
    auto truth = std::find_if(e.truths.begin(), e.truths.end(),
                              [&](const auto& t) { return t.id == id; });
    if (truth == e.truths.end() || !truth->disappeared) continue;
    ++patients;

    int differ = 0, total = 0;
    for (std::size_t c = 0; c < e.noreg.cols(); ++c) {
      const std::string& name = e.noreg.feature_names[c];
      if (name.rfind("delta_", 0) != 0) continue;
      // baseline table holds the raw A-timepoint feature under the bare name
      const double base = e.baseline.at(r, e.baseline.col_index(name.substr(6)));
      if (base != 0.0 && e.noreg.at(r, c) != 1.0) ++bad_noreg;

      ++total;
      if (e.withreg.at(r, c) != 1.0) ++differ;
    }
    min_frac_differ =
        std::min(min_frac_differ, static_cast<double>(differ) / total);
  }

  Outcome o;
  o.pass = patients > 0 && bad_noreg == 0 && min_frac_differ >= 0.5;
  std::ostringstream msg;
  msg << patients << " empty-endpoint patients, " << bad_noreg
      << " without-registration deltas != 1, with-registration deltas differ for >= "
      << min_frac_differ * 100 << "% of features";
  o.detail = msg.str();
  return o;
}

// --- criterion 6: directional end-to-end reproduction ---------------------------

Outcome criterion_directional(const E2E& e) {
  const VariantSummary* with = nullptr;
  const VariantSummary* without = nullptr;
  for (const auto& s : e.report.summaries) {
    if (s.selector != "rfe" || s.model != "lr") continue;
    if (s.variant == "withreg") with = &s;
    if (s.variant == "noreg") without = &s;
  }
  const PairedTest* pt = nullptr;
  for (const auto& p : e.report.paired)
    if (p.variant_a == "withreg" && p.variant_b == "noreg" &&
        p.selector == "rfe" && p.model == "lr" && p.metric == "auc")
      pt = &p;

  Outcome o;
  if (!with || !without || !pt) {
    o.detail = "missing report rows";
    return o;
  }
  o.pass = with->auc_mean > without->auc_mean && pt->test.comparable &&
           pt->test.p < 0.05 && e.elapsed < 1800.0;
  std::ostringstream msg;
  msg << "lr+rfe auc with " << with->auc_mean << " vs without "
      << without->auc_mean << ", wilcoxon p " << pt->test.p << " over "
      << pt->test.n_used << " pairs, e2e " << e.elapsed << " s";
  o.detail = msg.str();
  return o;
}

// --- criterion 7: baseline vs longitudinal ordering -----------------------------

Outcome criterion_ordering(const E2E& e) {
  auto auc_of = [&](const std::string& variant) {
    for (const auto& s : e.report.summaries)
      if (s.variant == variant && s.selector == "rfe" && s.model == "lr")
        return s.auc_mean;
    return -1.0;
  };
  const double with = auc_of("withreg");
  const double without = auc_of("noreg");
  const double base = auc_of("baseline");

  Outcome o;
  o.pass = with >= base && without >= base && base > 0;
  std::ostringstream msg;
  msg << "longitudinal auc (with " << with << ", without " << without
      << ") vs baseline " << base;
  o.detail = msg.str();
  return o;
}

// --- criterion 8: leakage sentinel ----------------------------------------------

std::size_t fnv1a(const std::string& s) {
  std::size_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Outcome criterion_leakage(const E2E& e) {
  const FeatureTable& cohort = e.withreg;
  auto fold = stratified_folds(cohort.labels, 5, 99);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t r = 0; r < cohort.rows(); ++r)
    (fold[r] == 0 ? test_idx : train_idx).push_back(r);

  ModelConfig lr;
  lr.kind = ModelKind::lr;
  auto fingerprint = [&](const FeatureTable& full) {
    std::string blob;
    for (const char* sel : {"chi2", "rf", "rfe"}) {
      FoldFit fit = fit_fold(full.subset_rows(train_idx), sel, lr,
                             {5, 10, 15, 20}, 424);
      blob += serialize_model(fit.model);
      blob += selection_to_json(fit.selection);
      for (double v : fit.preprocess.min) blob += std::to_string(v);
      for (double v : fit.preprocess.max) blob += std::to_string(v);
      for (double v : fit.preprocess.median) blob += std::to_string(v);
      blob += std::to_string(fit.chosen_k);
    }
    return fnv1a(blob);
  };

  const std::size_t clean = fingerprint(cohort);
  FeatureTable corrupted = cohort;
  for (auto r : test_idx) {
    corrupted.labels[r] = 1 - corrupted.labels[r];
    for (std::size_t c = 0; c < corrupted.cols(); ++c)
      corrupted.at(r, c) = -7.5 + static_cast<double>(c);
  }
  const std::size_t dirty = fingerprint(corrupted);

  Outcome o;
  o.pass = clean == dirty;
  std::ostringstream msg;
  msg << "fit fingerprints " << (o.pass ? "identical" : "DIFFER")
      << " after corrupting " << test_idx.size() << " held-out rows";
  o.detail = msg.str();
  return o;
}

// --- criterion 9: thread-count determinism ---------------------------------------

Outcome criterion_determinism(const fs::path& work) {
  auto small_cfg = [&](const std::string& out, int threads) {
    PipelineConfig cfg;
    cfg.output_dir = out;
    cfg.threads = threads;
    cfg.registration.levels = 3;
    cfg.registration.smoothness_weights = {96, 48, 24};
    cfg.registration.iterations_per_level = 25;
    cfg.registration.mask_guided = true;
    cfg.registration.working_dims = Dims{32, 32, 32};
    cfg.selection_methods = {"chi2", "rfe"};
    cfg.model_kinds = {"lr"};
    cfg.cv.n_folds = 3;
    cfg.cv.seeds = {1, 2};
    cfg.synth.n_patients = 12;
    cfg.synth.dims = 32;
    cfg.synth.seed = 5;
    return cfg;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };

  run_pipeline(small_cfg((work / "det1").string(), 1));
  run_pipeline(small_cfg((work / "det2").string(), 4));
  const std::string r1 = slurp(work / "det1" / "report.json");
  const std::string r2 = slurp(work / "det2" / "report.json");

  Outcome o;
  o.pass = !r1.empty() && r1 == r2;
  std::ostringstream msg;
  msg << "report.json " << (o.pass ? "byte-identical" : "DIFFERS")
      << " across --threads 1 vs 4 (" << r1.size() << " bytes)";
  o.detail = msg.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : 0;
  const fs::path work = fs::temp_directory_path() / "deltarad_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int number, const std::string& name, const Outcome& o) {
    std::printf("[%s] criterion %d: %s — %s\n", o.pass ? "PASS" : "FAIL", number,
                name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "radiomics oracle equivalence", criterion_radiomics_oracles());
  report(2, "registration recovery", criterion_registration_recovery(work, threads));
  report(3, "gradient checks", criterion_gradient_checks());
  report(4, "statistics oracles", criterion_statistics_oracles());

  E2E e2e = run_e2e_cohort(work, threads);
  report(5, "zero-cube semantics", criterion_zero_cube(e2e));
  report(6, "directional end-to-end reproduction", criterion_directional(e2e));
  report(7, "baseline vs longitudinal ordering", criterion_ordering(e2e));
  report(8, "leakage sentinel", criterion_leakage(e2e));
  report(9, "thread-count determinism", criterion_determinism(work));

  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 9 criteria passed\n");
  return 0;
}
