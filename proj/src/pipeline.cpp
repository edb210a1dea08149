#include "deltarad/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "deltarad/longitudinal.hpp"
#include "deltarad/parallel.hpp"
#include "deltarad/table.hpp"

namespace deltarad {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void config_error(const std::string& origin, const std::string& field,
                               const std::string& why) {
  throw std::runtime_error("config error (" + origin + "): field '" + field +
                           "': " + why);
}

void check_keys(const json& j, const std::string& origin, const std::string& scope,
                std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      config_error(origin, scope.empty() ? it.key() : scope + "." + it.key(),
                   "unknown key");
  }
}

template <typename T>
T get_or(const json& j, const std::string& origin, const std::string& field,
         const T& fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    config_error(origin, field, e.what());
  }
}

Dims parse_dims(const json& j, const std::string& origin, const std::string& field,
                Dims fallback) {
  if (!j.contains(field)) return fallback;
  const auto& v = j.at(field);
  if (v.is_number_integer()) {
    const int n = v.get<int>();
    return Dims{n, n, n};
  }
  if (v.is_array() && v.size() == 3)
    return Dims{v[0].get<int>(), v[1].get<int>(), v[2].get<int>()};
  config_error(origin, field, "expected an integer or a 3-element array");
}

std::string field_base_for(const PipelineConfig& cfg, const std::string& id) {
  return (fs::path(cfg.output_dir) / "fields" / id).string();
}

}  // namespace

PipelineConfig pipeline_config_from_json_text(const std::string& text,
                                              const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error("config error (" + origin + "): not valid JSON: " +
                             e.what());
  }
  check_keys(j, origin, "", {"manifest", "output_dir", "threads", "registration",
                             "radiomics", "selection", "models", "cv", "synth"});

  PipelineConfig cfg;
  cfg.manifest = get_or<std::string>(j, origin, "manifest", "");
  cfg.output_dir = get_or<std::string>(j, origin, "output_dir", "out");
  cfg.threads = get_or<int>(j, origin, "threads", 0);

  if (j.contains("registration")) {
    const auto& r = j.at("registration");
    check_keys(r, origin, "registration",
               {"levels", "smoothness_weights", "iterations_per_level",
                "step_size", "mask_guided", "working_dims", "grad_smoothing_sigma"});
    cfg.registration.levels = get_or<int>(r, origin, "levels", 4);
    cfg.registration.smoothness_weights = get_or<std::vector<double>>(
        r, origin, "smoothness_weights", {96.0, 48.0, 24.0, 16.0});
    cfg.registration.iterations_per_level =
        get_or<int>(r, origin, "iterations_per_level", 100);
    cfg.registration.step_size = get_or<double>(r, origin, "step_size", 2.0);
    cfg.registration.mask_guided = get_or<bool>(r, origin, "mask_guided", false);
    cfg.registration.working_dims =
        parse_dims(r, origin, "working_dims", Dims{128, 128, 128});
    cfg.registration.grad_smoothing_sigma =
        get_or<double>(r, origin, "grad_smoothing_sigma", 2.0);
    if (static_cast<int>(cfg.registration.smoothness_weights.size()) !=
        cfg.registration.levels)
      config_error(origin, "registration.smoothness_weights",
                   "need exactly one weight per level");
  }

  if (j.contains("radiomics")) {
    const auto& r = j.at("radiomics");
    check_keys(r, origin, "radiomics", {"bins"});
    cfg.radiomics_bins = get_or<int>(r, origin, "bins", 32);
    if (cfg.radiomics_bins < 1)
      config_error(origin, "radiomics.bins", "must be >= 1");
  }

  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    check_keys(s, origin, "selection", {"methods", "k_grid"});
    cfg.selection_methods = get_or<std::vector<std::string>>(
        s, origin, "methods", {"rfe", "rf", "chi2"});
    for (std::size_t i = 0; i < cfg.selection_methods.size(); ++i) {
      const auto& m = cfg.selection_methods[i];
      if (m != "rfe" && m != "rf" && m != "chi2")
        config_error(origin, "selection.methods[" + std::to_string(i) + "]",
                     "unknown method '" + m + "' (expected rfe|rf|chi2)");
    }
    cfg.k_grid = get_or<std::vector<std::size_t>>(s, origin, "k_grid",
                                                  {5, 10, 15, 20});
  }

  if (j.contains("models")) {
    cfg.model_kinds = get_or<std::vector<std::string>>(j, origin, "models",
                                                       {"lr"});
    for (std::size_t i = 0; i < cfg.model_kinds.size(); ++i) {
      try {
        model_kind_from_string(cfg.model_kinds[i]);
      } catch (const std::invalid_argument& e) {
        config_error(origin, "models[" + std::to_string(i) + "]", e.what());
      }
    }
  }

  if (j.contains("cv")) {
    const auto& c = j.at("cv");
    check_keys(c, origin, "cv", {"folds", "seeds"});
    cfg.cv.n_folds = get_or<int>(c, origin, "folds", 5);
    cfg.cv.seeds = get_or<std::vector<std::uint64_t>>(c, origin, "seeds",
                                                      {1, 2, 3, 4, 5, 6, 7, 8});
    if (cfg.cv.seeds.empty()) config_error(origin, "cv.seeds", "must be nonempty");
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, origin, "synth",
               {"n_patients", "dims", "seed", "pcr_prevalence",
                "disappear_fraction", "deformation_amplitude", "deformation_grid",
                "texture_coupling", "clinical_missing_rate", "store_fields"});
    cfg.synth.n_patients = get_or<int>(s, origin, "n_patients", 20);
    cfg.synth.dims = get_or<int>(s, origin, "dims", 64);
    cfg.synth.seed = get_or<std::uint64_t>(s, origin, "seed", 1);
    cfg.synth.pcr_prevalence = get_or<double>(s, origin, "pcr_prevalence", 0.279);
    cfg.synth.disappear_fraction =
        get_or<double>(s, origin, "disappear_fraction", 0.3);
    cfg.synth.deformation_amplitude =
        get_or<double>(s, origin, "deformation_amplitude", 2.5);
    cfg.synth.deformation_grid = get_or<int>(s, origin, "deformation_grid", 5);
    cfg.synth.texture_coupling = get_or<double>(s, origin, "texture_coupling", 1.0);
    cfg.synth.clinical_missing_rate =
        get_or<double>(s, origin, "clinical_missing_rate", 0.02);
    cfg.synth.store_fields = get_or<bool>(s, origin, "store_fields", false);
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return pipeline_config_from_json_text(text, path);
}

void run_synth_stage(PipelineConfig& cfg) {
  const std::string cohort_dir = (fs::path(cfg.output_dir) / "cohort").string();
  SynthResult res = generate(cfg.synth, cohort_dir, cfg.threads);
  cfg.manifest = res.manifest_path;
}

std::vector<RegistrationLogEntry> run_register_stage(const PipelineConfig& cfg) {
  if (cfg.manifest.empty())
    throw std::runtime_error("register stage: no manifest configured");
  const auto entries = load_manifest(cfg.manifest);
  fs::create_directories(fs::path(cfg.output_dir) / "fields");

  std::vector<RegistrationLogEntry> log(entries.size());
  parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
    const PatientRecord p = load_patient(entries[i], cfg.manifest);
    const bool guided = cfg.registration.mask_guided &&
                        !p.breast_a.data.empty() && !p.breast_b.data.empty();
    RegistrationResult res =
        register_pair(p.volume_a, p.volume_b, cfg.registration,
                      guided ? &p.breast_a : nullptr,
                      guided ? &p.breast_b : nullptr);
    save_field(res.field, field_base_for(cfg, p.id));

    RegistrationLogEntry e;
    e.id = p.id;
    e.final_ncc = res.final_ncc;
    e.guided = guided;
    const Dims wd = cfg.registration.working_dims;
    {
      Mask3D ma = p.mask_a.dims == wd ? p.mask_a : resize_nearest(p.mask_a, wd);
      Mask3D mb = p.mask_b.dims == wd ? p.mask_b : resize_nearest(p.mask_b, wd);
      e.dice_tumour = dice(warp_nearest(ma, res.field), mb);
    }
    if (guided) {
      Mask3D ba = p.breast_a.dims == wd ? p.breast_a : resize_nearest(p.breast_a, wd);
      Mask3D bb = p.breast_b.dims == wd ? p.breast_b : resize_nearest(p.breast_b, wd);
      e.dice_breast = dice(warp_nearest(ba, res.field), bb);
    }
    log[i] = std::move(e);
  });

  json j = json::array();
  for (const auto& e : log)
    j.push_back({{"id", e.id},
                 {"final_ncc", e.final_ncc},
                 {"dice_breast", e.dice_breast},
                 {"dice_tumour", e.dice_tumour},
                 {"guided", e.guided}});
  std::ofstream out(fs::path(cfg.output_dir) / "registration_log.json");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write registration_log.json");
  return log;
}

void run_extract_stage(const PipelineConfig& cfg) {
  if (cfg.manifest.empty())
    throw std::runtime_error("extract stage: no manifest configured");
  const auto entries = load_manifest(cfg.manifest);

  struct RowSet {
    std::vector<double> withreg, noreg, baseline;
    std::uint8_t flag = 0;
  };
  std::vector<RowSet> rows(entries.size());

  parallel_for(entries.size(), cfg.threads, [&](std::size_t i) {
    const PatientRecord p = load_patient(entries[i], cfg.manifest);
    const DisplacementField field = load_field(field_base_for(cfg, p.id));

    RowSet r;
    r.baseline = features_baseline(p, cfg.radiomics_bins).values;
    r.noreg = features_without_registration(p, cfg.radiomics_bins).values;
    AssembledRow wr = features_with_registration(p, field, cfg.radiomics_bins);
    r.withreg = wr.features.values;
    r.flag = wr.reg_fallback ? 1 : 0;
    rows[i] = std::move(r);
  });

  FeatureTable withreg, noreg, baseline;
  withreg.feature_names = longitudinal_row_schema();
  noreg.feature_names = longitudinal_row_schema();
  baseline.feature_names = baseline_row_schema();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    withreg.add_row(entries[i].id, rows[i].withreg, entries[i].label, rows[i].flag);
    noreg.add_row(entries[i].id, rows[i].noreg, entries[i].label, 0);
    baseline.add_row(entries[i].id, rows[i].baseline, entries[i].label, 0);
  }
  save_csv(withreg, (fs::path(cfg.output_dir) / "features_withreg.csv").string());
  save_csv(noreg, (fs::path(cfg.output_dir) / "features_noreg.csv").string());
  save_csv(baseline, (fs::path(cfg.output_dir) / "features_baseline.csv").string());
}

EvalReport run_train_eval_stage(const PipelineConfig& cfg) {
  std::map<std::string, FeatureTable> variants;
  variants["withreg"] =
      load_csv((fs::path(cfg.output_dir) / "features_withreg.csv").string());
  variants["noreg"] =
      load_csv((fs::path(cfg.output_dir) / "features_noreg.csv").string());
  variants["baseline"] =
      load_csv((fs::path(cfg.output_dir) / "features_baseline.csv").string());

  ExperimentSpec spec;
  spec.plan = cfg.cv;
  spec.selectors = cfg.selection_methods;
  spec.k_grid = cfg.k_grid;
  for (const auto& kind : cfg.model_kinds) {
    ModelConfig mc;
    mc.kind = model_kind_from_string(kind);
    spec.models.push_back(mc);
  }
  spec.pairings = {{"withreg", "noreg"}};

  EvalReport report = run_experiment(variants, spec);
  {
    std::ofstream out(fs::path(cfg.output_dir) / "report.json");
    out << report.to_json() << "\n";
    if (!out) throw std::runtime_error("cannot write report.json");
  }
  {
    std::ofstream out(fs::path(cfg.output_dir) / "metrics.csv");
    out << report.cells_csv();
    if (!out) throw std::runtime_error("cannot write metrics.csv");
  }
  return report;
}

EvalReport run_pipeline(PipelineConfig cfg) {
  fs::create_directories(cfg.output_dir);
  if (cfg.manifest.empty()) run_synth_stage(cfg);
  run_register_stage(cfg);
  run_extract_stage(cfg);
  return run_train_eval_stage(cfg);
}

}  // namespace deltarad
