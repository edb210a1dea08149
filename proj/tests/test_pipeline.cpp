#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "deltarad/pipeline.hpp"

using namespace deltarad;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig small_config(const std::string& out_dir) {
  PipelineConfig cfg;
  cfg.output_dir = out_dir;
  cfg.threads = 2;
  cfg.registration.levels = 3;
  cfg.registration.smoothness_weights = {96, 48, 24};
  cfg.registration.iterations_per_level = 25;
  cfg.registration.mask_guided = true;
  cfg.registration.working_dims = Dims{32, 32, 32};
  cfg.selection_methods = {"chi2"};
  cfg.k_grid = {4, 8};
  cfg.model_kinds = {"lr"};
  cfg.cv.n_folds = 3;
  cfg.cv.seeds = {1, 2};
  cfg.synth.n_patients = 20;
  cfg.synth.dims = 32;
  cfg.synth.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing diagnoses bad fields") {
  SUBCASE("unknown top-level key") {
    CHECK_THROWS_WITH_AS(
        pipeline_config_from_json_text(R"({"outputs": "x"})", "test"),
        doctest::Contains("outputs"), std::runtime_error);
  }

  SUBCASE("unknown model name points at the entry") {
    CHECK_THROWS_WITH_AS(
        pipeline_config_from_json_text(R"({"models": ["lr", "boost"]})", "test"),
        doctest::Contains("models[1]"), std::runtime_error);
  }

  SUBCASE("unknown selection method points at the entry") {
    CHECK_THROWS_WITH_AS(pipeline_config_from_json_text(
                             R"({"selection": {"methods": ["anova"]}})", "test"),
                         doctest::Contains("selection.methods[0]"),
                         std::runtime_error);
  }

  SUBCASE("weights must match levels") {
    CHECK_THROWS_WITH_AS(
        pipeline_config_from_json_text(
            R"({"registration": {"levels": 4, "smoothness_weights": [1, 2]}})",
            "test"),
        doctest::Contains("smoothness_weights"), std::runtime_error);
  }

  SUBCASE("working_dims accepts a single integer") {
    auto cfg = pipeline_config_from_json_text(
        R"({"registration": {"working_dims": 64}})", "test");
    CHECK(cfg.registration.working_dims == Dims{64, 64, 64});
  }
}

TEST_CASE("pipeline end-to-end on a small phantom cohort") {
  auto dir = fresh_dir("deltarad_pipe_a");
  PipelineConfig cfg = small_config(dir.string());
  EvalReport report = run_pipeline(cfg);

  // 3 variants x 1 selector x 1 model x 3 folds x 2 seeds
  CHECK(report.cells.size() == 3 * 3 * 2);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "registration_log.json"));
  CHECK(fs::exists(dir / "features_withreg.csv"));
  CHECK(fs::exists(dir / "features_noreg.csv"));
  CHECK(fs::exists(dir / "features_baseline.csv"));

  // paired comparison exists for withreg vs noreg
  bool found = false;
  for (const auto& p : report.paired)
    if (p.variant_a == "withreg" && p.variant_b == "noreg" && p.metric == "auc")
      found = true;
  CHECK(found);
}

TEST_CASE("identical timepoints register to tumour dice 1") {
  auto dir = fresh_dir("deltarad_pipe_b");
  PipelineConfig cfg = small_config(dir.string());
  cfg.synth.n_patients = 2;
  run_synth_stage(cfg);

  // rewrite the manifest so B is literally A
  auto entries = load_manifest(cfg.manifest);
  for (auto& e : entries) {
    e.volume_b = e.volume_a;
    e.mask_b = e.mask_a;
    e.breast_b = e.breast_a;
  }
  save_manifest(entries, cfg.manifest);

  auto log = run_register_stage(cfg);
  for (const auto& e : log) CHECK(e.dice_tumour == doctest::Approx(1.0));
}

TEST_CASE("report bytes are identical across thread counts") {
  auto d1 = fresh_dir("deltarad_pipe_c1");
  auto d2 = fresh_dir("deltarad_pipe_c2");
  PipelineConfig c1 = small_config(d1.string());
  PipelineConfig c2 = small_config(d2.string());
  c1.synth.n_patients = 12;
  c2.synth.n_patients = 12;
  c1.threads = 1;
  c2.threads = 2;
  run_pipeline(c1);
  run_pipeline(c2);
  CHECK(slurp((d1 / "report.json").string()) == slurp((d2 / "report.json").string()));
  CHECK(slurp((d1 / "features_withreg.csv").string()) ==
        slurp((d2 / "features_withreg.csv").string()));
}
