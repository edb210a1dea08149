#pragma once

#include <string>
#include <vector>

#include "deltarad/evaluation.hpp"
#include "deltarad/registration.hpp"
#include "deltarad/synth.hpp"

namespace deltarad {

struct PipelineConfig {
  std::string manifest;            // cohort manifest; synth fills it when empty
  std::string output_dir = "out";
  int threads = 0;                 // 0 = hardware concurrency
  RegistrationConfig registration;
  int radiomics_bins = 32;
  std::vector<std::string> selection_methods = {"rfe", "rf", "chi2"};
  std::vector<std::size_t> k_grid = {5, 10, 15, 20};
  std::vector<std::string> model_kinds = {"lr"};
  CvPlan cv;
  SynthConfig synth;
};

/// Parses the pipeline JSON config; unknown or ill-typed keys are reported
/// with their field path.
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig pipeline_config_from_json_text(const std::string& text,
                                              const std::string& origin);

struct RegistrationLogEntry {
  std::string id;
  double final_ncc = 0.0;
  double dice_breast = 0.0;   // warped vs endpoint breast guide (when present)
  double dice_tumour = 0.0;   // warped baseline tumour mask vs endpoint mask
  bool guided = false;
};

/// Generates the phantom cohort into <output_dir>/cohort and points
/// cfg.manifest at it.
void run_synth_stage(PipelineConfig& cfg);

/// Estimates one displacement field per patient (parallel across patients,
/// deterministic outputs) into <output_dir>/fields, and writes
/// registration_log.json in manifest order.
std::vector<RegistrationLogEntry> run_register_stage(const PipelineConfig& cfg);

/// Assembles the three feature tables (with registration, without, baseline)
/// into CSVs under output_dir.
void run_extract_stage(const PipelineConfig& cfg);

/// Cross-validated training/evaluation over the extracted tables; writes
/// report.json and metrics.csv under output_dir.
EvalReport run_train_eval_stage(const PipelineConfig& cfg);

/// All stages chained (synth only when no manifest is configured).
EvalReport run_pipeline(PipelineConfig cfg);

}  // namespace deltarad
