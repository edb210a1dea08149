#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deltarad/longitudinal.hpp"
#include "deltarad/registration.hpp"

namespace deltarad {

/// Phantom cohort generator. Defaults follow the summary statistics of the
/// clinical cohort this pipeline targets (responder prevalence 27.9%,
/// class-conditional biomarker rates), with the geometry/texture response
/// model documented field by field.
struct SynthConfig {
  int n_patients = 20;
  int dims = 64;                    // cubic grids
  std::uint64_t seed = 1;
  double pcr_prevalence = 0.279;
  double disappear_fraction = 0.3;  // responders with an empty endpoint mask

  // residual-core scale per class (the endpoint tumour mask is the core)
  double shrink_responder_lo = 0.35, shrink_responder_hi = 0.8;
  double shrink_nonresponder_lo = 0.65, shrink_nonresponder_hi = 1.0;

  // intensity retention outside the resistant core at timepoint B
  double washout_responder_lo = 0.05, washout_responder_hi = 0.3;
  double washout_nonresponder_lo = 0.8, washout_nonresponder_hi = 1.0;

  // smooth ground-truth deformation (amplitude in voxels at dims=64,
  // rescaled with the grid)
  double deformation_amplitude = 2.5;
  int deformation_grid = 5;
  double smoothness_bound = 0.5;

  // correlation-length difference of intratumoral texture between classes;
  // 0 removes the label signal from baseline texture entirely
  double texture_coupling = 1.0;

  double clinical_missing_rate = 0.02;
  // class-conditional positivity rates [non-responder, responder]
  double spag5_rate[2] = {0.355, 0.850};
  double er_rate[2] = {0.610, 0.395};
  double her2_rate[2] = {0.244, 0.551};

  bool store_fields = false;
};

struct SynthPatientTruth {
  std::string id;
  int label = 0;
  bool disappeared = false;
  double shrink = 1.0;
  double washout = 1.0;
  std::string site_mask;   // mask_A warped by the true field, in B space
  std::string field_base;  // set when store_fields
  double field_smoothness = 0.0;
};

struct SynthResult {
  std::string manifest_path;
  std::string ground_truth_path;
  std::vector<ManifestEntry> entries;
  std::vector<SynthPatientTruth> truths;
};

/// Writes the cohort (volumes, masks, manifest, ground truth) under out_dir.
/// Bit-identical rerun for a fixed config regardless of the worker count.
SynthResult generate(const SynthConfig& cfg, const std::string& out_dir,
                     int threads = 1);

std::vector<SynthPatientTruth> load_ground_truth(const std::string& path);

}  // namespace deltarad
