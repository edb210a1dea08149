#pragma once

#include <string>
#include <vector>

#include "deltarad/radiomics.hpp"
#include "deltarad/registration.hpp"
#include "deltarad/table.hpp"
#include "deltarad/volume.hpp"

namespace deltarad {

/// Single-timepoint covariates; NaN marks a missing measurement.
struct ClinicalFeatures {
  double er = 0.0;
  double her2 = 0.0;
  double spag5 = 0.0;
  double tnm_stage = 1.0;
};

struct PatientRecord {
  std::string id;
  Volume3D volume_a;
  Mask3D mask_a;
  Volume3D volume_b;
  Mask3D mask_b;   // may be empty: tumour fully resolved
  ClinicalFeatures clinical;
  int label = 0;
  // optional registration guides (whole-organ masks); empty when absent
  Mask3D breast_a;
  Mask3D breast_b;
};

/// Elementwise (a-b)/a; guarded to 0 where |a| < 1e-12. Schemas must match.
FeatureVector delta(const FeatureVector& a, const FeatureVector& b);

/// er, her2, spag5 as {0,1} and tnm_stage as an ordinal scalar; missing
/// values pass through as NaN markers for the imputer.
FeatureVector encode_clinical(const ClinicalFeatures& c);

struct AssembledRow {
  FeatureVector features;
  bool reg_fallback = false;
};

/// Timepoint-A-only features: shape of mask_A, intensity at A, clinical.
FeatureVector features_baseline(const PatientRecord& p, int ng = 32);

/// Shape from mask_B (zeros when empty), delta of intensity features between
/// A (over mask_A) and B (over mask_B; the zero-cube path when empty),
/// clinical appended.
FeatureVector features_without_registration(const PatientRecord& p, int ng = 32);

/// As above, but the B-timepoint intensity region is mask_A warped through
/// `field` (estimated source=A target=B at its own working dims) and resized
/// to B's grid. Geometry still comes from the true mask_B. An empty warped
/// region falls back to the without-registration path and flags the row.
AssembledRow features_with_registration(const PatientRecord& p,
                                        const DisplacementField& field,
                                        int ng = 32);

/// Warped original-site mask in B's native grid (exposed for scoring).
Mask3D warp_site_mask(const PatientRecord& p, const DisplacementField& field);

/// Feature-name schemas of the assembled rows.
std::vector<std::string> longitudinal_row_schema();
std::vector<std::string> baseline_row_schema();

// --- cohort manifest -------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string volume_a, mask_a, volume_b, mask_b;
  std::string breast_a, breast_b;  // optional
  ClinicalFeatures clinical;
  int label = 0;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::vector<ManifestEntry>& entries,
                   const std::string& path);

/// Loads the referenced images (paths resolved relative to the manifest).
PatientRecord load_patient(const ManifestEntry& e, const std::string& manifest_path);

// --- precomputed embeddings ---------------------------------------------------

/// CSV of id plus fixed-width numeric columns (deep-feature vectors computed
/// elsewhere). Rejects ragged rows, non-numeric cells, and duplicate ids.
FeatureTable import_embeddings(const std::string& path);

}  // namespace deltarad
