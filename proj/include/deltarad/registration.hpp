#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deltarad/volume.hpp"

namespace deltarad {

/// Per-voxel offset field (ux, uy, uz) in voxel units of the grid it was
/// estimated on. warp(v, u)(x) samples v at x + u(x).
struct DisplacementField {
  Dims dims;
  std::vector<double> ux, uy, uz;

  DisplacementField() = default;
  explicit DisplacementField(Dims d)
      : dims(d), ux(d.count(), 0.0), uy(d.count(), 0.0), uz(d.count(), 0.0) {}

  std::size_t idx(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims.ny * dims.nx +
           static_cast<std::size_t>(y) * dims.nx + static_cast<std::size_t>(x);
  }
};

struct RegistrationConfig {
  int levels = 4;
  /// One weight per pyramid level, coarse to fine.
  std::vector<double> smoothness_weights = {96.0, 48.0, 24.0, 16.0};
  int iterations_per_level = 100;
  double step_size = 2.0;
  bool mask_guided = false;
  Dims working_dims{128, 128, 128};
  /// Gaussian preconditioning of the descent direction, in voxels. The loss
  /// being minimized is unchanged; this only reconditions the updates.
  double grad_smoothing_sigma = 2.0;
};

/// Global Pearson correlation of intensities over `roi` (whole grid when
/// absent). Returns 0 when either side has zero variance.
double ncc(const Volume3D& a, const Volume3D& b, const Mask3D* roi = nullptr);

/// Diffusion regularizer: mean over voxels of the squared Frobenius norm of
/// the forward-difference Jacobian of u (borders contribute nothing).
double smoothness_penalty(const DisplacementField& u);

/// output(x) = v(x + u(x)) with trilinear interpolation; out-of-bounds sample
/// positions clamp to the border voxel.
Volume3D warp_trilinear(const Volume3D& v, const DisplacementField& u);

/// Same sampling convention with nearest-neighbour lookup; output is binary.
Mask3D warp_nearest(const Mask3D& m, const DisplacementField& u);

/// 2|a∩b| / (|a|+|b|); defined as 1.0 when both masks are empty.
double dice(const Mask3D& a, const Mask3D& b);

// --- loss internals (exposed for gradient verification) -------------------

struct RegistrationLoss {
  double ncc_term = 0.0;        // -ncc(warp(source,u), target, roi)
  double smooth_term = 0.0;     // smoothness_penalty(u), unweighted
  double guide_term = 0.0;      // -soft dice of warped source guide, or 0
  double total = 0.0;           // ncc_term + weight*smooth_term + guide_term
};

/// Loss at one pyramid level. Guides, when present, must match `source` dims;
/// `roi` restricts the support of both the NCC and the guide overlap term
/// (the optimizer builds it as the dilated guide union, which covers the
/// guides' reach). Throws on non-finite loss.
RegistrationLoss registration_loss(const Volume3D& source, const Volume3D& target,
                                   const DisplacementField& u, double smooth_weight,
                                   const Mask3D* roi, const Volume3D* source_guide,
                                   const Volume3D* target_guide);

/// Analytic gradient of registration_loss().total with respect to u.
DisplacementField registration_loss_gradient(
    const Volume3D& source, const Volume3D& target, const DisplacementField& u,
    double smooth_weight, const Mask3D* roi, const Volume3D* source_guide,
    const Volume3D* target_guide);

struct LevelTrace {
  Dims dims;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
};

struct RegistrationResult {
  DisplacementField field;
  std::vector<LevelTrace> levels;
  double final_ncc = 0.0;
};

/// Coarse-to-fine estimation of the displacement field aligning `source`
/// toward `target`, minimizing -NCC + w*smoothness by gradient descent with
/// a backtracking line search (monotone by construction). Inputs must already
/// be at cfg.working_dims. Mask guides are optional; when cfg.mask_guided and
/// both guides are present, NCC is restricted to the dilated union of the
/// guides and a soft-Dice mask-overlap term (weight 1) is added.
RegistrationResult register_pair(const Volume3D& source, const Volume3D& target,
                                 const RegistrationConfig& cfg,
                                 const Mask3D* source_guide = nullptr,
                                 const Mask3D* target_guide = nullptr);

/// Chebyshev dilation by `radius` voxels (26-neighbourhood iterations).
Mask3D dilate(const Mask3D& m, int radius);

// Fields are serialized as three scalar MetaImage volumes with _ux/_uy/_uz
// suffixes appended to `base_path` (e.g. base "f" -> f_ux.mhd, ...).
void save_field(const DisplacementField& u, const std::string& base_path);
DisplacementField load_field(const std::string& base_path);

}  // namespace deltarad
