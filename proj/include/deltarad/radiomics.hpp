#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deltarad/volume.hpp"

namespace deltarad {

/// Ordered (name, value) pairs with unique names.
struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;

  void append(std::string name, double value) {
    names.push_back(std::move(name));
    values.push_back(value);
  }
  void append(const FeatureVector& other) {
    names.insert(names.end(), other.names.begin(), other.names.end());
    values.insert(values.end(), other.values.begin(), other.values.end());
  }
  std::size_t size() const { return names.size(); }
  double get(const std::string& name) const;
};

/// Masked voxels assigned to grey-level bins 1..ng (equal-width over the
/// masked intensity range; a constant region collapses to one bin).
struct DiscretizedRegion {
  Dims dims;
  std::vector<std::uint16_t> bins;  // full grid; 0 = outside the mask
  std::vector<std::size_t> voxels;  // linear indices of masked voxels
  int ng = 0;                       // effective bin count

  std::size_t idx(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims.ny * dims.nx +
           static_cast<std::size_t>(y) * dims.nx + static_cast<std::size_t>(x);
  }
};

/// The 13 unique 3D direction offsets at Chebyshev distance 1.
extern const std::array<std::array<int, 3>, 13> kOffsets13;

DiscretizedRegion discretize(const Volume3D& v, const Mask3D& m, int ng);

FeatureVector first_order(const Volume3D& v, const Mask3D& m, int ng = 32);
FeatureVector shape(const Mask3D& m);

FeatureVector glcm_features(const DiscretizedRegion& d);
FeatureVector glcm_features(const DiscretizedRegion& d,
                            std::span<const std::array<int, 3>> offsets);
FeatureVector glrlm_features(const DiscretizedRegion& d);
FeatureVector glrlm_features(const DiscretizedRegion& d,
                             std::span<const std::array<int, 3>> directions);
FeatureVector glszm_features(const DiscretizedRegion& d);
FeatureVector ngtdm_features(const DiscretizedRegion& d);
FeatureVector gldm_features(const DiscretizedRegion& d);

/// First-order plus all texture families over one mask (34 features). An
/// empty mask emits zeros under the same schema (the zero-cube path).
FeatureVector extract_intensity(const Volume3D& v, const Mask3D& m, int ng = 32);

/// Full fixed-schema extraction: shape of geometry_mask followed by
/// extract_intensity over texture_mask. Either mask may be empty; its
/// features are emitted as zeros (the schema never changes).
FeatureVector extract_all(const Volume3D& v, const Mask3D& texture_mask,
                          const Mask3D& geometry_mask, int ng = 32);

/// Fixed feature-name schema of extract_all (38 names, stable order).
const std::vector<std::string>& feature_schema();

/// The 34 intensity/texture names (the tail of feature_schema()).
const std::vector<std::string>& intensity_feature_schema();

}  // namespace deltarad
