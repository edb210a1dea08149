#pragma once

#include <cmath>

#include "deltarad/rng.hpp"
#include "deltarad/volume.hpp"

namespace testutil {

inline deltarad::Volume3D random_volume(deltarad::Dims d, std::uint64_t seed,
                                        double lo = 0.0, double hi = 100.0) {
  deltarad::rng::Engine eng(seed);
  deltarad::Volume3D v(d, deltarad::Spacing{});
  for (auto& x : v.data) x = static_cast<float>(eng.uniform(lo, hi));
  return v;
}

inline deltarad::Mask3D random_mask(deltarad::Dims d, std::uint64_t seed,
                                    double fill_prob = 0.5) {
  deltarad::rng::Engine eng(seed);
  deltarad::Mask3D m(d, deltarad::Spacing{});
  bool any = false;
  for (auto& x : m.data) {
    x = eng.bernoulli(fill_prob) ? 1 : 0;
    any = any || x;
  }
  if (!any) m.data[0] = 1;
  return m;
}

inline deltarad::Mask3D ball_mask(deltarad::Dims d, double cx, double cy,
                                  double cz, double r) {
  deltarad::Mask3D m(d, deltarad::Spacing{});
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        if (dx * dx + dy * dy + dz * dz <= r * r) m.at(x, y, z) = 1;
      }
  return m;
}

}  // namespace testutil
