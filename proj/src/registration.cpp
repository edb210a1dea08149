#include "deltarad/registration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deltarad {

namespace {

void require_same_dims(Dims a, Dims b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": dims mismatch");
}

// Trilinear sample of v at (px,py,pz), clamped to the border. When grad is
// non-null, writes the derivative of the interpolant w.r.t. the sample
// position (zero in any clamped direction).
inline double sample_trilinear(const Volume3D& v, double px, double py,
                               double pz, double* grad) {
  const int nx = v.dims.nx, ny = v.dims.ny, nz = v.dims.nz;
  bool cx = false, cy = false, cz = false;
  if (px <= 0.0) { px = 0.0; cx = true; }
  if (px >= nx - 1) { px = nx - 1; cx = true; }
  if (py <= 0.0) { py = 0.0; cy = true; }
  if (py >= ny - 1) { py = ny - 1; cy = true; }
  if (pz <= 0.0) { pz = 0.0; cz = true; }
  if (pz >= nz - 1) { pz = nz - 1; cz = true; }

  int x0 = static_cast<int>(px), y0 = static_cast<int>(py), z0 = static_cast<int>(pz);
  x0 = std::min(x0, std::max(nx - 2, 0));
  y0 = std::min(y0, std::max(ny - 2, 0));
  z0 = std::min(z0, std::max(nz - 2, 0));
  const double wx = px - x0, wy = py - y0, wz = pz - z0;
  const int x1 = std::min(x0 + 1, nx - 1);
  const int y1 = std::min(y0 + 1, ny - 1);
  const int z1 = std::min(z0 + 1, nz - 1);

  const float* d = v.data.data();
  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = static_cast<std::size_t>(nx) * ny;
  const double c000 = d[z0 * sz + y0 * sy + x0];
  const double c100 = d[z0 * sz + y0 * sy + x1];
  const double c010 = d[z0 * sz + y1 * sy + x0];
  const double c110 = d[z0 * sz + y1 * sy + x1];
  const double c001 = d[z1 * sz + y0 * sy + x0];
  const double c101 = d[z1 * sz + y0 * sy + x1];
  const double c011 = d[z1 * sz + y1 * sy + x0];
  const double c111 = d[z1 * sz + y1 * sy + x1];

  const double mx = 1.0 - wx, my = 1.0 - wy, mz = 1.0 - wz;
  const double value = mz * (my * (mx * c000 + wx * c100) + wy * (mx * c010 + wx * c110)) +
                       wz * (my * (mx * c001 + wx * c101) + wy * (mx * c011 + wx * c111));
  if (grad) {
    grad[0] = cx ? 0.0
                 : mz * (my * (c100 - c000) + wy * (c110 - c010)) +
                       wz * (my * (c101 - c001) + wy * (c111 - c011));
    grad[1] = cy ? 0.0
                 : mz * (mx * (c010 - c000) + wx * (c110 - c100)) +
                       wz * (mx * (c011 - c001) + wx * (c111 - c101));
    grad[2] = cz ? 0.0
                 : my * (mx * (c001 - c000) + wx * (c101 - c100)) +
                       wy * (mx * (c011 - c010) + wx * (c111 - c110));
  }
  return value;
}

struct WarpBuffers {
  std::vector<double> value;         // warped intensities
  std::vector<double> gx, gy, gz;    // interpolant gradient at each voxel
};

// Warps v through u; voxels outside `roi` (when given) are skipped, since
// the NCC statistics never read them.
void warp_with_gradients(const Volume3D& v, const DisplacementField& u,
                         WarpBuffers& out, bool want_grad,
                         const Mask3D* roi = nullptr) {
  const std::size_t n = v.dims.count();
  out.value.assign(n, 0.0);
  if (want_grad) {
    out.gx.assign(n, 0.0);
    out.gy.assign(n, 0.0);
    out.gz.assign(n, 0.0);
  }
  const std::uint8_t* r = roi ? roi->data.data() : nullptr;
  std::size_t p = 0;
  double g[3];
  for (int z = 0; z < v.dims.nz; ++z)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int x = 0; x < v.dims.nx; ++x, ++p) {
        if (r && !r[p]) continue;
        const double px = x + u.ux[p], py = y + u.uy[p], pz = z + u.uz[p];
        out.value[p] = sample_trilinear(v, px, py, pz, want_grad ? g : nullptr);
        if (want_grad) {
          out.gx[p] = g[0];
          out.gy[p] = g[1];
          out.gz[p] = g[2];
        }
      }
}

struct NccStats {
  double mean_a = 0, mean_b = 0;
  double saa = 0, sbb = 0, sab = 0;  // centered second moments
  std::size_t n = 0;
  double value() const {
    if (n == 0 || saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
  }
};

// Two-pass Pearson statistics over voxels where roi (if any) is set.
template <typename GetA>
NccStats ncc_stats(GetA get_a, const float* b, std::size_t n,
                   const std::uint8_t* roi) {
  NccStats st;
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (roi && !roi[i]) continue;
    sa += get_a(i);
    sb += b[i];
    ++st.n;
  }
  if (st.n == 0) return st;
  st.mean_a = sa / st.n;
  st.mean_b = sb / st.n;
  for (std::size_t i = 0; i < n; ++i) {
    if (roi && !roi[i]) continue;
    const double da = get_a(i) - st.mean_a;
    const double db = b[i] - st.mean_b;
    st.saa += da * da;
    st.sbb += db * db;
    st.sab += da * db;
  }
  return st;
}

}  // namespace

double ncc(const Volume3D& a, const Volume3D& b, const Mask3D* roi) {
  require_same_dims(a.dims, b.dims, "ncc");
  if (roi) require_same_dims(roi->dims, a.dims, "ncc roi");
  const float* pa = a.data.data();
  auto st = ncc_stats([pa](std::size_t i) { return static_cast<double>(pa[i]); },
                      b.data.data(), a.dims.count(),
                      roi ? roi->data.data() : nullptr);
  return st.value();
}

double smoothness_penalty(const DisplacementField& u) {
  const int nx = u.dims.nx, ny = u.dims.ny, nz = u.dims.nz;
  const std::size_t n = u.dims.count();
  if (n == 0) return 0.0;
  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = static_cast<std::size_t>(nx) * ny;
  double acc = 0.0;
  const std::vector<double>* comps[3] = {&u.ux, &u.uy, &u.uz};
  for (const auto* comp : comps) {
    const double* c = comp->data();
    std::size_t p = 0;
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x, ++p) {
          if (x + 1 < nx) { const double d = c[p + 1] - c[p]; acc += d * d; }
          if (y + 1 < ny) { const double d = c[p + sy] - c[p]; acc += d * d; }
          if (z + 1 < nz) { const double d = c[p + sz] - c[p]; acc += d * d; }
        }
  }
  return acc / static_cast<double>(n);
}

Volume3D warp_trilinear(const Volume3D& v, const DisplacementField& u) {
  require_same_dims(v.dims, u.dims, "warp_trilinear");
  Volume3D out(v.dims, v.spacing);
  std::size_t p = 0;
  for (int z = 0; z < v.dims.nz; ++z)
    for (int y = 0; y < v.dims.ny; ++y)
      for (int x = 0; x < v.dims.nx; ++x, ++p)
        out.data[p] = static_cast<float>(sample_trilinear(
            v, x + u.ux[p], y + u.uy[p], z + u.uz[p], nullptr));
  return out;
}

Mask3D warp_nearest(const Mask3D& m, const DisplacementField& u) {
  require_same_dims(m.dims, u.dims, "warp_nearest");
  Mask3D out(m.dims, m.spacing);
  const int nx = m.dims.nx, ny = m.dims.ny, nz = m.dims.nz;
  std::size_t p = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x, ++p) {
        const int sx = std::clamp(static_cast<int>(std::lround(x + u.ux[p])), 0, nx - 1);
        const int sy = std::clamp(static_cast<int>(std::lround(y + u.uy[p])), 0, ny - 1);
        const int sz = std::clamp(static_cast<int>(std::lround(z + u.uz[p])), 0, nz - 1);
        out.data[p] = m.at(sx, sy, sz);
      }
  return out;
}

double dice(const Mask3D& a, const Mask3D& b) {
  require_same_dims(a.dims, b.dims, "dice");
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i];
    nb += b.data[i];
    ni += static_cast<std::size_t>(a.data[i] & b.data[i]);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

Mask3D dilate(const Mask3D& m, int radius) {
  Mask3D cur = m;
  const int nx = m.dims.nx, ny = m.dims.ny, nz = m.dims.nz;
  for (int it = 0; it < radius; ++it) {
    Mask3D next(cur.dims, cur.spacing);
    std::size_t p = 0;
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x, ++p) {
          std::uint8_t v = 0;
          for (int dz = -1; dz <= 1 && !v; ++dz)
            for (int dy = -1; dy <= 1 && !v; ++dy)
              for (int dx = -1; dx <= 1 && !v; ++dx) {
                const int xx = x + dx, yy = y + dy, zz = z + dz;
                if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz)
                  continue;
                if (cur.at(xx, yy, zz)) v = 1;
              }
          next.data[p] = v;
        }
    cur = std::move(next);
  }
  return cur;
}

namespace {

struct SoftDice {
  double value = 0.0;   // 2*sum(a*b) / (sum(a)+sum(b))
  double denom = 0.0;
  bool defined = false;
};

SoftDice soft_dice(const std::vector<double>& a, const Volume3D& b,
                   const Mask3D* roi) {
  SoftDice d;
  double p = 0, sa = 0, sb = 0;
  const std::uint8_t* r = roi ? roi->data.data() : nullptr;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (r && !r[i]) continue;
    p += a[i] * b.data[i];
    sa += a[i];
    sb += b.data[i];
  }
  d.denom = sa + sb;
  if (d.denom > 0.0) {
    d.value = 2.0 * p / d.denom;
    d.defined = true;
  }
  return d;
}

}  // namespace

RegistrationLoss registration_loss(const Volume3D& source, const Volume3D& target,
                                   const DisplacementField& u, double smooth_weight,
                                   const Mask3D* roi, const Volume3D* source_guide,
                                   const Volume3D* target_guide) {
  require_same_dims(source.dims, target.dims, "registration_loss");
  require_same_dims(source.dims, u.dims, "registration_loss field");

  WarpBuffers wb;
  warp_with_gradients(source, u, wb, false, roi);
  const auto& w = wb.value;
  auto st = ncc_stats([&w](std::size_t i) { return w[i]; }, target.data.data(),
                      source.dims.count(), roi ? roi->data.data() : nullptr);

  RegistrationLoss loss;
  loss.ncc_term = -st.value();
  loss.smooth_term = smoothness_penalty(u);
  if (source_guide && target_guide) {
    WarpBuffers gb;
    warp_with_gradients(*source_guide, u, gb, false, roi);
    auto sd = soft_dice(gb.value, *target_guide, roi);
    if (sd.defined) loss.guide_term = -sd.value;
  }
  loss.total = loss.ncc_term + smooth_weight * loss.smooth_term + loss.guide_term;
  if (!std::isfinite(loss.total))
    throw std::runtime_error("registration loss is non-finite (divergent step size)");
  return loss;
}

DisplacementField registration_loss_gradient(
    const Volume3D& source, const Volume3D& target, const DisplacementField& u,
    double smooth_weight, const Mask3D* roi, const Volume3D* source_guide,
    const Volume3D* target_guide) {
  require_same_dims(source.dims, target.dims, "registration_loss_gradient");
  require_same_dims(source.dims, u.dims, "registration_loss_gradient field");

  const std::size_t n = source.dims.count();
  DisplacementField g(u.dims);

  // -NCC term: chain d(-ncc)/dW through the trilinear sampler.
  {
    WarpBuffers wb;
    warp_with_gradients(source, u, wb, true, roi);
    const auto& w = wb.value;
    const std::uint8_t* r = roi ? roi->data.data() : nullptr;
    auto st = ncc_stats([&w](std::size_t i) { return w[i]; }, target.data.data(),
                        n, r);
    if (st.n > 0 && st.saa > 0.0 && st.sbb > 0.0) {
      const double inv = 1.0 / std::sqrt(st.saa * st.sbb);
      const double k = st.sab / st.saa;
      const float* t = target.data.data();
      for (std::size_t i = 0; i < n; ++i) {
        if (r && !r[i]) continue;
        const double dldw = -inv * ((t[i] - st.mean_b) - k * (w[i] - st.mean_a));
        g.ux[i] += dldw * wb.gx[i];
        g.uy[i] += dldw * wb.gy[i];
        g.uz[i] += dldw * wb.gz[i];
      }
    }
  }

  // Guide soft-Dice term.
  if (source_guide && target_guide) {
    WarpBuffers gb;
    warp_with_gradients(*source_guide, u, gb, true, roi);
    auto sd = soft_dice(gb.value, *target_guide, roi);
    if (sd.defined) {
      const float* b = target_guide->data.data();
      const std::uint8_t* r = roi ? roi->data.data() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        if (r && !r[i]) continue;
        const double dlda = (sd.value - 2.0 * b[i]) / sd.denom;
        g.ux[i] += dlda * gb.gx[i];
        g.uy[i] += dlda * gb.gy[i];
        g.uz[i] += dlda * gb.gz[i];
      }
    }
  }

  // Smoothness term: d/du of (w/N) * sum of squared forward differences.
  {
    const int nx = u.dims.nx, ny = u.dims.ny, nz = u.dims.nz;
    const std::size_t sy = static_cast<std::size_t>(nx);
    const std::size_t sz = static_cast<std::size_t>(nx) * ny;
    const double scale = 2.0 * smooth_weight / static_cast<double>(n);
    const std::vector<double>* comps[3] = {&u.ux, &u.uy, &u.uz};
    std::vector<double>* grads[3] = {&g.ux, &g.uy, &g.uz};
    for (int c = 0; c < 3; ++c) {
      const double* uc = comps[c]->data();
      double* gc = grads[c]->data();
      std::size_t p = 0;
      for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
          for (int x = 0; x < nx; ++x, ++p) {
            if (x + 1 < nx) {
              const double d = scale * (uc[p + 1] - uc[p]);
              gc[p + 1] += d;
              gc[p] -= d;
            }
            if (y + 1 < ny) {
              const double d = scale * (uc[p + sy] - uc[p]);
              gc[p + sy] += d;
              gc[p] -= d;
            }
            if (z + 1 < nz) {
              const double d = scale * (uc[p + sz] - uc[p]);
              gc[p + sz] += d;
              gc[p] -= d;
            }
          }
    }
  }

  return g;
}

namespace {

// Separable Gaussian blur of one field component, used to precondition the
// descent direction. Symmetric positive definite, so the smoothed gradient
// remains a descent direction and the line search keeps monotonicity.
void gaussian_smooth_inplace(std::vector<double>& f, Dims dims, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= ksum;

  const int nx = dims.nx, ny = dims.ny, nz = dims.nz;
  std::vector<double> tmp(f.size());
  auto idx = [&](int x, int y, int z) {
    return static_cast<std::size_t>(z) * ny * nx + static_cast<std::size_t>(y) * nx + x;
  };
  const double* ker = kernel.data() + radius;
  // one pass per axis, clamped at the borders with a branch-free interior
  auto pass = [&](const std::vector<double>& in, std::vector<double>& out,
                  int axis) {
    const std::ptrdiff_t stride = axis == 0 ? 1 : (axis == 1 ? nx : nx * ny);
    const int extent = axis == 0 ? nx : (axis == 1 ? ny : nz);
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          const int c = axis == 0 ? x : (axis == 1 ? y : z);
          const std::size_t p = idx(x, y, z);
          double acc = 0.0;
          if (c >= radius && c + radius < extent) {
            const double* base = in.data() + p;
            for (int k = -radius; k <= radius; ++k)
              acc += ker[k] * base[k * stride];
          } else {
            for (int k = -radius; k <= radius; ++k) {
              const int cc = std::clamp(c + k, 0, extent - 1);
              acc += ker[k] * in[p + static_cast<std::ptrdiff_t>(cc - c) * stride];
            }
          }
          out[p] = acc;
        }
  };
  pass(f, tmp, 0);
  pass(tmp, f, 1);
  pass(f, tmp, 2);
  f.swap(tmp);
}

// Per-component trilinear upsample of a field to `target`, with offsets
// rescaled into the new grid's voxel units.
DisplacementField upsample_field(const DisplacementField& u, Dims target) {
  DisplacementField out(target);
  const Dims s = u.dims;
  const double rx = static_cast<double>(target.nx) / s.nx;
  const double ry = static_cast<double>(target.ny) / s.ny;
  const double rz = static_cast<double>(target.nz) / s.nz;

  auto coord = [](int dst, int n_dst, int n_src) {
    if (n_dst <= 1) return 0.0;
    return static_cast<double>(dst) * (n_src - 1) / (n_dst - 1);
  };

  const std::vector<double>* in[3] = {&u.ux, &u.uy, &u.uz};
  std::vector<double>* res[3] = {&out.ux, &out.uy, &out.uz};
  const double scale[3] = {rx, ry, rz};

  for (int c = 0; c < 3; ++c) {
    const double* d = in[c]->data();
    double* o = res[c]->data();
    std::size_t p = 0;
    const std::size_t ssy = static_cast<std::size_t>(s.nx);
    const std::size_t ssz = static_cast<std::size_t>(s.nx) * s.ny;
    for (int z = 0; z < target.nz; ++z) {
      const double fz = coord(z, target.nz, s.nz);
      const int z0 = std::min(static_cast<int>(fz), std::max(s.nz - 2, 0));
      const int z1 = std::min(z0 + 1, s.nz - 1);
      const double wz = fz - z0;
      for (int y = 0; y < target.ny; ++y) {
        const double fy = coord(y, target.ny, s.ny);
        const int y0 = std::min(static_cast<int>(fy), std::max(s.ny - 2, 0));
        const int y1 = std::min(y0 + 1, s.ny - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target.nx; ++x, ++p) {
          const double fx = coord(x, target.nx, s.nx);
          const int x0 = std::min(static_cast<int>(fx), std::max(s.nx - 2, 0));
          const int x1 = std::min(x0 + 1, s.nx - 1);
          const double wx = fx - x0;
          const double c00 = d[z0 * ssz + y0 * ssy + x0] + wx * (d[z0 * ssz + y0 * ssy + x1] - d[z0 * ssz + y0 * ssy + x0]);
          const double c10 = d[z0 * ssz + y1 * ssy + x0] + wx * (d[z0 * ssz + y1 * ssy + x1] - d[z0 * ssz + y1 * ssy + x0]);
          const double c01 = d[z1 * ssz + y0 * ssy + x0] + wx * (d[z1 * ssz + y0 * ssy + x1] - d[z1 * ssz + y0 * ssy + x0]);
          const double c11 = d[z1 * ssz + y1 * ssy + x0] + wx * (d[z1 * ssz + y1 * ssy + x1] - d[z1 * ssz + y1 * ssy + x0]);
          const double c0 = c00 + wy * (c10 - c00);
          const double c1 = c01 + wy * (c11 - c01);
          o[p] = (c0 + wz * (c1 - c0)) * scale[c];
        }
      }
    }
  }
  return out;
}

Volume3D mask_to_volume(const Mask3D& m) {
  Volume3D v(m.dims, m.spacing);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    v.data[i] = static_cast<float>(m.data[i]);
  return v;
}

Dims level_dims(Dims working, int level, int levels) {
  const int factor = 1 << (levels - 1 - level);
  auto down = [factor](int n) {
    return std::max(2, static_cast<int>(std::llround(static_cast<double>(n) / factor)));
  };
  return Dims{down(working.nx), down(working.ny), down(working.nz)};
}

}  // namespace

RegistrationResult register_pair(const Volume3D& source, const Volume3D& target,
                                 const RegistrationConfig& cfg,
                                 const Mask3D* source_guide,
                                 const Mask3D* target_guide) {
  require_same_dims(source.dims, target.dims, "register_pair");
  if (cfg.levels < 1 || static_cast<int>(cfg.smoothness_weights.size()) != cfg.levels)
    throw std::invalid_argument("register_pair: need one smoothness weight per level");
  for (double w : cfg.smoothness_weights)
    if (w <= 0.0) throw std::invalid_argument("register_pair: weights must be > 0");

  Volume3D src_storage, tgt_storage;
  const Volume3D* src_p = &source;
  if (!(source.dims == cfg.working_dims)) {
    src_storage = resize_trilinear(source, cfg.working_dims);
    src_p = &src_storage;
  }
  const Volume3D* tgt_p = &target;
  if (!(target.dims == cfg.working_dims)) {
    tgt_storage = resize_trilinear(target, cfg.working_dims);
    tgt_p = &tgt_storage;
  }

  const bool guided = cfg.mask_guided && source_guide && target_guide;

  RegistrationResult result;
  DisplacementField u;
  Mask3D roi_level;
  Volume3D sguide_level, tguide_level;

  for (int level = 0; level < cfg.levels; ++level) {
    const Dims d = level_dims(cfg.working_dims, level, cfg.levels);
    Volume3D s_l = src_p->dims == d ? *src_p : resize_trilinear(*src_p, d);
    Volume3D t_l = tgt_p->dims == d ? *tgt_p : resize_trilinear(*tgt_p, d);

    const Mask3D* roi = nullptr;
    const Volume3D* sg = nullptr;
    const Volume3D* tg = nullptr;
    if (guided) {
      Mask3D sm = source_guide->dims == d ? *source_guide
                                          : resize_nearest(*source_guide, d);
      Mask3D tm = target_guide->dims == d ? *target_guide
                                          : resize_nearest(*target_guide, d);
      Mask3D uni(d, sm.spacing);
      for (std::size_t i = 0; i < uni.data.size(); ++i)
        uni.data[i] = sm.data[i] | tm.data[i];
      roi_level = dilate(uni, 3);
      roi = &roi_level;
      sguide_level = mask_to_volume(sm);
      tguide_level = mask_to_volume(tm);
      sg = &sguide_level;
      tg = &tguide_level;
    }

    if (level == 0)
      u = DisplacementField(d);
    else
      u = upsample_field(u, d);

    const double w = cfg.smoothness_weights[level];
    RegistrationLoss loss = registration_loss(s_l, t_l, u, w, roi, sg, tg);

    LevelTrace trace;
    trace.dims = d;
    trace.initial_loss = loss.total;

    double step = cfg.step_size;
    const std::size_t nvox = d.count();
    DisplacementField trial(d);

    for (int iter = 0; iter < cfg.iterations_per_level; ++iter) {
      DisplacementField g =
          registration_loss_gradient(s_l, t_l, u, w, roi, sg, tg);
      gaussian_smooth_inplace(g.ux, d, cfg.grad_smoothing_sigma);
      gaussian_smooth_inplace(g.uy, d, cfg.grad_smoothing_sigma);
      gaussian_smooth_inplace(g.uz, d, cfg.grad_smoothing_sigma);
      double gmax = 0.0;
      for (std::size_t i = 0; i < nvox; ++i) {
        gmax = std::max(gmax, std::abs(g.ux[i]));
        gmax = std::max(gmax, std::abs(g.uy[i]));
        gmax = std::max(gmax, std::abs(g.uz[i]));
      }
      if (gmax < 1e-14) break;
      const double norm = 1.0 / gmax;

      bool accepted = false;
      double s = step;
      for (int halve = 0; halve <= 10; ++halve) {
        const double a = s * norm;
        for (std::size_t i = 0; i < nvox; ++i) {
          trial.ux[i] = u.ux[i] - a * g.ux[i];
          trial.uy[i] = u.uy[i] - a * g.uy[i];
          trial.uz[i] = u.uz[i] - a * g.uz[i];
        }
        RegistrationLoss lt = registration_loss(s_l, t_l, trial, w, roi, sg, tg);
        if (lt.total < loss.total) {
          std::swap(u.ux, trial.ux);
          std::swap(u.uy, trial.uy);
          std::swap(u.uz, trial.uz);
          loss = lt;
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      ++trace.iterations;
      if (!accepted) break;
      step = std::min(s * 2.0, cfg.step_size);
    }

    trace.final_loss = loss.total;
    result.levels.push_back(trace);

    if (level == cfg.levels - 1) result.final_ncc = -loss.ncc_term;
  }

  result.field = std::move(u);
  return result;
}

void save_field(const DisplacementField& u, const std::string& base_path) {
  const char* suffix[3] = {"_ux.mhd", "_uy.mhd", "_uz.mhd"};
  const std::vector<double>* comps[3] = {&u.ux, &u.uy, &u.uz};
  for (int c = 0; c < 3; ++c) {
    Volume3D v(u.dims, Spacing{});
    for (std::size_t i = 0; i < v.data.size(); ++i)
      v.data[i] = static_cast<float>((*comps[c])[i]);
    save_metaimage(v, base_path + suffix[c]);
  }
}

DisplacementField load_field(const std::string& base_path) {
  Volume3D vx = load_volume(base_path + "_ux.mhd");
  Volume3D vy = load_volume(base_path + "_uy.mhd");
  Volume3D vz = load_volume(base_path + "_uz.mhd");
  if (!(vx.dims == vy.dims) || !(vx.dims == vz.dims))
    throw std::runtime_error("displacement components disagree on dims: " + base_path);
  DisplacementField u(vx.dims);
  for (std::size_t i = 0; i < u.ux.size(); ++i) {
    u.ux[i] = vx.data[i];
    u.uy[i] = vy.data[i];
    u.uz[i] = vz.data[i];
  }
  return u;
}

}  // namespace deltarad
