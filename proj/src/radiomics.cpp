#include "deltarad/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace deltarad {

namespace {

constexpr double kLog2e = 1.4426950408889634074;  // log2(x) = ln(x) * kLog2e

double log2_safe(double p) { return std::log(p) * kLog2e; }

void require_nonempty(const std::vector<std::size_t>& voxels, const char* what) {
  if (voxels.empty())
    throw std::invalid_argument(std::string(what) + ": empty mask");
}

}  // namespace

double FeatureVector::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw std::out_of_range("feature not present: " + name);
}

const std::array<std::array<int, 3>, 13> kOffsets13 = {{
    {1, 0, 0},
    {0, 1, 0},
    {0, 0, 1},
    {1, 1, 0},
    {1, -1, 0},
    {1, 0, 1},
    {1, 0, -1},
    {0, 1, 1},
    {0, 1, -1},
    {1, 1, 1},
    {1, 1, -1},
    {1, -1, 1},
    {1, -1, -1},
}};

DiscretizedRegion discretize(const Volume3D& v, const Mask3D& m, int ng) {
  if (!(v.dims == m.dims))
    throw std::invalid_argument("discretize: volume/mask dims mismatch");
  if (ng < 1) throw std::invalid_argument("discretize: ng must be >= 1");

  DiscretizedRegion d;
  d.dims = v.dims;
  d.bins.assign(v.dims.count(), 0);

  float lo = 0.0f, hi = 0.0f;
  bool first = true;
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!m.data[i]) continue;
    d.voxels.push_back(i);
    if (first) {
      lo = hi = v.data[i];
      first = false;
    } else {
      lo = std::min(lo, v.data[i]);
      hi = std::max(hi, v.data[i]);
    }
  }
  require_nonempty(d.voxels, "discretize");

  if (hi <= lo) {
    for (auto i : d.voxels) d.bins[i] = 1;
    d.ng = 1;
    return d;
  }
  const double width = (static_cast<double>(hi) - lo) / ng;
  for (auto i : d.voxels) {
    int b = static_cast<int>(std::floor((v.data[i] - lo) / width)) + 1;
    d.bins[i] = static_cast<std::uint16_t>(std::clamp(b, 1, ng));
  }
  d.ng = ng;
  return d;
}

FeatureVector first_order(const Volume3D& v, const Mask3D& m, int ng) {
  if (!(v.dims == m.dims))
    throw std::invalid_argument("first_order: volume/mask dims mismatch");
  std::vector<double> x;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    if (m.data[i]) x.push_back(v.data[i]);
  if (x.empty()) throw std::invalid_argument("first_order: empty mask");

  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();

  // linear-interpolation percentile on the sorted sample
  auto percentile = [&](double q) {
    const double h = q / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= n) return x[n - 1];
    return x[lo] + frac * (x[lo + 1] - x[lo]);
  };

  double sum = 0, sum_sq = 0;
  for (double xi : x) {
    sum += xi;
    sum_sq += xi * xi;
  }
  const double mean = sum / n;
  double mad = 0, m2 = 0, m4 = 0;
  for (double xi : x) {
    const double dxi = xi - mean;
    mad += std::abs(dxi);
    m2 += dxi * dxi;
    m4 += dxi * dxi * dxi * dxi;
  }
  mad /= n;
  m2 /= n;
  m4 /= n;
  const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

  // entropy over the same equal-width binning used for texture
  double entropy = 0.0;
  {
    const double lo = x.front(), hi = x.back();
    std::vector<std::size_t> hist(static_cast<std::size_t>(ng), 0);
    if (hi > lo) {
      const double width = (hi - lo) / ng;
      for (double xi : x) {
        int b = static_cast<int>(std::floor((xi - lo) / width));
        hist[static_cast<std::size_t>(std::clamp(b, 0, ng - 1))]++;
      }
    } else {
      hist[0] = n;
    }
    for (auto c : hist) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / n;
      entropy -= p * log2_safe(p);
    }
  }

  FeatureVector f;
  f.append("fo_percentile10", percentile(10.0));
  f.append("fo_percentile90", percentile(90.0));
  f.append("fo_maximum", x.back());
  f.append("fo_mean", mean);
  f.append("fo_median", percentile(50.0));
  f.append("fo_mad", mad);
  f.append("fo_rms", std::sqrt(sum_sq / n));
  f.append("fo_entropy", entropy);
  f.append("fo_kurtosis", kurtosis);
  return f;
}

namespace {

// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations,
// descending order, clamped to >= 0.
std::array<double, 3> symmetric_eigenvalues(std::array<std::array<double, 3>, 3> a) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-15 * (1.0 + std::abs(a[0][0]) + std::abs(a[1][1]) + std::abs(a[2][2])))
      break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        std::array<std::array<double, 3>, 3> r = a;
        for (int k = 0; k < 3; ++k) {
          r[p][k] = c * a[p][k] - s * a[q][k];
          r[q][k] = s * a[p][k] + c * a[q][k];
        }
        std::array<std::array<double, 3>, 3> b = r;
        for (int k = 0; k < 3; ++k) {
          b[k][p] = c * r[k][p] - s * r[k][q];
          b[k][q] = s * r[k][p] + c * r[k][q];
        }
        a = b;
      }
  }
  std::array<double, 3> ev = {a[0][0], a[1][1], a[2][2]};
  std::sort(ev.begin(), ev.end(), std::greater<double>());
  for (auto& e : ev) e = std::max(e, 0.0);
  return ev;
}

}  // namespace

FeatureVector shape(const Mask3D& m) {
  struct P {
    int x, y, z;
  };
  std::vector<P> pts;
  std::size_t p = 0;
  for (int z = 0; z < m.dims.nz; ++z)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int x = 0; x < m.dims.nx; ++x, ++p)
        if (m.data[p]) pts.push_back({x, y, z});
  if (pts.empty()) throw std::invalid_argument("shape: empty mask");

  const double sx = m.spacing.sx, sy = m.spacing.sy, sz = m.spacing.sz;
  const double n = static_cast<double>(pts.size());

  double cx = 0, cy = 0, cz = 0;
  for (auto& q : pts) {
    cx += q.x * sx;
    cy += q.y * sy;
    cz += q.z * sz;
  }
  cx /= n;
  cy /= n;
  cz /= n;

  std::array<std::array<double, 3>, 3> cov{};
  for (auto& q : pts) {
    const double dx = q.x * sx - cx, dy = q.y * sy - cy, dz = q.z * sz - cz;
    cov[0][0] += dx * dx;
    cov[0][1] += dx * dy;
    cov[0][2] += dx * dz;
    cov[1][1] += dy * dy;
    cov[1][2] += dy * dz;
    cov[2][2] += dz * dz;
  }
  cov[1][0] = cov[0][1];
  cov[2][0] = cov[0][2];
  cov[2][1] = cov[1][2];
  for (auto& row : cov)
    for (auto& c : row) c /= n;

  const auto ev = symmetric_eigenvalues(cov);
  const double least_axis = 4.0 * std::sqrt(ev[2]);
  const double flatness = ev[0] > 0.0 ? std::sqrt(ev[2] / ev[0]) : 0.0;

  // boundary voxels: any of the 6 face neighbours missing
  auto inside = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= m.dims.nx || y >= m.dims.ny || z >= m.dims.nz)
      return false;
    return m.at(x, y, z) != 0;
  };
  std::vector<P> boundary;
  for (auto& q : pts) {
    if (!inside(q.x - 1, q.y, q.z) || !inside(q.x + 1, q.y, q.z) ||
        !inside(q.x, q.y - 1, q.z) || !inside(q.x, q.y + 1, q.z) ||
        !inside(q.x, q.y, q.z - 1) || !inside(q.x, q.y, q.z + 1))
      boundary.push_back(q);
  }

  // Max 2D diameters: largest pairwise physical distance among boundary
  // voxels sharing a y index (row) or an x index (column).
  auto plane_diameter = [&](bool by_y) {
    std::map<int, std::vector<P>> planes;
    for (auto& q : boundary) planes[by_y ? q.y : q.x].push_back(q);
    double best = 0.0;
    for (auto& [key, group] : planes) {
      for (std::size_t i = 0; i < group.size(); ++i)
        for (std::size_t j = i + 1; j < group.size(); ++j) {
          const double dx = (group[i].x - group[j].x) * sx;
          const double dy = (group[i].y - group[j].y) * sy;
          const double dz = (group[i].z - group[j].z) * sz;
          best = std::max(best, dx * dx + dy * dy + dz * dz);
        }
    }
    return std::sqrt(best);
  };

  FeatureVector f;
  f.append("shape_least_axis_length", least_axis);
  f.append("shape_flatness", flatness);
  f.append("shape_max2d_diameter_row", plane_diameter(true));
  f.append("shape_max2d_diameter_column", plane_diameter(false));
  return f;
}

// --- GLCM ------------------------------------------------------------------

namespace {

struct GlcmAccum {
  double correlation = 0, diff_avg = 0, diff_entropy = 0, diff_var = 0;
  double inv_var = 0, joint_entropy = 0, sum_entropy = 0, imc2 = 0, max_prob = 0;
  int count = 0;

  void add_from_matrix(const std::vector<double>& pmat, int ng) {
    // pmat is ng*ng, normalized to sum 1, symmetric
    std::vector<double> px(static_cast<std::size_t>(ng), 0.0);
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) px[i] += pmat[i * ng + j];

    double mu = 0;
    for (int i = 0; i < ng; ++i) mu += (i + 1) * px[i];
    double var = 0;
    for (int i = 0; i < ng; ++i) var += px[i] * ((i + 1) - mu) * ((i + 1) - mu);

    double corr = 1.0;
    if (var > 0.0) {
      double cross = 0;
      for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j)
          cross += pmat[i * ng + j] * ((i + 1) - mu) * ((j + 1) - mu);
      corr = cross / var;
    }

    std::vector<double> pdiff(static_cast<std::size_t>(ng), 0.0);
    std::vector<double> psum(static_cast<std::size_t>(2 * ng + 1), 0.0);
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) {
        pdiff[std::abs(i - j)] += pmat[i * ng + j];
        psum[i + j + 2] += pmat[i * ng + j];
      }

    double da = 0;
    for (int k = 0; k < ng; ++k) da += k * pdiff[k];
    double de = 0, dv = 0, iv = 0;
    for (int k = 0; k < ng; ++k) {
      if (pdiff[k] > 0) de -= pdiff[k] * log2_safe(pdiff[k]);
      dv += pdiff[k] * (k - da) * (k - da);
      if (k >= 1) iv += pdiff[k] / (static_cast<double>(k) * k);
    }
    double se = 0;
    for (int k = 2; k <= 2 * ng; ++k)
      if (psum[k] > 0) se -= psum[k] * log2_safe(psum[k]);

    double je = 0, mp = 0;
    for (int i = 0; i < ng * ng; ++i) {
      if (pmat[i] > 0) je -= pmat[i] * log2_safe(pmat[i]);
      mp = std::max(mp, pmat[i]);
    }

    double hxy2 = 0;
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) {
        const double q = px[i] * px[j];
        if (q > 0) hxy2 -= q * log2_safe(q);
      }
    const double imc2v = std::sqrt(std::max(0.0, 1.0 - std::exp(-2.0 * (hxy2 - je))));

    correlation += corr;
    diff_avg += da;
    diff_entropy += de;
    diff_var += dv;
    inv_var += iv;
    joint_entropy += je;
    sum_entropy += se;
    imc2 += imc2v;
    max_prob += mp;
    ++count;
  }

  FeatureVector finish() const {
    FeatureVector f;
    const double c = count > 0 ? static_cast<double>(count) : 1.0;
    // no offset produced any pair: single-voxel degenerate values
    f.append("glcm_correlation", count ? correlation / c : 1.0);
    f.append("glcm_difference_average", diff_avg / c);
    f.append("glcm_difference_entropy", diff_entropy / c);
    f.append("glcm_difference_variance", diff_var / c);
    f.append("glcm_inverse_variance", inv_var / c);
    f.append("glcm_joint_entropy", joint_entropy / c);
    f.append("glcm_sum_entropy", sum_entropy / c);
    f.append("glcm_imc2", imc2 / c);
    f.append("glcm_maximum_probability", count ? max_prob / c : 1.0);
    return f;
  }
};

}  // namespace

FeatureVector glcm_features(const DiscretizedRegion& d,
                            std::span<const std::array<int, 3>> offsets) {
  require_nonempty(d.voxels, "glcm_features");
  const int ng = d.ng;
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;

  GlcmAccum acc;
  std::vector<double> pmat(static_cast<std::size_t>(ng) * ng);
  for (const auto& off : offsets) {
    std::fill(pmat.begin(), pmat.end(), 0.0);
    double total = 0.0;
    for (auto lin : d.voxels) {
      const int x = static_cast<int>(lin % nx);
      const int y = static_cast<int>((lin / nx) % ny);
      const int z = static_cast<int>(lin / (static_cast<std::size_t>(nx) * ny));
      const int xx = x + off[0], yy = y + off[1], zz = z + off[2];
      if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
      const std::uint16_t bj = d.bins[d.idx(xx, yy, zz)];
      if (!bj) continue;
      const std::uint16_t bi = d.bins[lin];
      pmat[(bi - 1) * ng + (bj - 1)] += 1.0;
      pmat[(bj - 1) * ng + (bi - 1)] += 1.0;
      total += 2.0;
    }
    if (total == 0.0) continue;
    for (auto& v : pmat) v /= total;
    acc.add_from_matrix(pmat, ng);
  }
  return acc.finish();
}

FeatureVector glcm_features(const DiscretizedRegion& d) {
  return glcm_features(d, std::span<const std::array<int, 3>>(kOffsets13));
}

// --- GLRLM -----------------------------------------------------------------

FeatureVector glrlm_features(const DiscretizedRegion& d,
                             std::span<const std::array<int, 3>> directions) {
  require_nonempty(d.voxels, "glrlm_features");
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;
  const int ng = d.ng;
  const std::size_t np = d.voxels.size();
  const int max_len = std::max({nx, ny, nz});

  double run_entropy = 0, run_var = 0, run_pct = 0, rln = 0, lrhgle = 0;
  int dir_count = 0;

  std::vector<double> rmat(static_cast<std::size_t>(ng) * max_len);
  for (const auto& dir : directions) {
    std::fill(rmat.begin(), rmat.end(), 0.0);
    double nr = 0;

    auto in_grid = [&](int x, int y, int z) {
      return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
    };
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          // line start: predecessor along dir is outside the grid
          if (in_grid(x - dir[0], y - dir[1], z - dir[2])) continue;
          int cx = x, cy = y, cz = z;
          int run_bin = 0, run_len = 0;
          while (in_grid(cx, cy, cz)) {
            const int b = d.bins[d.idx(cx, cy, cz)];
            if (b == run_bin && b != 0) {
              ++run_len;
            } else {
              if (run_bin != 0) {
                rmat[(run_bin - 1) * max_len + (run_len - 1)] += 1.0;
                nr += 1.0;
              }
              run_bin = b;
              run_len = b ? 1 : 0;
            }
            cx += dir[0];
            cy += dir[1];
            cz += dir[2];
          }
          if (run_bin != 0) {
            rmat[(run_bin - 1) * max_len + (run_len - 1)] += 1.0;
            nr += 1.0;
          }
        }

    if (nr == 0.0) continue;
    double re = 0, mu_l = 0, rv = 0, d_rln = 0, d_lrhgle = 0;
    for (int g = 1; g <= ng; ++g)
      for (int l = 1; l <= max_len; ++l) {
        const double r = rmat[(g - 1) * max_len + (l - 1)];
        if (r == 0.0) continue;
        const double p = r / nr;
        re -= p * log2_safe(p);
        mu_l += p * l;
        d_lrhgle += r * static_cast<double>(g) * g * l * l;
      }
    for (int g = 1; g <= ng; ++g)
      for (int l = 1; l <= max_len; ++l) {
        const double r = rmat[(g - 1) * max_len + (l - 1)];
        if (r == 0.0) continue;
        rv += (r / nr) * (l - mu_l) * (l - mu_l);
      }
    for (int l = 1; l <= max_len; ++l) {
      double col = 0;
      for (int g = 1; g <= ng; ++g) col += rmat[(g - 1) * max_len + (l - 1)];
      d_rln += col * col;
    }

    run_entropy += re;
    run_var += rv;
    run_pct += nr / static_cast<double>(np);
    rln += d_rln / nr;
    lrhgle += d_lrhgle / nr;
    ++dir_count;
  }

  const double c = dir_count > 0 ? static_cast<double>(dir_count) : 1.0;
  FeatureVector f;
  f.append("glrlm_run_entropy", run_entropy / c);
  f.append("glrlm_run_variance", run_var / c);
  f.append("glrlm_run_percentage", run_pct / c);
  f.append("glrlm_run_length_nonuniformity", rln / c);
  f.append("glrlm_long_run_high_grey_level_emphasis", lrhgle / c);
  return f;
}

FeatureVector glrlm_features(const DiscretizedRegion& d) {
  return glrlm_features(d, std::span<const std::array<int, 3>>(kOffsets13));
}

// --- GLSZM -----------------------------------------------------------------

FeatureVector glszm_features(const DiscretizedRegion& d) {
  require_nonempty(d.voxels, "glszm_features");
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;
  const std::size_t np = d.voxels.size();

  // zones: 26-connected components of equal grey level
  std::vector<std::uint8_t> seen(d.bins.size(), 0);
  struct Zone {
    int g;
    std::size_t size;
  };
  std::vector<Zone> zones;
  std::vector<std::size_t> stack;
  for (auto start : d.voxels) {
    if (seen[start]) continue;
    const int g = d.bins[start];
    std::size_t size = 0;
    stack.clear();
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(cur % nx);
      const int y = static_cast<int>((cur / nx) % ny);
      const int z = static_cast<int>(cur / (static_cast<std::size_t>(nx) * ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dx && !dy && !dz) continue;
            const int xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz)
              continue;
            const std::size_t q = d.idx(xx, yy, zz);
            if (seen[q] || d.bins[q] != g) continue;
            seen[q] = 1;
            stack.push_back(q);
          }
    }
    zones.push_back({g, size});
  }

  const double nz_zones = static_cast<double>(zones.size());
  std::map<int, double> per_level;
  std::map<std::size_t, double> per_size;
  std::map<std::pair<int, std::size_t>, double> cells;
  double mu_g = 0, sae = 0, sahgle = 0, hglze = 0;
  for (auto& zn : zones) {
    per_level[zn.g] += 1.0;
    per_size[zn.size] += 1.0;
    cells[{zn.g, zn.size}] += 1.0;
    mu_g += zn.g / nz_zones;
    const double s2 = static_cast<double>(zn.size) * zn.size;
    sae += 1.0 / s2 / nz_zones;
    sahgle += static_cast<double>(zn.g) * zn.g / s2 / nz_zones;
    hglze += static_cast<double>(zn.g) * zn.g / nz_zones;
  }
  double glnn = 0;
  for (auto& [g, c] : per_level) glnn += c * c;
  glnn /= nz_zones * nz_zones;
  double sznn = 0;
  for (auto& [s, c] : per_size) sznn += c * c;
  sznn /= nz_zones * nz_zones;
  double glv = 0;
  for (auto& zn : zones) glv += (zn.g - mu_g) * (zn.g - mu_g) / nz_zones;
  double ze = 0;
  for (auto& [cell, c] : cells) {
    const double p = c / nz_zones;
    ze -= p * log2_safe(p);
  }

  FeatureVector f;
  f.append("glszm_grey_level_nonuniformity_normalized", glnn);
  f.append("glszm_grey_level_variance", glv);
  f.append("glszm_zone_entropy", ze);
  f.append("glszm_zone_percentage", nz_zones / static_cast<double>(np));
  f.append("glszm_size_zone_nonuniformity_normalized", sznn);
  f.append("glszm_small_area_emphasis", sae);
  f.append("glszm_small_area_high_grey_level_emphasis", sahgle);
  f.append("glszm_high_grey_level_zone_emphasis", hglze);
  return f;
}

// --- NGTDM -----------------------------------------------------------------

FeatureVector ngtdm_features(const DiscretizedRegion& d) {
  require_nonempty(d.voxels, "ngtdm_features");
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;
  const int ng = d.ng;

  std::vector<double> n_i(static_cast<std::size_t>(ng) + 1, 0.0);
  std::vector<double> s_i(static_cast<std::size_t>(ng) + 1, 0.0);
  for (auto lin : d.voxels) {
    const int x = static_cast<int>(lin % nx);
    const int y = static_cast<int>((lin / nx) % ny);
    const int z = static_cast<int>(lin / (static_cast<std::size_t>(nx) * ny));
    double sum = 0;
    int cnt = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const int xx = x + dx, yy = y + dy, zz = z + dz;
          if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz)
            continue;
          const int b = d.bins[d.idx(xx, yy, zz)];
          if (!b) continue;
          sum += b;
          ++cnt;
        }
    if (cnt == 0) continue;  // isolated voxel has no neighbourhood
    const int i = d.bins[lin];
    n_i[i] += 1.0;
    s_i[i] += std::abs(i - sum / cnt);
  }

  double nvp = 0, s_total = 0;
  for (int i = 1; i <= ng; ++i) {
    nvp += n_i[i];
    s_total += s_i[i];
  }

  double strength = 0.0;
  if (nvp > 0 && s_total > 0) {
    double numer = 0.0;
    for (int i = 1; i <= ng; ++i) {
      if (n_i[i] == 0) continue;
      for (int j = 1; j <= ng; ++j) {
        if (n_i[j] == 0) continue;
        const double pi = n_i[i] / nvp, pj = n_i[j] / nvp;
        numer += (pi + pj) * (i - j) * (i - j);
      }
    }
    strength = numer / s_total;
  }

  FeatureVector f;
  f.append("ngtdm_strength", strength);
  return f;
}

// --- GLDM ------------------------------------------------------------------

FeatureVector gldm_features(const DiscretizedRegion& d) {
  require_nonempty(d.voxels, "gldm_features");
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;
  const int ng = d.ng;
  const int max_dep = 27;

  std::vector<double> dm(static_cast<std::size_t>(ng) * max_dep, 0.0);
  for (auto lin : d.voxels) {
    const int x = static_cast<int>(lin % nx);
    const int y = static_cast<int>((lin / nx) % ny);
    const int z = static_cast<int>(lin / (static_cast<std::size_t>(nx) * ny));
    const int g = d.bins[lin];
    int dep = 1;  // the voxel always depends on itself
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const int xx = x + dx, yy = y + dy, zz = z + dz;
          if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz)
            continue;
          if (d.bins[d.idx(xx, yy, zz)] == g) ++dep;  // alpha = 0: equal bins
        }
    dm[(g - 1) * max_dep + (dep - 1)] += 1.0;
  }

  const double nd = static_cast<double>(d.voxels.size());
  double dn = 0, sde = 0;
  for (int dep = 1; dep <= max_dep; ++dep) {
    double col = 0;
    for (int g = 1; g <= ng; ++g) col += dm[(g - 1) * max_dep + (dep - 1)];
    dn += col * col;
    sde += col / (static_cast<double>(dep) * dep);
  }

  FeatureVector f;
  f.append("gldm_dependence_nonuniformity", dn / nd);
  f.append("gldm_small_dependence_emphasis", sde / nd);
  return f;
}

// --- full extraction ---------------------------------------------------------

namespace {

const std::vector<std::string>& intensity_schema() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {
        "fo_percentile10", "fo_percentile90", "fo_maximum", "fo_mean",
        "fo_median",       "fo_mad",          "fo_rms",     "fo_entropy",
        "fo_kurtosis",
        "glcm_correlation", "glcm_difference_average", "glcm_difference_entropy",
        "glcm_difference_variance", "glcm_inverse_variance", "glcm_joint_entropy",
        "glcm_sum_entropy", "glcm_imc2", "glcm_maximum_probability",
        "glrlm_run_entropy", "glrlm_run_variance", "glrlm_run_percentage",
        "glrlm_run_length_nonuniformity",
        "glrlm_long_run_high_grey_level_emphasis",
        "glszm_grey_level_nonuniformity_normalized", "glszm_grey_level_variance",
        "glszm_zone_entropy", "glszm_zone_percentage",
        "glszm_size_zone_nonuniformity_normalized", "glszm_small_area_emphasis",
        "glszm_small_area_high_grey_level_emphasis",
        "glszm_high_grey_level_zone_emphasis",
        "ngtdm_strength",
        "gldm_dependence_nonuniformity", "gldm_small_dependence_emphasis",
    };
    return v;
  }();
  return names;
}

}  // namespace

const std::vector<std::string>& feature_schema() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v = {
        "shape_least_axis_length",
        "shape_flatness",
        "shape_max2d_diameter_row",
        "shape_max2d_diameter_column",
    };
    const auto& in = intensity_schema();
    v.insert(v.end(), in.begin(), in.end());
    return v;
  }();
  return names;
}

const std::vector<std::string>& intensity_feature_schema() {
  return intensity_schema();
}

FeatureVector extract_intensity(const Volume3D& v, const Mask3D& m, int ng) {
  FeatureVector out;
  if (m.empty_mask()) {
    for (const auto& name : intensity_schema()) out.append(name, 0.0);
    return out;
  }
  out.append(first_order(v, m, ng));
  const DiscretizedRegion d = discretize(v, m, ng);
  out.append(glcm_features(d));
  out.append(glrlm_features(d));
  out.append(glszm_features(d));
  out.append(ngtdm_features(d));
  out.append(gldm_features(d));
  return out;
}

FeatureVector extract_all(const Volume3D& v, const Mask3D& texture_mask,
                          const Mask3D& geometry_mask, int ng) {
  FeatureVector out;
  if (geometry_mask.empty_mask()) {
    out.append("shape_least_axis_length", 0.0);
    out.append("shape_flatness", 0.0);
    out.append("shape_max2d_diameter_row", 0.0);
    out.append("shape_max2d_diameter_column", 0.0);
  } else {
    out.append(shape(geometry_mask));
  }
  out.append(extract_intensity(v, texture_mask, ng));
  return out;
}

}  // namespace deltarad
