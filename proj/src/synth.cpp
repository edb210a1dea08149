#include "deltarad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "deltarad/parallel.hpp"
#include "deltarad/rng.hpp"

namespace deltarad {

namespace {

using nlohmann::json;

void gaussian_blur(Volume3D& v, double sigma) {
  if (sigma <= 0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= ksum;

  const int nx = v.dims.nx, ny = v.dims.ny, nz = v.dims.nz;
  std::vector<float> tmp(v.data.size());
  auto pass = [&](const std::vector<float>& in, std::vector<float>& out, int axis) {
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double acc = 0;
          for (int k = -radius; k <= radius; ++k) {
            int xx = x, yy = y, zz = z;
            if (axis == 0) xx = std::clamp(x + k, 0, nx - 1);
            if (axis == 1) yy = std::clamp(y + k, 0, ny - 1);
            if (axis == 2) zz = std::clamp(z + k, 0, nz - 1);
            acc += kernel[k + radius] * in[v.idx(xx, yy, zz)];
          }
          out[v.idx(x, y, z)] = static_cast<float>(acc);
        }
  };
  pass(v.data, tmp, 0);
  pass(tmp, v.data, 1);
  pass(v.data, tmp, 2);
  v.data.swap(tmp);
}

// unit-variance correlated noise: white noise blurred to the requested
// correlation length
Volume3D correlated_noise(Dims d, rng::Engine& eng, double corr_sigma) {
  Volume3D v(d, Spacing{});
  for (auto& x : v.data) x = static_cast<float>(eng.normal());
  gaussian_blur(v, corr_sigma);
  double mean = 0;
  for (float x : v.data) mean += x;
  mean /= static_cast<double>(v.data.size());
  double var = 0;
  for (float x : v.data) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.data.size());
  const float scale = var > 0 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
  for (auto& x : v.data) x = (x - static_cast<float>(mean)) * scale;
  return v;
}

struct Ellipsoid {
  double cx, cy, cz;
  double rx, ry, rz;
  double rot[3][3];  // world -> ellipsoid frame

  bool contains(double x, double y, double z, double scale = 1.0) const {
    if (scale <= 0) return false;
    const double px = x - cx, py = y - cy, pz = z - cz;
    const double ex = rot[0][0] * px + rot[0][1] * py + rot[0][2] * pz;
    const double ey = rot[1][0] * px + rot[1][1] * py + rot[1][2] * pz;
    const double ez = rot[2][0] * px + rot[2][1] * py + rot[2][2] * pz;
    const double q = ex * ex / (rx * rx) + ey * ey / (ry * ry) + ez * ez / (rz * rz);
    return q <= scale * scale;
  }
};

void fill_rotation(Ellipsoid& e, rng::Engine& eng) {
  const double a = eng.uniform(0, 2 * M_PI);
  const double b = eng.uniform(0, 2 * M_PI);
  const double c = eng.uniform(0, 2 * M_PI);
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  // ZYX Euler composition
  e.rot[0][0] = cb * cc;
  e.rot[0][1] = cb * sc;
  e.rot[0][2] = -sb;
  e.rot[1][0] = sa * sb * cc - ca * sc;
  e.rot[1][1] = sa * sb * sc + ca * cc;
  e.rot[1][2] = sa * cb;
  e.rot[2][0] = ca * sb * cc + sa * sc;
  e.rot[2][1] = ca * sb * sc - sa * cc;
  e.rot[2][2] = ca * cb;
}

Mask3D rasterize(const Ellipsoid& e, Dims d, double scale) {
  Mask3D m(d, Spacing{});
  std::size_t p = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x, ++p)
        m.data[p] = e.contains(x, y, z, scale) ? 1 : 0;
  return m;
}

DisplacementField random_smooth_field(Dims d, rng::Engine& eng, double amplitude,
                                      int grid) {
  // Gaussian offsets on a coarse control grid, trilinearly upsampled, plus a
  // small global translation
  const double tx = eng.uniform(-0.5 * amplitude, 0.5 * amplitude);
  const double ty = eng.uniform(-0.5 * amplitude, 0.5 * amplitude);
  const double tz = eng.uniform(-0.5 * amplitude, 0.5 * amplitude);

  const int g = std::max(2, grid);
  std::vector<double> cx(g * g * g), cy(g * g * g), cz(g * g * g);
  for (int i = 0; i < g * g * g; ++i) {
    cx[i] = eng.normal(0, amplitude);
    cy[i] = eng.normal(0, amplitude);
    cz[i] = eng.normal(0, amplitude);
  }

  DisplacementField u(d);
  auto sample = [&](const std::vector<double>& c, double fx, double fy, double fz) {
    const int x0 = std::min(static_cast<int>(fx), g - 2);
    const int y0 = std::min(static_cast<int>(fy), g - 2);
    const int z0 = std::min(static_cast<int>(fz), g - 2);
    const double wx = fx - x0, wy = fy - y0, wz = fz - z0;
    auto at = [&](int i, int j, int k) { return c[(k * g + j) * g + i]; };
    const double c00 = at(x0, y0, z0) + wx * (at(x0 + 1, y0, z0) - at(x0, y0, z0));
    const double c10 = at(x0, y0 + 1, z0) + wx * (at(x0 + 1, y0 + 1, z0) - at(x0, y0 + 1, z0));
    const double c01 = at(x0, y0, z0 + 1) + wx * (at(x0 + 1, y0, z0 + 1) - at(x0, y0, z0 + 1));
    const double c11 = at(x0, y0 + 1, z0 + 1) + wx * (at(x0 + 1, y0 + 1, z0 + 1) - at(x0, y0 + 1, z0 + 1));
    const double c0 = c00 + wy * (c10 - c00);
    const double c1 = c01 + wy * (c11 - c01);
    return c0 + wz * (c1 - c0);
  };

  std::size_t p = 0;
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x, ++p) {
        const double fx = static_cast<double>(x) * (g - 1) / (d.nx - 1);
        const double fy = static_cast<double>(y) * (g - 1) / (d.ny - 1);
        const double fz = static_cast<double>(z) * (g - 1) / (d.nz - 1);
        u.ux[p] = tx + sample(cx, fx, fy, fz);
        u.uy[p] = ty + sample(cy, fx, fy, fz);
        u.uz[p] = tz + sample(cz, fx, fy, fz);
      }
  return u;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg, const std::string& out_dir,
                     int threads) {
  if (cfg.dims < 32) throw std::invalid_argument("synth: dims must be >= 32");
  if (cfg.pcr_prevalence < 0 || cfg.pcr_prevalence > 1 ||
      cfg.disappear_fraction < 0 || cfg.disappear_fraction > 1)
    throw std::invalid_argument("synth: probabilities must be in [0,1]");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const int n = cfg.n_patients;
  const Dims dims{cfg.dims, cfg.dims, cfg.dims};
  const double scale = cfg.dims / 64.0;

  // exact-prevalence label deck, shuffled deterministically
  std::vector<int> labels(n, 0);
  const int n_pos = static_cast<int>(std::lround(cfg.pcr_prevalence * n));
  for (int i = 0; i < std::min(n_pos, n); ++i) labels[i] = 1;
  {
    rng::Engine deck(rng::derive_seed(cfg.seed, 0xdecc));
    for (int i = 0; i + 1 < n; ++i) {
      const int j = i + static_cast<int>(deck.uniform_index(n - i));
      std::swap(labels[i], labels[j]);
    }
  }

  SynthResult result;
  result.entries.resize(static_cast<std::size_t>(n));
  result.truths.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t pidx) {
    const int idx = static_cast<int>(pidx);
    rng::Engine eng(rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(idx)));
    const int label = labels[idx];

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "p%04d", idx);
    const std::string id = idbuf;

    // breast region
    Ellipsoid breast;
    breast.cx = dims.nx * eng.uniform(0.47, 0.53);
    breast.cy = dims.ny * eng.uniform(0.47, 0.53);
    breast.cz = dims.nz * eng.uniform(0.47, 0.53);
    breast.rx = dims.nx * eng.uniform(0.36, 0.42);
    breast.ry = dims.ny * eng.uniform(0.32, 0.38);
    breast.rz = dims.nz * eng.uniform(0.34, 0.40);
    fill_rotation(breast, eng);
    Mask3D breast_a = rasterize(breast, dims, 1.0);

    // background: ramp + low-frequency blobs + correlated tissue noise
    Volume3D bg(dims, Spacing{});
    {
      const double gx = eng.uniform(-0.3, 0.3), gy = eng.uniform(-0.3, 0.3),
                   gz = eng.uniform(-0.3, 0.3);
      struct Blob {
        double cx, cy, cz, amp, sg;
      };
      std::vector<Blob> blobs;
      for (int b = 0; b < 8; ++b)
        blobs.push_back({eng.uniform(0.2, 0.8) * dims.nx,
                         eng.uniform(0.2, 0.8) * dims.ny,
                         eng.uniform(0.2, 0.8) * dims.nz,
                         eng.uniform(-22.0, 22.0),
                         eng.uniform(6.0, 16.0) * scale});
      std::size_t p = 0;
      for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
          for (int x = 0; x < dims.nx; ++x, ++p) {
            double v = breast_a.data[p] ? 100.0 + gx * x + gy * y + gz * z : 6.0;
            if (breast_a.data[p]) {
              for (const auto& b : blobs) {
                const double r2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy) +
                                  (z - b.cz) * (z - b.cz);
                v += b.amp * std::exp(-r2 / (2 * b.sg * b.sg));
              }
            }
            bg.data[p] = static_cast<float>(v);
          }
      Volume3D tissue = correlated_noise(dims, eng, 1.4);
      for (std::size_t q = 0; q < bg.data.size(); ++q)
        bg.data[q] += 5.0f * tissue.data[q] * (breast_a.data[q] ? 1.0f : 0.2f);
    }

    // tumour inside the breast
    Ellipsoid tumour;
    tumour.rx = dims.nx * eng.uniform(0.09, 0.15);
    tumour.ry = dims.ny * eng.uniform(0.09, 0.15);
    tumour.rz = dims.nz * eng.uniform(0.09, 0.15);
    tumour.cx = breast.cx + breast.rx * eng.uniform(-0.35, 0.35);
    tumour.cy = breast.cy + breast.ry * eng.uniform(-0.35, 0.35);
    tumour.cz = breast.cz + breast.rz * eng.uniform(-0.35, 0.35);
    fill_rotation(tumour, eng);
    Mask3D mask_a = rasterize(tumour, dims, 1.0);

    // intratumoral texture; its correlation length carries the (weak)
    // baseline label coupling
    const double corr_len = 1.1 + 0.35 * cfg.texture_coupling * label;
    Volume3D texture = correlated_noise(dims, eng, corr_len);

    Volume3D a_raw = bg;
    for (std::size_t q = 0; q < a_raw.data.size(); ++q)
      if (mask_a.data[q])
        a_raw.data[q] = bg.data[q] + 55.0f + 16.0f * texture.data[q];

    // response model
    const bool responder = label == 1;
    const bool disappeared = responder && eng.bernoulli(cfg.disappear_fraction);
    double shrink = disappeared
                        ? 0.0
                        : (responder
                               ? eng.uniform(cfg.shrink_responder_lo, cfg.shrink_responder_hi)
                               : eng.uniform(cfg.shrink_nonresponder_lo,
                                             cfg.shrink_nonresponder_hi));
    const double washout =
        responder ? eng.uniform(cfg.washout_responder_lo, cfg.washout_responder_hi)
                  : eng.uniform(cfg.washout_nonresponder_lo, cfg.washout_nonresponder_hi);

    Mask3D core = rasterize(tumour, dims, shrink);

    Volume3D b_precursor = a_raw;
    {
      // responders lose texture detail outside the resistant core
      Volume3D a_smooth = a_raw;
      if (responder) gaussian_blur(a_smooth, 1.6);
      for (std::size_t q = 0; q < b_precursor.data.size(); ++q) {
        if (!mask_a.data[q] || core.data[q]) continue;
        const float src = responder ? a_smooth.data[q] : a_raw.data[q];
        b_precursor.data[q] =
            bg.data[q] + static_cast<float>(washout) * (src - bg.data[q]);
      }
    }

    // ground-truth deformation: B(x) = precursor(x + u(x))
    DisplacementField gt = random_smooth_field(
        dims, eng, cfg.deformation_amplitude * scale, cfg.deformation_grid);
    const double gt_smooth = smoothness_penalty(gt);
    if (gt_smooth > cfg.smoothness_bound)
      throw std::runtime_error("synth: generated field exceeds the smoothness bound");

    Volume3D vol_a = a_raw;
    gaussian_blur(vol_a, 0.8);
    Volume3D noise_a = correlated_noise(dims, eng, 0.0);
    for (std::size_t q = 0; q < vol_a.data.size(); ++q)
      vol_a.data[q] += 1.5f * noise_a.data[q];

    gaussian_blur(b_precursor, 0.8);
    Volume3D vol_b = warp_trilinear(b_precursor, gt);
    Volume3D noise_b = correlated_noise(dims, eng, 0.0);
    const float gain = static_cast<float>(eng.uniform(0.95, 1.05));
    for (std::size_t q = 0; q < vol_b.data.size(); ++q)
      vol_b.data[q] = gain * vol_b.data[q] + 1.5f * noise_b.data[q];

    Mask3D mask_b = warp_nearest(core, gt);
    Mask3D site = warp_nearest(mask_a, gt);
    Mask3D breast_b = warp_nearest(breast_a, gt);

    // clinical covariates from class-conditional rates
    ClinicalFeatures clin;
    auto draw_marker = [&](const double rate[2]) {
      if (eng.bernoulli(cfg.clinical_missing_rate)) return missing_value();
      return eng.bernoulli(rate[label]) ? 1.0 : 0.0;
    };
    clin.spag5 = draw_marker(cfg.spag5_rate);
    clin.er = draw_marker(cfg.er_rate);
    clin.her2 = draw_marker(cfg.her2_rate);
    {
      static const double stage_p[2][4] = {{0.10, 0.30, 0.35, 0.25},
                                           {0.25, 0.40, 0.25, 0.10}};
      if (eng.bernoulli(cfg.clinical_missing_rate)) {
        clin.tnm_stage = missing_value();
      } else {
        const double r = eng.uniform();
        double acc = 0;
        int stage = 4;
        for (int s = 0; s < 4; ++s) {
          acc += stage_p[label][s];
          if (r < acc) {
            stage = s + 1;
            break;
          }
        }
        clin.tnm_stage = stage;
      }
    }

    auto path_of = [&](const std::string& suffix) {
      return (fs::path(out_dir) / (id + suffix)).string();
    };
    save_metaimage(vol_a, path_of("_va.mhd"));
    save_metaimage(mask_a, path_of("_ma.mhd"));
    save_metaimage(vol_b, path_of("_vb.mhd"));
    save_metaimage(mask_b, path_of("_mb.mhd"));
    save_metaimage(breast_a, path_of("_breast_a.mhd"));
    save_metaimage(breast_b, path_of("_breast_b.mhd"));
    save_metaimage(site, path_of("_site.mhd"));

    ManifestEntry entry;
    entry.id = id;
    entry.volume_a = id + "_va.mhd";
    entry.mask_a = id + "_ma.mhd";
    entry.volume_b = id + "_vb.mhd";
    entry.mask_b = id + "_mb.mhd";
    entry.breast_a = id + "_breast_a.mhd";
    entry.breast_b = id + "_breast_b.mhd";
    entry.clinical = clin;
    entry.label = label;
    result.entries[pidx] = entry;

    SynthPatientTruth truth;
    truth.id = id;
    truth.label = label;
    truth.disappeared = disappeared;
    truth.shrink = shrink;
    truth.washout = washout;
    truth.site_mask = id + "_site.mhd";
    truth.field_smoothness = gt_smooth;
    if (cfg.store_fields) {
      truth.field_base = id + "_gtfield";
      save_field(gt, path_of("_gtfield"));
    }
    result.truths[pidx] = truth;
  });

  result.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(result.entries, result.manifest_path);

  json truth_json = json::array();
  for (const auto& t : result.truths) {
    json e;
    e["id"] = t.id;
    e["label"] = t.label;
    e["disappeared"] = t.disappeared;
    e["shrink"] = t.shrink;
    e["washout"] = t.washout;
    e["site_mask"] = t.site_mask;
    e["field_smoothness"] = t.field_smoothness;
    if (!t.field_base.empty()) e["field_base"] = t.field_base;
    truth_json.push_back(e);
  }
  result.ground_truth_path = (fs::path(out_dir) / "ground_truth.json").string();
  std::ofstream out(result.ground_truth_path);
  out << truth_json.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write ground truth JSON");
  return result;
}

std::vector<SynthPatientTruth> load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground truth: " + path);
  json j;
  in >> j;
  std::vector<SynthPatientTruth> out;
  for (const auto& e : j) {
    SynthPatientTruth t;
    t.id = e.at("id").get<std::string>();
    t.label = e.at("label").get<int>();
    t.disappeared = e.at("disappeared").get<bool>();
    t.shrink = e.at("shrink").get<double>();
    t.washout = e.at("washout").get<double>();
    t.site_mask = e.at("site_mask").get<std::string>();
    t.field_smoothness = e.at("field_smoothness").get<double>();
    if (e.contains("field_base")) t.field_base = e.at("field_base").get<std::string>();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace deltarad
