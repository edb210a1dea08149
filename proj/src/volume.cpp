#include "deltarad/volume.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "raw payload I/O assumes a little-endian host");

namespace deltarad {

namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

// Corner-aligned source coordinate for an output index.
double src_coord(int dst, int n_dst, int n_src) {
  if (n_dst <= 1) return 0.0;
  return static_cast<double>(dst) * (n_src - 1) / (n_dst - 1);
}

Spacing rescale_spacing(const Spacing& s, Dims from, Dims to) {
  return Spacing{s.sx * from.nx / to.nx, s.sy * from.ny / to.ny,
                 s.sz * from.nz / to.nz};
}

}  // namespace

std::size_t Mask3D::count_set() const {
  return static_cast<std::size_t>(
      std::count(data.begin(), data.end(), std::uint8_t{1}));
}

std::optional<BoundingBox> bounding_box(const Mask3D& m) {
  BoundingBox b;
  b.lo = {m.dims.nx, m.dims.ny, m.dims.nz};
  b.hi = {-1, -1, -1};
  std::size_t p = 0;
  for (int z = 0; z < m.dims.nz; ++z)
    for (int y = 0; y < m.dims.ny; ++y)
      for (int x = 0; x < m.dims.nx; ++x, ++p) {
        if (!m.data[p]) continue;
        b.lo[0] = std::min(b.lo[0], x);
        b.lo[1] = std::min(b.lo[1], y);
        b.lo[2] = std::min(b.lo[2], z);
        b.hi[0] = std::max(b.hi[0], x);
        b.hi[1] = std::max(b.hi[1], y);
        b.hi[2] = std::max(b.hi[2], z);
      }
  if (b.hi[0] < 0) return std::nullopt;
  return b;
}

namespace {

template <typename Grid>
Grid crop_impl(const Grid& g, const BoundingBox& b, int margin) {
  const int nx = g.dims.nx, ny = g.dims.ny, nz = g.dims.nz;
  const int x0 = clampi(b.lo[0] - margin, 0, nx - 1);
  const int y0 = clampi(b.lo[1] - margin, 0, ny - 1);
  const int z0 = clampi(b.lo[2] - margin, 0, nz - 1);
  const int x1 = clampi(b.hi[0] + margin, 0, nx - 1);
  const int y1 = clampi(b.hi[1] + margin, 0, ny - 1);
  const int z1 = clampi(b.hi[2] + margin, 0, nz - 1);
  if (x1 < x0 || y1 < y0 || z1 < z0)
    throw std::invalid_argument("crop: box does not intersect the grid");

  Grid out(Dims{x1 - x0 + 1, y1 - y0 + 1, z1 - z0 + 1}, g.spacing);
  std::size_t p = 0;
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x, ++p) out.data[p] = g.at(x, y, z);
  return out;
}

}  // namespace

Volume3D crop(const Volume3D& v, const BoundingBox& b, int margin) {
  return crop_impl(v, b, margin);
}

Mask3D crop(const Mask3D& m, const BoundingBox& b, int margin) {
  return crop_impl(m, b, margin);
}

Volume3D resize_trilinear(const Volume3D& v, Dims target) {
  if (target.nx < 1 || target.ny < 1 || target.nz < 1)
    throw std::invalid_argument("resize: target dims must be >= 1");
  Volume3D out(target, rescale_spacing(v.spacing, v.dims, target));
  const int nx = v.dims.nx, ny = v.dims.ny, nz = v.dims.nz;
  std::size_t p = 0;
  for (int z = 0; z < target.nz; ++z) {
    const double fz = src_coord(z, target.nz, nz);
    const int z0 = std::min(static_cast<int>(fz), nz - 1);
    const int z1 = std::min(z0 + 1, nz - 1);
    const double wz = fz - z0;
    for (int y = 0; y < target.ny; ++y) {
      const double fy = src_coord(y, target.ny, ny);
      const int y0 = std::min(static_cast<int>(fy), ny - 1);
      const int y1 = std::min(y0 + 1, ny - 1);
      const double wy = fy - y0;
      for (int x = 0; x < target.nx; ++x, ++p) {
        const double fx = src_coord(x, target.nx, nx);
        const int x0 = std::min(static_cast<int>(fx), nx - 1);
        const int x1 = std::min(x0 + 1, nx - 1);
        const double wx = fx - x0;
        const double c00 = v.at(x0, y0, z0) + wx * (v.at(x1, y0, z0) - v.at(x0, y0, z0));
        const double c10 = v.at(x0, y1, z0) + wx * (v.at(x1, y1, z0) - v.at(x0, y1, z0));
        const double c01 = v.at(x0, y0, z1) + wx * (v.at(x1, y0, z1) - v.at(x0, y0, z1));
        const double c11 = v.at(x0, y1, z1) + wx * (v.at(x1, y1, z1) - v.at(x0, y1, z1));
        const double c0 = c00 + wy * (c10 - c00);
        const double c1 = c01 + wy * (c11 - c01);
        out.data[p] = static_cast<float>(c0 + wz * (c1 - c0));
      }
    }
  }
  return out;
}

Mask3D resize_nearest(const Mask3D& m, Dims target) {
  if (target.nx < 1 || target.ny < 1 || target.nz < 1)
    throw std::invalid_argument("resize: target dims must be >= 1");
  Mask3D out(target, rescale_spacing(m.spacing, m.dims, target));
  const int nx = m.dims.nx, ny = m.dims.ny, nz = m.dims.nz;
  std::size_t p = 0;
  for (int z = 0; z < target.nz; ++z) {
    const int sz = clampi(static_cast<int>(std::lround(src_coord(z, target.nz, nz))), 0, nz - 1);
    for (int y = 0; y < target.ny; ++y) {
      const int sy = clampi(static_cast<int>(std::lround(src_coord(y, target.ny, ny))), 0, ny - 1);
      for (int x = 0; x < target.nx; ++x, ++p) {
        const int sx = clampi(static_cast<int>(std::lround(src_coord(x, target.nx, nx))), 0, nx - 1);
        out.data[p] = m.at(sx, sy, sz);
      }
    }
  }
  return out;
}

// --- MetaImage I/O -------------------------------------------------------

namespace {

// Shortest representation that round-trips; always carries a decimal point
// so headers read unambiguously as floating point ("1.0", not "1").
std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

struct Header {
  Dims dims;
  Spacing spacing;
  std::string element_type;
  std::string data_file;
};

[[noreturn]] void bad_header(const std::string& path, const std::string& why) {
  throw std::runtime_error("malformed MetaImage header '" + path + "': " + why);
}

Header parse_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MetaImage header: " + path);

  Header h;
  bool saw_ndims = false, saw_dims = false, saw_type = false, saw_file = false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) bad_header(path, "line without '=': " + line);
    auto trim = [](std::string s) {
      const char* ws = " \t";
      auto b = s.find_first_not_of(ws);
      auto e = s.find_last_not_of(ws);
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "ObjectType") {
      if (val != "Image") bad_header(path, "ObjectType must be Image");
    } else if (key == "NDims") {
      if (val != "3") bad_header(path, "NDims must be 3");
      saw_ndims = true;
    } else if (key == "DimSize") {
      std::istringstream ss(val);
      if (!(ss >> h.dims.nx >> h.dims.ny >> h.dims.nz))
        bad_header(path, "DimSize needs three integers");
      if (h.dims.nx < 1 || h.dims.ny < 1 || h.dims.nz < 1)
        bad_header(path, "DimSize components must be >= 1");
      saw_dims = true;
    } else if (key == "ElementSpacing") {
      std::istringstream ss(val);
      if (!(ss >> h.spacing.sx >> h.spacing.sy >> h.spacing.sz))
        bad_header(path, "ElementSpacing needs three numbers");
      if (h.spacing.sx <= 0 || h.spacing.sy <= 0 || h.spacing.sz <= 0)
        bad_header(path, "ElementSpacing components must be > 0");
    } else if (key == "ElementType") {
      h.element_type = val;
      saw_type = true;
    } else if (key == "ElementDataFile") {
      h.data_file = val;
      saw_file = true;
    }
    // unknown keys are ignored
  }
  if (!saw_ndims) bad_header(path, "missing NDims");
  if (!saw_dims) bad_header(path, "missing DimSize");
  if (!saw_type) bad_header(path, "missing ElementType");
  if (!saw_file) bad_header(path, "missing ElementDataFile");
  return h;
}

std::vector<char> read_payload(const std::string& header_path,
                               const std::string& data_file,
                               std::size_t expected_bytes) {
  namespace fs = std::filesystem;
  fs::path raw = fs::path(header_path).parent_path() / data_file;
  std::error_code ec;
  auto size = fs::file_size(raw, ec);
  if (ec) throw std::runtime_error("cannot stat raw payload: " + raw.string());
  if (size != expected_bytes)
    throw std::runtime_error("payload size mismatch for '" + raw.string() +
                             "': expected " + std::to_string(expected_bytes) +
                             " bytes, found " + std::to_string(size));
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open raw payload: " + raw.string());
  std::vector<char> bytes(expected_bytes);
  in.read(bytes.data(), static_cast<std::streamsize>(expected_bytes));
  if (!in) throw std::runtime_error("short read on raw payload: " + raw.string());
  return bytes;
}

void write_header(const std::string& header_path, Dims d, Spacing s,
                  const std::string& element_type,
                  const std::string& data_file) {
  std::ofstream out(header_path);
  if (!out) throw std::runtime_error("cannot write MetaImage header: " + header_path);
  out << "ObjectType = Image\n";
  out << "NDims = 3\n";
  out << "DimSize = " << d.nx << " " << d.ny << " " << d.nz << "\n";
  out << "ElementSpacing = " << format_double(s.sx) << " " << format_double(s.sy)
      << " " << format_double(s.sz) << "\n";
  out << "ElementType = " << element_type << "\n";
  out << "ElementDataFile = " << data_file << "\n";
  if (!out) throw std::runtime_error("write failure on header: " + header_path);
}

std::string raw_name_for(const std::string& header_path) {
  namespace fs = std::filesystem;
  return fs::path(header_path).filename().replace_extension(".raw").string();
}

void write_payload(const std::string& header_path, const std::string& data_file,
                   const void* bytes, std::size_t n) {
  namespace fs = std::filesystem;
  fs::path raw = fs::path(header_path).parent_path() / data_file;
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write raw payload: " + raw.string());
  out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failure on payload: " + raw.string());
}

}  // namespace

MetaImage load_metaimage(const std::string& header_path) {
  Header h = parse_header(header_path);
  const std::size_t n = h.dims.count();
  if (h.element_type == "MET_FLOAT") {
    auto bytes = read_payload(header_path, h.data_file, n * sizeof(float));
    Volume3D v(h.dims, h.spacing);
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    for (float f : v.data)
      if (!std::isfinite(f))
        throw std::runtime_error("non-finite voxel value in " + header_path);
    return v;
  }
  if (h.element_type == "MET_UCHAR") {
    auto bytes = read_payload(header_path, h.data_file, n);
    Mask3D m(h.dims, h.spacing);
    std::memcpy(m.data.data(), bytes.data(), bytes.size());
    for (auto b : m.data)
      if (b > 1)
        throw std::runtime_error("mask value outside {0,1} in " + header_path);
    return m;
  }
  throw std::runtime_error("unsupported ElementType '" + h.element_type +
                           "' in " + header_path);
}

Volume3D load_volume(const std::string& header_path) {
  auto img = load_metaimage(header_path);
  if (auto* v = std::get_if<Volume3D>(&img)) return std::move(*v);
  throw std::runtime_error("expected MET_FLOAT volume: " + header_path);
}

Mask3D load_mask(const std::string& header_path) {
  auto img = load_metaimage(header_path);
  if (auto* m = std::get_if<Mask3D>(&img)) return std::move(*m);
  throw std::runtime_error("expected MET_UCHAR mask: " + header_path);
}

void save_metaimage(const Volume3D& v, const std::string& header_path) {
  const std::string raw = raw_name_for(header_path);
  write_header(header_path, v.dims, v.spacing, "MET_FLOAT", raw);
  write_payload(header_path, raw, v.data.data(), v.data.size() * sizeof(float));
}

void save_metaimage(const Mask3D& m, const std::string& header_path) {
  const std::string raw = raw_name_for(header_path);
  write_header(header_path, m.dims, m.spacing, "MET_UCHAR", raw);
  write_payload(header_path, raw, m.data.data(), m.data.size());
}

}  // namespace deltarad
