#include "pointmt/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "pointmt/checkpoint.hpp"
#include "pointmt/errors.hpp"

namespace pointmt {

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!s.label) throw ArgumentError("sample " + std::to_string(i) + " has no label");
    if (*s.label >= class_names.size()) {
      throw ArgumentError("sample " + std::to_string(i) + " label " + std::to_string(*s.label) +
                          " >= class count " + std::to_string(class_names.size()));
    }
    if (s.coords.rank() != 2 || s.coords.cols() != 3 || s.coords.rows() == 0) {
      throw ArgumentError("sample " + std::to_string(i) + " coordinates must be N x 3 with N >= 1");
    }
  }
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.class_names != b.class_names || a.split != b.split || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.samples[i].label != b.samples[i].label || !(a.samples[i].coords == b.samples[i].coords)) {
      return false;
    }
  }
  return true;
}

// --- PMTC -------------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'M', 'T', 'C'};

bool valid_utf8(std::span<const std::uint8_t> s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const std::uint8_t c = s[i];
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1, cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2, cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3, cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t j = 1; j <= extra; ++j) {
      if ((s[i + j] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (s[i + j] & 0x3F);
    }
    static constexpr std::uint32_t min_cp[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < min_cp[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(const char* what) {
    if (remaining() < 4) throw ParseError(std::string("truncated ") + what, pos_);
    const std::uint32_t v = read_u32_le(bytes_, pos_);
    pos_ += 4;
    return v;
  }

  float f32(const char* what) {
    const std::size_t at = pos_;
    const float v = std::bit_cast<float>(u32(what));
    if (!std::isfinite(v)) throw ParseError(std::string("non-finite ") + what, at);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) throw ParseError(std::string("truncated ") + what, pos_);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  append_u32_le(out, kPmtcVersion);
  append_u32_le(out, static_cast<std::uint32_t>(ds.class_names.size()));
  for (const auto& name : ds.class_names) {
    append_u32_le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  append_u32_le(out, static_cast<std::uint32_t>(ds.samples.size()));
  for (const auto& s : ds.samples) {
    append_u32_le(out, static_cast<std::uint32_t>(*s.label));
    append_u32_le(out, static_cast<std::uint32_t>(s.coords.rows()));
    for (float v : s.coords.data()) append_f32_le(out, v);
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string split) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw ParseError("bad magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kPmtcVersion) {
    throw ParseError("unsupported version " + std::to_string(version), version_at);
  }
  Dataset ds;
  ds.split = std::move(split);
  const std::uint32_t classes = r.u32("class count");
  // Every name costs at least its 4-byte length prefix.
  if (classes > r.remaining() / 4) throw ParseError("class count exceeds file size", r.offset() - 4);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const std::uint32_t len = r.u32("class name length");
    const std::size_t at = r.offset();
    const auto name = r.take(len, "class name");
    if (!valid_utf8(name)) throw ParseError("class name is not valid UTF-8", at);
    ds.class_names.emplace_back(name.begin(), name.end());
  }
  const std::uint32_t count = r.u32("sample count");
  if (count > r.remaining() / 8) throw ParseError("sample count exceeds file size", r.offset() - 4);
  ds.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t label_at = r.offset();
    const std::uint32_t label = r.u32("label");
    if (label >= classes) {
      throw ParseError("label " + std::to_string(label) + " >= class count " + std::to_string(classes),
                       label_at);
    }
    const std::size_t n_at = r.offset();
    const std::uint32_t n = r.u32("point count");
    if (n == 0) throw ParseError("empty point cloud", n_at);
    if (static_cast<std::uint64_t>(n) * 12 > r.remaining()) {
      throw ParseError("truncated coordinates of sample " + std::to_string(i), r.offset());
    }
    Tensor<float> coords({n, 3});
    for (auto& v : coords.data()) v = r.f32("coordinate");
    ds.samples.push_back({std::move(coords), std::nullopt, label});
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after the last sample", r.offset());
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
}

namespace {

bool is_normalized(const Tensor<float>& coords) {
  double c[3] = {0, 0, 0}, max_norm = 0;
  const std::size_t n = coords.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < 3; ++d) c[d] += coords(i, d);
  }
  for (auto& v : c) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r2 = 0;
    for (std::size_t d = 0; d < 3; ++d) r2 += double(coords(i, d)) * coords(i, d);
    max_norm = std::max(max_norm, std::sqrt(r2));
  }
  const double centroid = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const bool zero_cloud = max_norm == 0;
  return centroid < 1e-6 && (zero_cloud || std::abs(max_norm - 1) < 1e-6);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, bool normalize) {
  const auto bytes = read_bytes(path);
  Dataset ds;
  try {
    ds = decode_dataset(bytes, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
  if (normalize) {
    for (auto& s : ds.samples) {
      if (!is_normalized(s.coords)) s = normalize_cloud(s);
    }
  }
  return ds;
}

// --- Synthetic shapes ----------------------------------------------------------

const std::vector<std::string>& synthetic_shape_names() {
  static const std::vector<std::string> names{"sphere", "cube",  "cylinder", "cone",
                                              "torus",  "plane", "helix",    "cross"};
  return names;
}

void SynthConfig::validate() const {
  if (classes.size() < 2) throw ConfigError("synth.classes must list at least 2 shapes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& all = synthetic_shape_names();
    if (std::find(all.begin(), all.end(), classes[i]) == all.end()) {
      throw ConfigError("synth.classes: unknown shape '" + classes[i] + "'");
    }
    if (std::find(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(i), classes[i]) !=
        classes.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ConfigError("synth.classes: duplicate shape '" + classes[i] + "'");
    }
  }
  if (points_per_cloud < 16) throw ConfigError("synth.points_per_cloud must be >= 16");
  if (samples_per_class == 0) throw ConfigError("synth.samples_per_class must be >= 1");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("synth.noise_sigma must be finite and >= 0");
  }
}

namespace {

using Point = std::array<double, 3>;
using Rng = std::mt19937_64;

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
constexpr double kTwoPi = 2 * std::numbers::pi;

Point unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  while (true) {
    Point p{n(rng), n(rng), n(rng)};
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (r > 1e-9) return {p[0] / r, p[1] / r, p[2] / r};
  }
}

Point disk_point(Rng& rng, double radius, double z) {
  const double r = radius * std::sqrt(uniform01(rng)), t = uniform(rng, 0, kTwoPi);
  return {r * std::cos(t), r * std::sin(t), z};
}

Point cube_point(Rng& rng) {
  const int face = static_cast<int>(uniform01(rng) * 6) % 6;
  const double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1), s = face % 2 ? 1.0 : -1.0;
  switch (face / 2) {
    case 0: return {s, a, b};
    case 1: return {a, s, b};
    default: return {a, b, s};
  }
}

Point cylinder_point(Rng& rng) {
  // Lateral area 4 pi, each cap pi.
  const double u = uniform01(rng) * 6;
  if (u < 4) {
    const double t = uniform(rng, 0, kTwoPi);
    return {std::cos(t), std::sin(t), uniform(rng, -1, 1)};
  }
  return disk_point(rng, 1.0, u < 5 ? -1.0 : 1.0);
}

Point cone_point(Rng& rng) {
  // Apex (0,0,1), base radius 1 at z = -1: lateral area pi*sqrt(5), base pi.
  const double lateral = std::sqrt(5.0);
  if (uniform01(rng) * (lateral + 1) < lateral) {
    const double s = std::sqrt(uniform01(rng)), t = uniform(rng, 0, kTwoPi);
    return {s * std::cos(t), s * std::sin(t), 1 - 2 * s};
  }
  return disk_point(rng, 1.0, -1.0);
}

Point torus_point(Rng& rng) {
  constexpr double R = 1.0, r = 0.35;
  while (true) {
    const double u = uniform(rng, 0, kTwoPi), v = uniform(rng, 0, kTwoPi);
    if (uniform01(rng) * (R + r) <= R + r * std::cos(v)) {
      return {(R + r * std::cos(v)) * std::cos(u), (R + r * std::cos(v)) * std::sin(u), r * std::sin(v)};
    }
  }
}

Point plane_point(Rng& rng) { return {uniform(rng, -1, 1), uniform(rng, -1, 1), 0.0}; }

Point tube_offset(Rng& rng, double radius) {
  const double t = uniform(rng, 0, kTwoPi);
  return {radius * std::cos(t), radius * std::sin(t), 0};
}

Point helix_point(Rng& rng) {
  // Two turns of radius 0.6 over z in [-1, 1], thickened to a thin tube.
  const double s = uniform01(rng), t = 2 * kTwoPi * s;
  const Point off = tube_offset(rng, 0.05);
  const double radial = 0.6 + off[0];
  return {radial * std::cos(t), radial * std::sin(t), -1 + 2 * s + off[1]};
}

Point cross_point(Rng& rng) {
  // Two perpendicular bars of half-length 1 and half-width 0.12 in z = 0.
  const double along = uniform(rng, -1, 1), across = uniform(rng, -0.12, 0.12),
               z = uniform(rng, -0.12, 0.12);
  return uniform01(rng) < 0.5 ? Point{along, across, z} : Point{across, along, z};
}

Point shape_point(const std::string& shape, Rng& rng) {
  if (shape == "cube") return cube_point(rng);
  if (shape == "cylinder") return cylinder_point(rng);
  if (shape == "cone") return cone_point(rng);
  if (shape == "torus") return torus_point(rng);
  if (shape == "plane") return plane_point(rng);
  if (shape == "helix") return helix_point(rng);
  if (shape == "cross") return cross_point(rng);
  return unit_vector(rng);
}

std::array<double, 9> random_rotation(Rng& rng) {
  // Uniform rotation from a normalized quaternion.
  std::normal_distribution<double> n(0.0, 1.0);
  double q[4];
  double len = 0;
  do {
    len = 0;
    for (double& v : q) v = n(rng), len += v * v;
  } while (len < 1e-12);
  len = std::sqrt(len);
  const double w = q[0] / len, x = q[1] / len, y = q[2] / len, z = q[3] / len;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

PointCloud<float> synth_cloud(const std::string& shape, std::size_t n, double sigma, Rng& rng) {
  std::vector<Point> pts;
  pts.reserve(n);
  if (shape == "sphere") {
    // Antipodal pairs keep the centroid exactly at the origin.
    while (pts.size() + 1 < n) {
      const Point p = unit_vector(rng);
      pts.push_back(p);
      pts.push_back({-p[0], -p[1], -p[2]});
    }
    if (pts.size() < n) pts.push_back(unit_vector(rng));
  } else {
    for (std::size_t i = 0; i < n; ++i) pts.push_back(shape_point(shape, rng));
  }
  if (sigma > 0) {
    std::normal_distribution<double> jitter(0.0, sigma);
    for (auto& p : pts) {
      for (double& v : p) v += jitter(rng);
    }
  }
  const auto R = random_rotation(rng);
  Tensor<double> coords({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < 3; ++r) {
      coords(i, r) = R[r * 3] * pts[i][0] + R[r * 3 + 1] * pts[i][1] + R[r * 3 + 2] * pts[i][2];
    }
  }
  const auto normalized = normalize_cloud(PointCloud<double>{std::move(coords), std::nullopt, std::nullopt});
  return {normalized.coords.cast<float>(), std::nullopt, std::nullopt};
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg, const std::string& split) {
  cfg.validate();
  const bool test = split == "test";
  const std::size_t per_class = test ? cfg.test_samples_per_class : cfg.samples_per_class;
  Dataset ds;
  ds.class_names = cfg.classes;
  ds.split = split;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
      const auto& all = synthetic_shape_names();
      const auto shape_id = static_cast<std::uint64_t>(
          std::find(all.begin(), all.end(), cfg.classes[c]) - all.begin());
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(test ? 1 : 0), static_cast<std::uint32_t>(shape_id),
                        static_cast<std::uint32_t>(i)};
      Rng rng(seq);
      auto cloud = synth_cloud(cfg.classes[c], cfg.points_per_cloud, cfg.noise_sigma, rng);
      cloud.label = c;
      ds.samples.push_back(std::move(cloud));
    }
  }
  return ds;
}

// --- Resampling --------------------------------------------------------------------

std::vector<std::size_t> resample_indices(const Tensor<float>& coords, std::size_t n,
                                          std::uint64_t seed) {
  const std::size_t count = coords.rows();
  if (count == 0) throw ArgumentError("resample: empty cloud");
  if (n == 0) throw ArgumentError("resample: n must be >= 1");
  if (count >= n) return farthest_point_sample(coords, n);
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  while (idx.size() < n) idx.push_back(pick(rng));
  return idx;
}

PointCloud<float> resample(const PointCloud<float>& cloud, std::size_t n, std::uint64_t seed) {
  const auto idx = resample_indices(cloud.coords, n, seed);
  PointCloud<float> out;
  out.coords = gather_rows(cloud.coords, idx);
  if (cloud.features) out.features = gather_rows(*cloud.features, idx);
  out.label = cloud.label;
  return out;
}

// --- OFF meshes ----------------------------------------------------------------------

namespace {

class Tokens {
 public:
  explicit Tokens(const std::string& text) : text_(text) {}

  std::size_t offset() const { return pos_; }

  std::string next(const char* what) {
    skip();
    if (pos_ >= text_.size()) throw ParseError(std::string("OFF: expected ") + what, pos_);
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  template <typename N>
  N number(const char* what) {
    const std::size_t at = (skip(), pos_);
    const std::string tok = next(what);
    std::istringstream is(tok);
    N v{};
    is >> v;
    if (!is || is.peek() != std::char_traits<char>::eof()) {
      throw ParseError(std::string("OFF: bad ") + what + " '" + tok + "'", at);
    }
    return v;
  }

 private:
  void skip() {
    while (pos_ < text_.size()) {
      if (text_[pos_] == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

TriangleMesh parse_off(const std::string& text) {
  Tokens t(text);
  std::string head = t.next("OFF header");
  if (head.rfind("OFF", 0) != 0) throw ParseError("OFF: missing header", 0);
  long long nv, nf;
  if (head.size() > 3) {
    std::istringstream is(head.substr(3));
    if (!(is >> nv)) throw ParseError("OFF: bad vertex count", 3);
    nf = t.number<long long>("face count");
  } else {
    nv = t.number<long long>("vertex count");
    nf = t.number<long long>("face count");
  }
  t.number<long long>("edge count");
  if (nv <= 0 || nf < 0) throw ParseError("OFF: invalid element counts", t.offset());
  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv) * 3);
  for (long long i = 0; i < nv * 3; ++i) {
    const float v = t.number<float>("vertex coordinate");
    if (!std::isfinite(v)) throw ParseError("OFF: non-finite vertex coordinate", t.offset());
    mesh.vertices.push_back(v);
  }
  for (long long f = 0; f < nf; ++f) {
    const std::size_t at = t.offset();
    const long long arity = t.number<long long>("face arity");
    if (arity < 3) throw ParseError("OFF: face with fewer than 3 vertices", at);
    std::vector<std::uint32_t> idx;
    for (long long j = 0; j < arity; ++j) {
      const long long v = t.number<long long>("face index");
      if (v < 0 || v >= nv) throw ParseError("OFF: face index out of range", t.offset());
      idx.push_back(static_cast<std::uint32_t>(v));
    }
    for (std::size_t j = 1; j + 1 < idx.size(); ++j) {
      mesh.triangles.insert(mesh.triangles.end(), {idx[0], idx[j], idx[j + 1]});
    }
  }
  return mesh;
}

TriangleMesh load_off(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return parse_off(std::string(bytes.begin(), bytes.end()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

Tensor<float> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  const std::size_t faces = mesh.triangles.size() / 3;
  if (faces == 0) throw ArgumentError("sample_surface: mesh has no faces");
  auto vertex = [&](std::uint32_t i) {
    return Point{mesh.vertices[i * 3], mesh.vertices[i * 3 + 1], mesh.vertices[i * 3 + 2]};
  };
  std::vector<double> cumulative(faces);
  double total = 0;
  for (std::size_t f = 0; f < faces; ++f) {
    const Point a = vertex(mesh.triangles[f * 3]), b = vertex(mesh.triangles[f * 3 + 1]),
                c = vertex(mesh.triangles[f * 3 + 2]);
    const Point u{b[0] - a[0], b[1] - a[1], b[2] - a[2]}, v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const Point x{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    total += 0.5 * std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    cumulative[f] = total;
  }
  if (!(total > 0)) throw ArgumentError("sample_surface: mesh has zero area");
  Rng rng(seed);
  Tensor<float> out({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const double target = uniform01(rng) * total;
    const std::size_t f = std::min<std::size_t>(
        faces - 1, std::upper_bound(cumulative.begin(), cumulative.end(), target) - cumulative.begin());
    double r1 = std::sqrt(uniform01(rng)), r2 = uniform01(rng);
    const Point a = vertex(mesh.triangles[f * 3]), b = vertex(mesh.triangles[f * 3 + 1]),
                c = vertex(mesh.triangles[f * 3 + 2]);
    for (std::size_t d = 0; d < 3; ++d) {
      out(i, d) = static_cast<float>((1 - r1) * a[d] + r1 * (1 - r2) * b[d] + r1 * r2 * c[d]);
    }
  }
  return out;
}

Dataset import_off_directory(const std::filesystem::path& root, const std::string& split,
                             std::size_t points, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ArgumentError("OFF import: not a directory: " + root.string());
  Dataset ds;
  ds.split = split;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) ds.class_names.push_back(entry.path().filename().string());
  }
  std::sort(ds.class_names.begin(), ds.class_names.end());
  for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
    const fs::path dir = root / ds.class_names[c] / split;
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".off") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto coords = sample_surface(load_off(files[i]), points, seed + ds.samples.size());
      auto cloud = normalize_cloud(PointCloud<float>{coords, std::nullopt, c});
      cloud.label = c;
      ds.samples.push_back(std::move(cloud));
    }
  }
  return ds;
}

}  // namespace pointmt
