#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pointmt/geometry.hpp"

namespace pointmt {

struct Dataset {
  std::vector<PointCloud<float>> samples;  // every sample labeled
  std::vector<std::string> class_names;
  std::string split = "train";

  std::size_t size() const { return samples.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  /// Throws ArgumentError if a label is missing or out of range.
  void validate() const;
};

bool operator==(const Dataset& a, const Dataset& b);

// --- PMTC files ------------------------------------------------------------
// "PMTC", u32 version (1), u32 class count, per class a u32 byte length and
// UTF-8 name, u32 sample count, then per sample u32 label, u32 N and N x 3
// float32 coordinates. All integers and floats little-endian.

inline constexpr std::uint32_t kPmtcVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
/// Strict decoder: any truncation, trailing data, bad magic/version, invalid
/// UTF-8, label >= class count, empty cloud or non-finite coordinate is a
/// ParseError carrying the byte offset.
Dataset decode_dataset(std::span<const std::uint8_t> bytes, std::string split = "train");

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
/// Decodes a file. With `normalize` every cloud that is not already centered
/// with unit max norm (within 1e-6) is normalized; stored normalized clouds
/// are returned bit-for-bit.
Dataset load_dataset(const std::filesystem::path& path, bool normalize = true);

// --- Synthetic shapes ------------------------------------------------------

const std::vector<std::string>& synthetic_shape_names();

struct SynthConfig {
  std::vector<std::string> classes = synthetic_shape_names();
  std::size_t samples_per_class = 64;
  std::size_t test_samples_per_class = 16;
  std::size_t points_per_cloud = 128;
  double noise_sigma = 0.02;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Surface samples with Gaussian jitter, a random rotation per cloud, then
/// normalization. Each cloud draws from its own generator seeded by
/// (seed, split, class, index), so the result is a pure function of the
/// config. The test split uses `test_samples_per_class`.
Dataset generate_synthetic(const SynthConfig& cfg, const std::string& split = "train");

// --- Resampling and mesh import ----------------------------------------------

/// N >= n: the farthest point sample of size n. N < n: every point once, then
/// n - N further points drawn uniformly with replacement.
std::vector<std::size_t> resample_indices(const Tensor<float>& coords, std::size_t n,
                                          std::uint64_t seed);
PointCloud<float> resample(const PointCloud<float>& cloud, std::size_t n, std::uint64_t seed);

struct TriangleMesh {
  std::vector<float> vertices;               // V x 3
  std::vector<std::uint32_t> triangles;      // F x 3 (polygons fan-triangulated)
};

/// ASCII OFF reader; tolerates the "OFF<V> <F> <E>" header variant.
TriangleMesh parse_off(const std::string& text);
TriangleMesh load_off(const std::filesystem::path& path);

/// Area-weighted uniform surface samples.
Tensor<float> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// Directory layout root/<class>/<split>/*.off; classes sorted by name.
Dataset import_off_directory(const std::filesystem::path& root, const std::string& split,
                             std::size_t points = 1024, std::uint64_t seed = 42);

}  // namespace pointmt
