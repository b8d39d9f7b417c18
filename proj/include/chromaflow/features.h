#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "chromaflow/color.h"

namespace chromaflow {

inline constexpr int kNumLevels = 5;

// One reluL_1-style activation map. Layout is height x width x channels with
// the channel index fastest.
struct FeatureMap {
  int level = 1;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int level, int w, int h, int c, float fill = 0.0f);

  float* at(int x, int y) { return &data[offset(x, y)]; }
  const float* at(int x, int y) const { return &data[offset(x, y)]; }
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool operator==(const FeatureMap&) const = default;
};

// Per-dimension size of level `level` for a source dimension: ceil(d / 2^(L-1)).
int level_extent(int source_extent, int level);

// Levels stored in descending order (L = 5 first), the same order as on disk.
struct FeaturePyramid {
  int source_width = 0;
  int source_height = 0;
  std::vector<FeatureMap> levels;

  bool has_level(int level) const;
  // Throws std::out_of_range if absent.
  const FeatureMap& level(int level) const;

  bool operator==(const FeaturePyramid&) const = default;
};

// Validates the invariants a pyramid must satisfy before it is written or
// after it is read: 1..5 distinct levels in descending order, nonzero sizes
// and channels, finite values, and ceil-halving between levels.
void validate_pyramid(const FeaturePyramid& p);

// Binary .fpyr format:
//   "FPYR" | u32 version=1 | u32 level_count |
//   per level (descending L): u32 L, u32 height, u32 width, u32 channels,
//   then height*width*channels little-endian f32, channel-fastest.
// Throws FormatError with the byte offset of the offending field.
FeaturePyramid read_pyramid(const std::filesystem::path& path);
// Throws std::invalid_argument for an invalid pyramid, IoError on write failure.
void write_pyramid(const FeaturePyramid& p, const std::filesystem::path& path);

// Deterministic stand-in for the VGG backend. Level L smooths the Lab planes
// with a Gaussian of sigma 2^(L-1), subsamples by 2^(L-1), and emits four
// non-negative channels: unit-range L, unit-range a and b scaled by 0.1, and
// the gradient magnitude of L scaled by 16.
FeaturePyramid toy_extract(const LabImage& img);
FeatureMap toy_extract_level(const LabImage& img, int level);

// Divides each pixel's channel vector by its Euclidean norm; zero vectors
// stay zero.
FeatureMap channel_normalize(const FeatureMap& f);

}  // namespace chromaflow
