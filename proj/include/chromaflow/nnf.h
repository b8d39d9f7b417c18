#pragma once

#include <cstdint>
#include <vector>

#include "chromaflow/color.h"
#include "chromaflow/features.h"

namespace chromaflow {

struct Coord {
  int x = 0;
  int y = 0;
  bool operator==(const Coord&) const = default;
};

// Dense correspondence from a source map to a target map.
struct NnField {
  int width = 0;  // source dims
  int height = 0;
  int target_width = 0;
  int target_height = 0;
  std::vector<Coord> map;
  std::vector<float> dist;

  NnField() = default;
  NnField(int w, int h, int tw, int th);

  Coord& at(int x, int y) { return map[static_cast<std::size_t>(y) * width + x]; }
  const Coord& at(int x, int y) const { return map[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const NnField&) const = default;
};

// Reference content warped into source layout at one level.
struct Guidance {
  LabImage image;         // G^L
  FeatureMap features;    // F_G^L
  Plane raw_error;        // per-pixel squared normalized-feature distance
  GrayImage error;        // raw_error min-max normalized to [0,1]
};

inline constexpr int kDefaultPatch = 3;

// Sum over the patch of squared distances between channel-normalized feature
// vectors. Offsets falling outside either map are dropped and the sum is
// rescaled by full_area / valid_area. Throws std::out_of_range for centers
// outside their maps, DimensionError on a channel mismatch.
float patch_distance(const FeatureMap& src, const FeatureMap& tgt, Coord p, Coord q,
                     int patch = kDefaultPatch);

struct PatchMatchOptions {
  int iterations = 6;
  int patch = kDefaultPatch;
  std::uint64_t seed = 0;
};

// Randomized NNF search: uniform random init, then alternating forward and
// reverse scan-order propagation with random search whose radius halves
// from max(target dims) to 1. Deterministic for a given seed.
NnField patchmatch(const FeatureMap& src, const FeatureMap& tgt, const PatchMatchOptions& opts);

// Exhaustive NNF. Quadratic cost; meant for small maps and verification.
NnField exhaustive_nnf(const FeatureMap& src, const FeatureMap& tgt, int patch = kDefaultPatch);

// Bidirectional-similarity voting. Each source pixel averages target colors
// and features from every overlapping patch placed through the forward field
// (weight 1) and through the backward field (weight w * N_src / N_tgt).
// Fills image and features; error planes are left empty.
Guidance bds_vote(const NnField& fwd, const NnField& bwd, const LabImage& tgt_img,
                  const FeatureMap& tgt_feat, float completeness_weight,
                  int patch = kDefaultPatch);

// Per-pixel ||normalize(a) - normalize(b)||^2.
Plane raw_matching_error(const FeatureMap& a, const FeatureMap& b);
// Min-max normalization to [0,1]; a constant plane maps to all zeros.
GrayImage normalize_error(const Plane& raw);
// normalize_error(raw_matching_error(src, guide)).
GrayImage matching_error(const FeatureMap& src, const FeatureMap& guide);

}  // namespace chromaflow
