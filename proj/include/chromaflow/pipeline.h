#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chromaflow/color.h"
#include "chromaflow/features.h"
#include "chromaflow/local_transfer.h"
#include "chromaflow/multiref.h"
#include "chromaflow/nnf.h"

namespace chromaflow {

enum class Backend { kToy, kFile };

struct PipelineConfig {
  int levels = kNumLevels;
  float bds_w = 2.0f;
  int patchmatch_iters = 6;
  TransferParams transfer;
  MergeParams merge;
  Backend backend = Backend::kToy;
  std::uint64_t seed = 0;
  bool keep_artifacts = false;
};

// Supplies features of the intermediate source image at one level. The
// pipeline calls it once per level, coarsest first; the level-5 call always
// receives the unmodified source.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual FeatureMap extract(const RgbImage& image, int level) = 0;
};

class ToyFeatureProvider : public FeatureProvider {
 public:
  FeatureMap extract(const RgbImage& image, int level) override;
};

// File backend. Level 5 may come from a pyramid precomputed for the source;
// every other level round-trips through the exporter:
//   <workdir>/intermediate_L<L>.png  ->  exporter <png> <fpyr> --level <L>
class CheckpointFeatureProvider : public FeatureProvider {
 public:
  CheckpointFeatureProvider(std::filesystem::path workdir, std::string exporter_cmd,
                            std::optional<FeaturePyramid> source_pyramid = std::nullopt);
  FeatureMap extract(const RgbImage& image, int level) override;

 private:
  std::filesystem::path workdir_;
  std::string exporter_cmd_;
  std::optional<FeaturePyramid> source_pyramid_;
};

// Runs `<exporter_cmd> <image> <output> [--level L]` and reads the result.
FeaturePyramid run_exporter(const std::string& exporter_cmd, const std::filesystem::path& image,
                            const std::filesystem::path& output, std::optional<int> level = {});

FeaturePyramid toy_pyramid(const RgbImage& image);

struct LevelArtifacts {
  int level = 0;
  std::vector<NnField> forward;   // source -> reference i
  std::vector<NnField> backward;  // reference i -> source
  LabelMap labels;                // empty on the single-reference path
  LabImage guidance;              // G^L
  LabImage intermediate;          // S~^L at full source resolution
};

struct RunArtifacts {
  std::vector<LevelArtifacts> levels;  // L = 5 first
};

struct TransferResult {
  RgbImage image;
  RunArtifacts artifacts;
};

// Coarse-to-fine joint matching and local color transfer, L = 5..1.
TransferResult transfer_single(const RgbImage& source, const RgbImage& reference,
                               FeatureProvider& source_features,
                               const FeaturePyramid& reference_pyramid,
                               const PipelineConfig& cfg);

// Same loop with per-reference guidance candidates merged by label selection.
TransferResult transfer_multi(const RgbImage& source, std::span<const RgbImage> references,
                              FeatureProvider& source_features,
                              std::span<const FeaturePyramid> reference_pyramids,
                              const PipelineConfig& cfg);

// The gray source is promoted to Lab (L = 100 * gray, zero chroma); its
// features are taken from the gray replicated into three sRGB channels.
TransferResult colorize(const GrayImage& source, std::span<const RgbImage> references,
                        FeatureProvider& source_features,
                        std::span<const FeaturePyramid> reference_pyramids,
                        const PipelineConfig& cfg);

// Joint HSV histogram with bins^3 cells, L1-normalized.
std::vector<float> hsv_histogram(const RgbImage& image, int bins = 8);

// Index of the histogram with the smallest summed L2 distance to all others,
// followed by the `count` nearest to it (itself first), by distance.
std::vector<std::size_t> select_representative_subset(
    std::span<const std::vector<float>> histograms, int count);

// Scans a folder (sorted by file name), skipping undecodable files with a
// warning, and returns the selected subset. Throws std::runtime_error when
// fewer than `count` images decode.
std::vector<std::filesystem::path> select_references(const std::filesystem::path& candidate_dir,
                                                     int count = 5,
                                                     std::ostream* warnings = nullptr);

}  // namespace chromaflow
