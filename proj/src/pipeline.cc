#include "chromaflow/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "chromaflow/error.h"
#include "chromaflow/image_io.h"

namespace chromaflow {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seeds depend on level and stream only, so duplicate references see
// identical random sequences.
std::uint64_t derive_seed(std::uint64_t seed, int level, int stream) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(level) << 8) ^
                    static_cast<std::uint64_t>(stream));
}

constexpr int kStreamForward = 1;
constexpr int kStreamBackward = 2;
constexpr int kStreamClusters = 3;

std::string level_stage(int level, const char* what) {
  return "level " + std::to_string(level) + " " + what;
}

template <typename F>
auto in_stage(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// A level map may come from an exporter that floors the input to a multiple
// of 16, so accept any size produced by a source between dim-15 and dim.
void check_level_dims(const FeatureMap& f, int width, int height, int level, const char* who) {
  auto ok = [level](int d, int src) {
    return d >= level_extent(std::max(1, src - 15), level) && d <= level_extent(src, level);
  };
  if (f.level != level || !ok(f.width, width) || !ok(f.height, height)) {
    std::ostringstream os;
    os << who << " features for level " << level << " are " << f.width << "x" << f.height
       << " (level tag " << f.level << "), incompatible with a " << width << "x" << height
       << " image";
    throw DimensionError(os.str());
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

struct Reference {
  LabImage lab;
  const FeaturePyramid* pyramid;
};

TransferResult run_levels(const LabImage& source_lab, const RgbImage& feature_source,
                          const std::vector<Reference>& refs, FeatureProvider& provider,
                          const PipelineConfig& cfg, bool merge_path) {
  if (refs.empty()) throw std::invalid_argument("at least one reference is required");
  if (cfg.levels != kNumLevels) throw std::invalid_argument("pipeline runs exactly 5 levels");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (int level = 1; level <= kNumLevels; ++level) {
      if (!refs[i].pyramid->has_level(level)) {
        throw StageError("reference features", "reference " + std::to_string(i) +
                                                   " pyramid lacks level " + std::to_string(level));
      }
      check_level_dims(refs[i].pyramid->level(level), refs[i].lab.width, refs[i].lab.height,
                       level, "reference");
    }
  }

  TransferResult result;
  RgbImage current = feature_source;  // S~^(L+1) as fed to the feature backend
  LabImage transferred;
  FeatureMap coarse;  // level-5 source features, used for clustering

  for (int level = kNumLevels; level >= 1; --level) {
    const FeatureMap fs = in_stage(level_stage(level, "source features"), [&] {
      FeatureMap f = provider.extract(current, level);
      check_level_dims(f, source_lab.width, source_lab.height, level, "source");
      return f;
    });
    if (level == kNumLevels) coarse = fs;
    const int lw = fs.width, lh = fs.height;

    LevelArtifacts art;
    art.level = level;
    std::vector<Guidance> candidates;
    candidates.reserve(refs.size());
    for (const Reference& ref : refs) {
      const FeatureMap& fr = ref.pyramid->level(level);
      in_stage(level_stage(level, "matching"), [&] {
        PatchMatchOptions fwd_opts{cfg.patchmatch_iters, cfg.transfer.patch,
                                   derive_seed(cfg.seed, level, kStreamForward)};
        PatchMatchOptions bwd_opts{cfg.patchmatch_iters, cfg.transfer.patch,
                                   derive_seed(cfg.seed, level, kStreamBackward)};
        NnField fwd = patchmatch(fs, fr, fwd_opts);
        NnField bwd = patchmatch(fr, fs, bwd_opts);
        const LabImage ref_level = resize_bilinear(ref.lab, fr.width, fr.height);
        Guidance g = bds_vote(fwd, bwd, ref_level, fr, cfg.bds_w, cfg.transfer.patch);
        g.raw_error = raw_matching_error(fs, g.features);
        g.error = normalize_error(g.raw_error);
        candidates.push_back(std::move(g));
        if (cfg.keep_artifacts) {
          art.forward.push_back(std::move(fwd));
          art.backward.push_back(std::move(bwd));
        }
        return 0;
      });
    }

    Guidance guide;
    if (merge_path) {
      guide = in_stage(level_stage(level, "reference merge"), [&] {
        std::vector<Plane> errors;
        std::vector<LabImage> images;
        std::vector<FeatureMap> feats;
        for (const Guidance& g : candidates) {
          errors.push_back(g.raw_error);
          images.push_back(g.image);
          feats.push_back(g.features);
        }
        const MergeInputs in{errors, images, feats, level};
        LabelMap labels = solve_labels(in, cfg.merge);
        Guidance merged = merge_guidance(labels, candidates);
        merged.error = normalize_error(merged.raw_error);
        if (cfg.keep_artifacts) art.labels = std::move(labels);
        return merged;
      });
    } else {
      guide = std::move(candidates.front());
    }

    transferred = in_stage(level_stage(level, "local transfer"), [&] {
      const LabImage src_level = resize_bilinear(source_lab, lw, lh);
      const TransferField init =
          init_transfer(src_level, guide.image, cfg.transfer.patch, cfg.transfer.eps_std);
      const auto clusters = cluster_semantic(coarse, lw, lh, cfg.transfer.k_clusters,
                                             derive_seed(cfg.seed, 0, kStreamClusters));
      const NonlocalGraph graph = build_nonlocal(src_level, clusters, cfg.transfer.k_neighbors);
      const TransferField field =
          solve_transfer(src_level, guide, init, graph, level, cfg.transfer);
      const TransferField up =
          upsample_coefficients(field, source_lab, cfg.transfer.wls_upsample_lambda,
                                cfg.transfer.alpha, cfg.transfer.eps_w);
      return apply_transfer(up, source_lab);
    });
    current = lab_to_srgb(transferred);

    if (cfg.keep_artifacts) {
      art.guidance = std::move(guide.image);
      art.intermediate = transferred;
      result.artifacts.levels.push_back(std::move(art));
    }
  }
  result.image = std::move(current);
  return result;
}

std::vector<Reference> make_refs(std::span<const RgbImage> images,
                                 std::span<const FeaturePyramid> pyramids) {
  if (images.size() != pyramids.size()) {
    throw std::invalid_argument("one feature pyramid is required per reference");
  }
  std::vector<Reference> refs;
  for (std::size_t i = 0; i < images.size(); ++i) refs.push_back({srgb_to_lab(images[i]), &pyramids[i]});
  return refs;
}

}  // namespace

FeatureMap ToyFeatureProvider::extract(const RgbImage& image, int level) {
  return toy_extract_level(srgb_to_lab(image), level);
}

CheckpointFeatureProvider::CheckpointFeatureProvider(std::filesystem::path workdir,
                                                     std::string exporter_cmd,
                                                     std::optional<FeaturePyramid> source_pyramid)
    : workdir_(std::move(workdir)),
      exporter_cmd_(std::move(exporter_cmd)),
      source_pyramid_(std::move(source_pyramid)) {}

FeatureMap CheckpointFeatureProvider::extract(const RgbImage& image, int level) {
  if (level == kNumLevels && source_pyramid_ && source_pyramid_->has_level(level)) {
    return source_pyramid_->level(level);
  }
  if (exporter_cmd_.empty()) {
    throw IoError("missing feature file for level " + std::to_string(level) +
                  ": the file backend needs an exporter command for intermediate levels");
  }
  std::filesystem::create_directories(workdir_);
  const auto stem = "intermediate_L" + std::to_string(level);
  const auto png = workdir_ / (stem + ".png");
  const auto fpyr = workdir_ / (stem + ".fpyr");
  write_png(image, png);
  const FeaturePyramid p = run_exporter(exporter_cmd_, png, fpyr, level);
  if (!p.has_level(level)) {
    throw IoError("missing feature file for level " + std::to_string(level) + ": '" +
                  fpyr.string() + "' does not contain it");
  }
  return p.level(level);
}

FeaturePyramid run_exporter(const std::string& exporter_cmd, const std::filesystem::path& image,
                            const std::filesystem::path& output, std::optional<int> level) {
  std::error_code ec;
  std::filesystem::remove(output, ec);
  std::string cmd = exporter_cmd + " " + shell_quote(image.string()) + " " +
                    shell_quote(output.string());
  if (level) cmd += " --level " + std::to_string(*level);
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    throw IoError("exporter failed (status " + std::to_string(status) + "): " + cmd);
  }
  if (!std::filesystem::exists(output)) {
    throw IoError("missing feature file '" + output.string() + "' after running exporter");
  }
  return read_pyramid(output);
}

FeaturePyramid toy_pyramid(const RgbImage& image) { return toy_extract(srgb_to_lab(image)); }

TransferResult transfer_single(const RgbImage& source, const RgbImage& reference,
                               FeatureProvider& source_features,
                               const FeaturePyramid& reference_pyramid,
                               const PipelineConfig& cfg) {
  const std::vector<Reference> refs{{srgb_to_lab(reference), &reference_pyramid}};
  return run_levels(srgb_to_lab(source), source, refs, source_features, cfg, false);
}

TransferResult transfer_multi(const RgbImage& source, std::span<const RgbImage> references,
                              FeatureProvider& source_features,
                              std::span<const FeaturePyramid> reference_pyramids,
                              const PipelineConfig& cfg) {
  return run_levels(srgb_to_lab(source), source, make_refs(references, reference_pyramids),
                    source_features, cfg, true);
}

TransferResult colorize(const GrayImage& source, std::span<const RgbImage> references,
                        FeatureProvider& source_features,
                        std::span<const FeaturePyramid> reference_pyramids,
                        const PipelineConfig& cfg) {
  return run_levels(gray_to_lab(source), gray_to_srgb(source),
                    make_refs(references, reference_pyramids), source_features, cfg,
                    references.size() > 1);
}

std::vector<float> hsv_histogram(const RgbImage& image, int bins) {
  if (bins < 1) throw std::invalid_argument("hsv_histogram: bins must be >= 1");
  std::vector<float> hist(static_cast<std::size_t>(bins) * bins * bins, 0.0f);
  auto bin_of = [bins](double v) { return std::clamp(static_cast<int>(v * bins), 0, bins - 1); };
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t i = 0; i < n; ++i) {
    const float* p = &image.data[3 * i];
    const double mx = std::max({p[0], p[1], p[2]});
    const double mn = std::min({p[0], p[1], p[2]});
    const double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
      if (mx == p[0]) {
        hue = std::fmod((p[1] - p[2]) / delta, 6.0);
      } else if (mx == p[1]) {
        hue = (p[2] - p[0]) / delta + 2.0;
      } else {
        hue = (p[0] - p[1]) / delta + 4.0;
      }
      if (hue < 0.0) hue += 6.0;
    }
    const double sat = mx > 0.0 ? delta / mx : 0.0;
    const int h = bin_of(hue / 6.0), s = bin_of(sat), v = bin_of(mx);
    hist[(static_cast<std::size_t>(h) * bins + s) * bins + v] += 1.0f;
  }
  if (n > 0) {
    for (float& v : hist) v /= static_cast<float>(n);
  }
  return hist;
}

std::vector<std::size_t> select_representative_subset(
    std::span<const std::vector<float>> histograms, int count) {
  const std::size_t n = histograms.size();
  if (count < 1 || n < static_cast<std::size_t>(count)) {
    throw std::invalid_argument("too few candidates: have " + std::to_string(n) + ", need " +
                                std::to_string(count));
  }
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < histograms[i].size(); ++k) {
        const double d = static_cast<double>(histograms[i][k]) - histograms[j][k];
        acc += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(acc);
    }
  }
  std::size_t rep = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double total = std::accumulate(&dist[i * n], &dist[i * n] + n, 0.0);
    if (total < best) {
      best = total;
      rep = i;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (a == rep || b == rep) return a == rep && b != rep;
    return dist[rep * n + a] < dist[rep * n + b];
  });
  order.resize(count);
  return order;
}

std::vector<std::filesystem::path> select_references(const std::filesystem::path& candidate_dir,
                                                     int count, std::ostream* warnings) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(candidate_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::filesystem::path> decoded;
  std::vector<std::vector<float>> hists;
  for (const auto& f : files) {
    try {
      hists.push_back(hsv_histogram(read_image(f)));
      decoded.push_back(f);
    } catch (const IoError& e) {
      if (warnings) *warnings << "warning: skipping '" << f.string() << "': " << e.what() << "\n";
    }
  }
  if (decoded.size() < static_cast<std::size_t>(count)) {
    throw std::runtime_error("too few candidates in '" + candidate_dir.string() + "': " +
                             std::to_string(decoded.size()) + " decodable, need " +
                             std::to_string(count));
  }
  std::vector<std::filesystem::path> out;
  for (std::size_t i : select_representative_subset(hists, count)) out.push_back(decoded[i]);
  return out;
}

}  // namespace chromaflow
