#include "chromaflow/nnf.h"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "chromaflow/error.h"

namespace chromaflow {

namespace {

bool inside(int x, int y, int w, int h) { return x >= 0 && y >= 0 && x < w && y < h; }

// Patch SSD over pre-normalized maps. Shared by patch_distance and the
// optimizers so stored distances are reproducible bit for bit.
class PatchScorer {
 public:
  PatchScorer(const FeatureMap& src_norm, const FeatureMap& tgt_norm, int patch)
      : src_(src_norm), tgt_(tgt_norm), radius_(patch / 2), area_(patch * patch) {}

  // Returns the rescaled distance, or any value > bound once the partial sum
  // already exceeds it.
  float operator()(Coord p, Coord q,
                   float bound = std::numeric_limits<float>::infinity()) const {
    const int x0 = std::max({-radius_, -p.x, -q.x});
    const int x1 = std::min({radius_, src_.width - 1 - p.x, tgt_.width - 1 - q.x});
    const int y0 = std::max({-radius_, -p.y, -q.y});
    const int y1 = std::min({radius_, src_.height - 1 - p.y, tgt_.height - 1 - q.y});
    const int valid = (x1 - x0 + 1) * (y1 - y0 + 1);
    const double scale = static_cast<double>(area_) / valid;
    const double limit = static_cast<double>(bound) / scale;
    const int channels = src_.channels;

    double total = 0.0;
    for (int dy = y0; dy <= y1; ++dy) {
      for (int dx = x0; dx <= x1; ++dx) {
        const float* a = src_.at(p.x + dx, p.y + dy);
        const float* b = tgt_.at(q.x + dx, q.y + dy);
        float acc = 0.0f;
        for (int c = 0; c < channels; ++c) {
          const float d = a[c] - b[c];
          acc += d * d;
        }
        total += acc;
      }
      if (total > limit) return static_cast<float>(total * scale);
    }
    return static_cast<float>(total * scale);
  }

 private:
  const FeatureMap& src_;
  const FeatureMap& tgt_;
  int radius_;
  int area_;
};

void check_patch(int patch) {
  if (patch < 1 || patch % 2 == 0) throw std::invalid_argument("patch size must be odd and >= 1");
}

void check_channels(const FeatureMap& a, const FeatureMap& b, const char* who) {
  if (a.channels != b.channels) {
    throw DimensionError(std::string(who) + ": channel count mismatch (" +
                         std::to_string(a.channels) + " vs " + std::to_string(b.channels) + ")");
  }
}

}  // namespace

NnField::NnField(int w, int h, int tw, int th)
    : width(w),
      height(h),
      target_width(tw),
      target_height(th),
      map(static_cast<std::size_t>(w) * h),
      dist(static_cast<std::size_t>(w) * h, 0.0f) {}

float patch_distance(const FeatureMap& src, const FeatureMap& tgt, Coord p, Coord q, int patch) {
  check_patch(patch);
  check_channels(src, tgt, "patch_distance");
  if (!inside(p.x, p.y, src.width, src.height) || !inside(q.x, q.y, tgt.width, tgt.height)) {
    throw std::out_of_range("patch_distance: center outside map");
  }
  const FeatureMap sn = channel_normalize(src);
  const FeatureMap tn = channel_normalize(tgt);
  return PatchScorer(sn, tn, patch)(p, q);
}

NnField patchmatch(const FeatureMap& src, const FeatureMap& tgt, const PatchMatchOptions& opts) {
  check_patch(opts.patch);
  check_channels(src, tgt, "patchmatch");
  if (opts.iterations < 1) throw std::invalid_argument("patchmatch: iterations must be >= 1");

  const FeatureMap sn = channel_normalize(src);
  const FeatureMap tn = channel_normalize(tgt);
  const PatchScorer score(sn, tn, opts.patch);
  const int sw = src.width, sh = src.height, tw = tgt.width, th = tgt.height;

  NnField f(sw, sh, tw, th);
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> rand_x(0, tw - 1), rand_y(0, th - 1);
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      Coord& m = f.at(x, y);
      m = {rand_x(rng), rand_y(rng)};
      f.dist[static_cast<std::size_t>(y) * sw + x] = score({x, y}, m);
    }
  }

  const int max_radius = std::max(tw, th);
  for (int it = 0; it < opts.iterations; ++it) {
    const bool forward = it % 2 == 0;
    const int step = forward ? -1 : 1;  // direction of already-visited neighbors
    for (int yi = 0; yi < sh; ++yi) {
      const int y = forward ? yi : sh - 1 - yi;
      for (int xi = 0; xi < sw; ++xi) {
        const int x = forward ? xi : sw - 1 - xi;
        const std::size_t idx = static_cast<std::size_t>(y) * sw + x;
        Coord best = f.map[idx];
        float best_d = f.dist[idx];
        auto consider = [&](Coord c) {
          if (c == best) return;
          const float d = score({x, y}, c, best_d);
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        };

        if (x + step >= 0 && x + step < sw) {
          const Coord n = f.at(x + step, y);
          const Coord c{n.x - step, n.y};
          if (inside(c.x, c.y, tw, th)) consider(c);
        }
        if (y + step >= 0 && y + step < sh) {
          const Coord n = f.at(x, y + step);
          const Coord c{n.x, n.y - step};
          if (inside(c.x, c.y, tw, th)) consider(c);
        }

        // Uniform over the search window clipped to the target.
        for (int r = max_radius; r >= 1; r /= 2) {
          std::uniform_int_distribution<int> ux(std::max(0, best.x - r), std::min(tw - 1, best.x + r));
          std::uniform_int_distribution<int> uy(std::max(0, best.y - r), std::min(th - 1, best.y + r));
          const int cx = ux(rng);
          consider({cx, uy(rng)});
        }

        f.map[idx] = best;
        f.dist[idx] = best_d;
      }
    }
  }
  return f;
}

NnField exhaustive_nnf(const FeatureMap& src, const FeatureMap& tgt, int patch) {
  check_patch(patch);
  check_channels(src, tgt, "exhaustive_nnf");
  const FeatureMap sn = channel_normalize(src);
  const FeatureMap tn = channel_normalize(tgt);
  const PatchScorer score(sn, tn, patch);
  NnField f(src.width, src.height, tgt.width, tgt.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      float best_d = std::numeric_limits<float>::infinity();
      Coord best;
      for (int qy = 0; qy < tgt.height; ++qy) {
        for (int qx = 0; qx < tgt.width; ++qx) {
          const float d = score({x, y}, {qx, qy}, best_d);
          if (d < best_d) {
            best_d = d;
            best = {qx, qy};
          }
        }
      }
      f.at(x, y) = best;
      f.dist[static_cast<std::size_t>(y) * src.width + x] = best_d;
    }
  }
  return f;
}

Guidance bds_vote(const NnField& fwd, const NnField& bwd, const LabImage& tgt_img,
                  const FeatureMap& tgt_feat, float completeness_weight, int patch) {
  check_patch(patch);
  const int sw = fwd.width, sh = fwd.height;
  const int tw = tgt_img.width, th = tgt_img.height;
  if (fwd.target_width != tw || fwd.target_height != th || bwd.width != tw ||
      bwd.height != th || bwd.target_width != sw || bwd.target_height != sh ||
      tgt_feat.width != tw || tgt_feat.height != th) {
    throw DimensionError("bds_vote: fields and target data disagree in size");
  }
  if (completeness_weight < 0.0f) throw std::invalid_argument("bds_vote: negative completeness weight");

  const int channels = tgt_feat.channels;
  const std::size_t ns = static_cast<std::size_t>(sw) * sh;
  std::vector<double> color(3 * ns, 0.0), feat(ns * channels, 0.0), weight(ns, 0.0);
  const int r = patch / 2;

  auto vote = [&](int sx, int sy, int tx, int ty, double w) {
    const std::size_t s = static_cast<std::size_t>(sy) * sw + sx;
    for (int c = 0; c < 3; ++c) color[3 * s + c] += w * tgt_img[c].at(tx, ty);
    const float* f = tgt_feat.at(tx, ty);
    double* acc = &feat[s * channels];
    for (int c = 0; c < channels; ++c) acc[c] += w * f[c];
    weight[s] += w;
  };

  // Coherence: every source patch pulls its matched target patch.
  for (int py = 0; py < sh; ++py) {
    for (int px = 0; px < sw; ++px) {
      const Coord q = fwd.at(px, py);
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (inside(px + dx, py + dy, sw, sh) && inside(q.x + dx, q.y + dy, tw, th)) {
            vote(px + dx, py + dy, q.x + dx, q.y + dy, 1.0);
          }
        }
      }
    }
  }

  // Completeness: every target patch pushes itself onto its source match.
  const double wc = completeness_weight * static_cast<double>(ns) /
                    (static_cast<double>(tw) * th);
  if (wc > 0.0) {
    for (int qy = 0; qy < th; ++qy) {
      for (int qx = 0; qx < tw; ++qx) {
        const Coord p = bwd.at(qx, qy);
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            if (inside(p.x + dx, p.y + dy, sw, sh) && inside(qx + dx, qy + dy, tw, th)) {
              vote(p.x + dx, p.y + dy, qx + dx, qy + dy, wc);
            }
          }
        }
      }
    }
  }

  Guidance g;
  g.image = LabImage(sw, sh);
  g.features = FeatureMap(tgt_feat.level, sw, sh, channels);
  for (std::size_t s = 0; s < ns; ++s) {
    const double inv = 1.0 / weight[s];  // the d = 0 coherence vote is always present
    for (int c = 0; c < 3; ++c) g.image[c].data[s] = static_cast<float>(color[3 * s + c] * inv);
    for (int c = 0; c < channels; ++c) {
      g.features.data[s * channels + c] = static_cast<float>(feat[s * channels + c] * inv);
    }
  }
  return g;
}

Plane raw_matching_error(const FeatureMap& a, const FeatureMap& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw DimensionError("matching_error: feature maps differ in shape");
  }
  const FeatureMap an = channel_normalize(a);
  const FeatureMap bn = channel_normalize(b);
  Plane out(a.width, a.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float* u = &an.data[i * a.channels];
    const float* v = &bn.data[i * a.channels];
    double acc = 0.0;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(u[c]) - v[c];
      acc += d * d;
    }
    out.data[i] = static_cast<float>(acc);
  }
  return out;
}

GrayImage normalize_error(const Plane& raw) {
  GrayImage out(raw.width, raw.height);
  if (raw.data.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.data.begin(), raw.data.end());
  const float range = *hi - *lo;
  if (!(range > 0.0f)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.data[i] = std::clamp((raw.data[i] - *lo) / range, 0.0f, 1.0f);
  }
  return out;
}

GrayImage matching_error(const FeatureMap& src, const FeatureMap& guide) {
  return normalize_error(raw_matching_error(src, guide));
}

}  // namespace chromaflow
