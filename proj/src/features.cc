#include "chromaflow/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>

#include "chromaflow/error.h"

namespace chromaflow {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'Y', 'R'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  }
  return v;
}

std::string level_name(int level) { return "level " + std::to_string(level); }

// Checks dims against the finest level using ceil-halving. Returns an empty
// string on success, else a description of the first violation.
std::string halving_violation(const FeaturePyramid& p) {
  const FeatureMap& finest = p.levels.back();
  for (const FeatureMap& m : p.levels) {
    const int shift = m.level - finest.level;
    const int ew = (finest.width + (1 << shift) - 1) >> shift;
    const int eh = (finest.height + (1 << shift) - 1) >> shift;
    if (m.width != ew || m.height != eh) {
      std::ostringstream os;
      os << level_name(m.level) << " is " << m.width << "x" << m.height << ", expected " << ew
         << "x" << eh << " from " << level_name(finest.level);
      return os.str();
    }
  }
  return {};
}

void set_source_dims(FeaturePyramid& p) {
  const FeatureMap& finest = p.levels.back();
  p.source_width = finest.width << (finest.level - 1);
  p.source_height = finest.height << (finest.level - 1);
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

// Gaussian blur evaluated only at the subsampled grid positions.
Plane blur_subsample(const Plane& src, const std::vector<float>& kernel, int stride) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int ow = (src.width + stride - 1) / stride;
  const int oh = (src.height + stride - 1) / stride;
  Plane rows(ow, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int ox = 0; ox < ow; ++ox) {
      const int cx = ox * stride;
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int x = std::clamp(cx + k, 0, src.width - 1);
        acc += kernel[k + radius] * src.at(x, y);
      }
      rows.at(ox, y) = static_cast<float>(acc);
    }
  }
  Plane out(ow, oh);
  for (int oy = 0; oy < oh; ++oy) {
    const int cy = oy * stride;
    for (int ox = 0; ox < ow; ++ox) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int y = std::clamp(cy + k, 0, src.height - 1);
        acc += kernel[k + radius] * rows.at(ox, y);
      }
      out.at(ox, oy) = static_cast<float>(acc);
    }
  }
  return out;
}

// Channel scales of the toy features. Chroma is damped and structure boosted
// so that a gray image and its color original land close together after
// normalization.
constexpr float kToyChromaScale = 0.1f;
constexpr float kToyGradientScale = 16.0f;

}  // namespace

FeatureMap::FeatureMap(int level, int w, int h, int c, float fill)
    : level(level),
      width(w),
      height(h),
      channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

int level_extent(int source_extent, int level) {
  if (level < 1) return source_extent;
  const int s = 1 << (level - 1);
  return (source_extent + s - 1) / s;
}

bool FeaturePyramid::has_level(int l) const {
  return std::any_of(levels.begin(), levels.end(), [l](const FeatureMap& m) { return m.level == l; });
}

const FeatureMap& FeaturePyramid::level(int l) const {
  for (const FeatureMap& m : levels) {
    if (m.level == l) return m;
  }
  throw std::out_of_range("feature pyramid has no " + level_name(l));
}

void validate_pyramid(const FeaturePyramid& p) {
  if (p.levels.empty() || p.levels.size() > kNumLevels) {
    throw std::invalid_argument("pyramid must hold 1..5 levels");
  }
  int prev = kNumLevels + 1;
  for (const FeatureMap& m : p.levels) {
    if (m.level < 1 || m.level >= prev) {
      throw std::invalid_argument("pyramid levels must be distinct, descending, within 1..5");
    }
    prev = m.level;
    if (m.width < 1 || m.height < 1 || m.channels < 1) {
      throw std::invalid_argument(level_name(m.level) + " has an empty dimension or no channels");
    }
    if (m.data.size() != m.pixel_count() * m.channels) {
      throw std::invalid_argument(level_name(m.level) + " data size does not match its shape");
    }
    if (!std::all_of(m.data.begin(), m.data.end(), [](float v) { return std::isfinite(v); })) {
      throw std::invalid_argument(level_name(m.level) + " contains non-finite values");
    }
  }
  if (auto msg = halving_violation(p); !msg.empty()) throw std::invalid_argument(msg);
}

FeaturePyramid read_pyramid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  using Kind = FormatError::Kind;

  if (buf.size() < 12) {
    if (buf.size() < 4 || !std::equal(kMagic, kMagic + 4, buf.begin())) {
      throw FormatError(Kind::kMalformedHeader, 0, "missing FPYR magic");
    }
    throw FormatError(Kind::kTruncatedPayload, buf.size(), "file ends inside the header");
  }
  if (!std::equal(kMagic, kMagic + 4, buf.begin())) {
    throw FormatError(Kind::kMalformedHeader, 0, "missing FPYR magic");
  }
  if (const auto v = get_u32(buf, 4); v != kVersion) {
    throw FormatError(Kind::kMalformedHeader, 4, "unsupported version " + std::to_string(v));
  }
  const std::uint32_t count = get_u32(buf, 8);
  if (count < 1 || count > kNumLevels) {
    throw FormatError(Kind::kMalformedHeader, 8, "level count " + std::to_string(count) + " outside 1..5");
  }

  FeaturePyramid p;
  std::size_t off = 12;
  int prev = kNumLevels + 1;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "level record " + std::to_string(i);
    if (off + 16 > buf.size()) {
      throw FormatError(Kind::kTruncatedPayload, buf.size(), "file ends inside the header of " + where);
    }
    const std::uint32_t level = get_u32(buf, off);
    if (level < 1 || static_cast<int>(level) >= prev) {
      throw FormatError(Kind::kMalformedHeader, off,
                        where + " has level " + std::to_string(level) + " (must descend within 1..5)");
    }
    prev = static_cast<int>(level);
    const std::uint32_t h = get_u32(buf, off + 4);
    const std::uint32_t w = get_u32(buf, off + 8);
    const std::uint32_t c = get_u32(buf, off + 12);
    if (w == 0 || h == 0 || c == 0 || w > (1u << 20) || h > (1u << 20) || c > (1u << 16)) {
      throw FormatError(Kind::kDimensionMismatch, off + 4,
                        level_name(level) + " has invalid shape " + std::to_string(h) + "x" +
                            std::to_string(w) + "x" + std::to_string(c));
    }
    off += 16;
    const std::uint64_t n = static_cast<std::uint64_t>(w) * h * c;
    if (off + 4 * n > buf.size()) {
      throw FormatError(Kind::kTruncatedPayload, buf.size(),
                        "payload of " + level_name(level) + " truncated: expected " +
                            std::to_string(4 * n) + " bytes at offset " + std::to_string(off));
    }
    FeatureMap m(static_cast<int>(level), static_cast<int>(w), static_cast<int>(h),
                 static_cast<int>(c));
    for (std::uint64_t k = 0; k < n; ++k) {
      const float v = std::bit_cast<float>(get_u32(buf, off + 4 * k));
      if (!std::isfinite(v)) {
        throw FormatError(Kind::kInvalidValue, off + 4 * k,
                          "non-finite value in " + level_name(level));
      }
      m.data[k] = v;
    }
    off += 4 * n;
    p.levels.push_back(std::move(m));
  }
  if (off != buf.size()) {
    throw FormatError(Kind::kDimensionMismatch, off,
                      std::to_string(buf.size() - off) + " trailing bytes after the last level");
  }
  if (auto msg = halving_violation(p); !msg.empty()) {
    throw FormatError(Kind::kDimensionMismatch, 12, msg);
  }
  set_source_dims(p);
  return p;
}

void write_pyramid(const FeaturePyramid& p, const std::filesystem::path& path) {
  validate_pyramid(p);
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(p.levels.size()));
  for (const FeatureMap& m : p.levels) {
    put_u32(out, static_cast<std::uint32_t>(m.level));
    put_u32(out, static_cast<std::uint32_t>(m.height));
    put_u32(out, static_cast<std::uint32_t>(m.width));
    put_u32(out, static_cast<std::uint32_t>(m.channels));
    for (float v : m.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

FeatureMap toy_extract_level(const LabImage& img, int level) {
  if (level < 1 || level > kNumLevels) throw std::invalid_argument("toy_extract_level: level outside 1..5");
  const int stride = 1 << (level - 1);
  const auto kernel = gaussian_kernel(static_cast<double>(stride));
  const auto unit = to_unit_planes(img);

  std::array<Plane, 3> smooth;
  for (int c = 0; c < 3; ++c) smooth[c] = blur_subsample(unit[c], kernel, stride);
  const int w = smooth[0].width, h = smooth[0].height;

  FeatureMap out(level, w, h, 4);
  const Plane& lum = smooth[0];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float gx = 0.5f * (lum.at(std::min(x + 1, w - 1), y) - lum.at(std::max(x - 1, 0), y));
      const float gy = 0.5f * (lum.at(x, std::min(y + 1, h - 1)) - lum.at(x, std::max(y - 1, 0)));
      float* f = out.at(x, y);
      f[0] = std::max(lum.at(x, y), 0.0f);
      for (int c = 1; c < 3; ++c) f[c] = kToyChromaScale * std::max(smooth[c].at(x, y), 0.0f);
      f[3] = kToyGradientScale * std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

FeaturePyramid toy_extract(const LabImage& img) {
  FeaturePyramid p;
  p.source_width = img.width;
  p.source_height = img.height;
  for (int level = kNumLevels; level >= 1; --level) p.levels.push_back(toy_extract_level(img, level));
  return p;
}

FeatureMap channel_normalize(const FeatureMap& f) {
  FeatureMap out = f;
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    float* v = &out.data[i * f.channels];
    double sq = 0.0;
    for (int c = 0; c < f.channels; ++c) sq += static_cast<double>(v[c]) * v[c];
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (int c = 0; c < f.channels; ++c) v[c] = static_cast<float>(v[c] * inv);
  }
  return out;
}

}  // namespace chromaflow
