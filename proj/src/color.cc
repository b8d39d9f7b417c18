#include "chromaflow/color.h"

#include <algorithm>
#include <cmath>

#include "chromaflow/error.h"

namespace chromaflow {

namespace {

// D65 reference white and the sRGB primaries (IEC 61966-2-1).
constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.0;
constexpr double kWhiteZ = 1.08883;

constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

constexpr double kXyzToRgb[3][3] = {
    {3.2404542, -1.5371385, -0.4985314},
    {-0.9692660, 1.8760108, 0.0415560},
    {0.0556434, -0.2040259, 1.0572252},
};

constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t)
                                      : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

}  // namespace

Plane::Plane(int w, int h, float fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

RgbImage::RgbImage(int w, int h, float fill)
    : width(w), height(h), data(3 * static_cast<std::size_t>(w) * h, fill) {}

LabImage::LabImage(int w, int h)
    : width(w), height(h), planes{Plane(w, h), Plane(w, h), Plane(w, h)} {}

float lab_to_unit(int channel, float value) {
  return channel == 0 ? value / 100.0f : (value + 128.0f) / 255.0f;
}

float unit_to_lab(int channel, float unit) {
  return channel == 0 ? unit * 100.0f : unit * 255.0f - 128.0f;
}

std::array<Plane, 3> to_unit_planes(const LabImage& img) {
  std::array<Plane, 3> out;
  for (int c = 0; c < 3; ++c) {
    out[c] = Plane(img.width, img.height);
    const auto& src = img[c].data;
    for (std::size_t i = 0; i < src.size(); ++i) out[c].data[i] = lab_to_unit(c, src[i]);
  }
  return out;
}

LabImage from_unit_planes(const std::array<Plane, 3>& unit) {
  LabImage out(unit[0].width, unit[0].height);
  for (int c = 0; c < 3; ++c) {
    if (!unit[c].same_size(unit[0])) throw DimensionError("from_unit_planes: plane size mismatch");
    for (std::size_t i = 0; i < unit[c].size(); ++i) {
      out[c].data[i] = unit_to_lab(c, std::clamp(unit[c].data[i], 0.0f, 1.0f));
    }
  }
  return out;
}

std::array<float, 3> srgb_to_lab(float r, float g, float b) {
  const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
  }
  const double fx = lab_f(xyz[0] / kWhiteX);
  const double fy = lab_f(xyz[1] / kWhiteY);
  const double fz = lab_f(xyz[2] / kWhiteZ);
  // Clamp guards the tiny negative L the matrix rounding yields at black.
  return {static_cast<float>(std::clamp(116.0 * fy - 16.0, 0.0, 100.0)),
          static_cast<float>(500.0 * (fx - fy)), static_cast<float>(200.0 * (fy - fz))};
}

std::array<float, 3> lab_to_srgb(float l, float a, float b) {
  const double fy = (l + 16.0) / 116.0;
  const double fx = fy + a / 500.0;
  const double fz = fy - b / 200.0;
  const double xyz[3] = {kWhiteX * lab_f_inv(fx), kWhiteY * lab_f_inv(fy),
                         kWhiteZ * lab_f_inv(fz)};
  std::array<float, 3> rgb;
  for (int i = 0; i < 3; ++i) {
    const double lin =
        kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
    rgb[i] = static_cast<float>(std::clamp(linear_to_srgb(std::max(lin, 0.0)), 0.0, 1.0));
  }
  return rgb;
}

LabImage srgb_to_lab(const RgbImage& img) {
  LabImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float* p = img.pixel(x, y);
      const auto lab = srgb_to_lab(p[0], p[1], p[2]);
      for (int c = 0; c < 3; ++c) out[c].at(x, y) = lab[c];
    }
  }
  return out;
}

RgbImage lab_to_srgb(const LabImage& img) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto rgb = lab_to_srgb(img[0].at(x, y), img[1].at(x, y), img[2].at(x, y));
      std::copy(rgb.begin(), rgb.end(), out.pixel(x, y));
    }
  }
  return out;
}

Plane resize_bilinear(const Plane& src, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1) throw DimensionError("resize_bilinear: target size < 1");
  if (new_width == src.width && new_height == src.height) return src;

  struct Tap {
    int i0, i1;
    float w1;
  };
  auto taps = [](int src_n, int dst_n) {
    std::vector<Tap> t(dst_n);
    const double scale = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(src_n - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, src_n - 1);
      t[i] = {i0, i1, static_cast<float>(s - i0)};
    }
    return t;
  };
  const auto tx = taps(src.width, new_width);
  const auto ty = taps(src.height, new_height);

  // Horizontal pass, then vertical.
  Plane rows(new_width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < new_width; ++x) {
      const Tap& t = tx[x];
      const float v0 = src.at(t.i0, y), v1 = src.at(t.i1, y);
      rows.at(x, y) = t.w1 == 0.0f ? v0 : v0 + t.w1 * (v1 - v0);
    }
  }
  Plane out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const Tap& t = ty[y];
    for (int x = 0; x < new_width; ++x) {
      const float v0 = rows.at(x, t.i0), v1 = rows.at(x, t.i1);
      out.at(x, y) = t.w1 == 0.0f ? v0 : v0 + t.w1 * (v1 - v0);
    }
  }
  return out;
}

LabImage resize_bilinear(const LabImage& img, int new_width, int new_height) {
  LabImage out;
  out.width = new_width;
  out.height = new_height;
  for (int c = 0; c < 3; ++c) out[c] = resize_bilinear(img[c], new_width, new_height);
  return out;
}

Plane unit_luminance(const LabImage& img) {
  Plane out(img.width, img.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = img.l().data[i] / 100.0f;
  return out;
}

LabImage gray_to_lab(const GrayImage& gray) {
  LabImage out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    out.l().data[i] = 100.0f * std::clamp(gray.data[i], 0.0f, 1.0f);
  }
  return out;
}

RgbImage gray_to_srgb(const GrayImage& gray) { return lab_to_srgb(gray_to_lab(gray)); }

GrayImage srgb_to_gray(const RgbImage& img) {
  return unit_luminance(srgb_to_lab(img));
}

}  // namespace chromaflow
