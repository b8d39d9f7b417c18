#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace chromaflow {

// Single-channel float raster, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return data[index(x, y)]; }
  float at(int x, int y) const { return data[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t size() const { return data.size(); }
  bool same_size(const Plane& o) const {
    return width == o.width && height == o.height;
  }

  bool operator==(const Plane&) const = default;
};

// Values in [0,1]: gray sources and normalized error maps.
using GrayImage = Plane;

// Interleaved sRGB in [0,1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(int w, int h, float fill = 0.0f);

  float* pixel(int x, int y) { return &data[3 * (static_cast<std::size_t>(y) * width + x)]; }
  const float* pixel(int x, int y) const {
    return &data[3 * (static_cast<std::size_t>(y) * width + x)];
  }

  bool operator==(const RgbImage&) const = default;
};

// Planar CIELAB with L in [0,100].
struct LabImage {
  int width = 0;
  int height = 0;
  std::array<Plane, 3> planes;  // L, a, b

  LabImage() = default;
  LabImage(int w, int h);

  Plane& l() { return planes[0]; }
  const Plane& l() const { return planes[0]; }
  Plane& operator[](int c) { return planes[c]; }
  const Plane& operator[](int c) const { return planes[c]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool operator==(const LabImage&) const = default;
};

// Unit-range mapping used by every solver: L/100, (a+128)/255, (b+128)/255.
float lab_to_unit(int channel, float value);
float unit_to_lab(int channel, float unit);

// Three unit-range planes (no clamping).
std::array<Plane, 3> to_unit_planes(const LabImage& img);
// Clamps each unit plane to [0,1] before mapping back.
LabImage from_unit_planes(const std::array<Plane, 3>& unit);

LabImage srgb_to_lab(const RgbImage& img);
// Out-of-gamut results are clamped to [0,1].
RgbImage lab_to_srgb(const LabImage& img);

std::array<float, 3> srgb_to_lab(float r, float g, float b);
std::array<float, 3> lab_to_srgb(float l, float a, float b);

// Separable bilinear resampling with pixel-center alignment. Same-size calls
// return an exact copy.
Plane resize_bilinear(const Plane& src, int new_width, int new_height);
LabImage resize_bilinear(const LabImage& img, int new_width, int new_height);

// Lab lightness rescaled to [0,1].
Plane unit_luminance(const LabImage& img);

// Promotes a gray image to Lab with L = 100 * gray and zero chroma.
LabImage gray_to_lab(const GrayImage& gray);
// The gray image replicated into three sRGB channels at matching lightness.
RgbImage gray_to_srgb(const GrayImage& gray);
// Lab lightness / 100 of a color image.
GrayImage srgb_to_gray(const RgbImage& img);

}  // namespace chromaflow
