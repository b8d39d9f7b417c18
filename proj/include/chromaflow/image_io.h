#pragma once

#include <filesystem>

#include "chromaflow/color.h"

namespace chromaflow {

// Decodes PNG (8/16-bit, gray/RGB, alpha dropped) or JPEG, chosen by file
// signature. Throws IoError.
RgbImage read_image(const std::filesystem::path& path);

// Writes an 8-bit sRGB PNG. Throws IoError.
void write_png(const RgbImage& img, const std::filesystem::path& path);

}  // namespace chromaflow
