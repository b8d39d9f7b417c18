// Feature exporter speaking the checkpoint protocol with the toy backend:
//   toy_exporter <input-png> <output-fpyr> [--level L]
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chromaflow/features.h"
#include "chromaflow/image_io.h"

int main(int argc, char** argv) {
  CLI::App app{"Toy feature exporter", "toy_exporter"};
  std::string input, output;
  int level = 0;
  app.add_option("input", input, "Input image")->required();
  app.add_option("output", output, "Output .fpyr")->required();
  app.add_option("--level", level, "Export only this level")->check(CLI::Range(1, 5));
  CLI11_PARSE(app, argc, argv);
  try {
    const auto lab = chromaflow::srgb_to_lab(chromaflow::read_image(input));
    chromaflow::FeaturePyramid pyr;
    if (level > 0) {
      pyr.levels.push_back(chromaflow::toy_extract_level(lab, level));
      pyr.source_width = lab.width;
      pyr.source_height = lab.height;
    } else {
      pyr = chromaflow::toy_extract(lab);
    }
    chromaflow::write_pyramid(pyr, output);
  } catch (const std::exception& e) {
    std::cerr << "toy_exporter: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
