#pragma once

#include <array>
#include <span>
#include <vector>

#include "chromaflow/color.h"
#include "chromaflow/features.h"
#include "chromaflow/nnf.h"

namespace chromaflow {

// Per-pixel index of the reference whose guidance is used.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> label;

  LabelMap() = default;
  LabelMap(int w, int h, int fill = 0)
      : width(w), height(h), label(static_cast<std::size_t>(w) * h, fill) {}

  bool operator==(const LabelMap&) const = default;
};

struct MergeParams {
  double beta_c = 0.2;
  double beta_l = 0.08;
  int hist_bins = 8;

  static double omega_e(int level);  // 4^(L-5)
  static double omega_c(int level);  // same as omega_e
  static double omega_l(int level);  // 2^(L-5)
};

// Per channel: histogram the candidate values at p over the unit range and
// return the mean of the densest bin (ties go to the lowest bin). Unit-range
// Lab triple.
std::array<float, 3> majority_color(std::span<const LabImage> candidates, int x, int y, int bins);

// Inputs of the label-selection energy at one level. `errors` are the raw
// per-candidate matching errors; features are compared after normalization.
struct MergeInputs {
  std::span<const Plane> errors;
  std::span<const LabImage> candidates;
  std::span<const FeatureMap> features;
  int level = 5;
};

// sum_p w_e e_i(p) + beta_c sum_p w_c ||G_i(p) - majority(p)||^2
//   + beta_l sum_p sum_{q in N4(p)} w_l (||F_i(p) - F_j(p)||^2 + ||F_i(q) - F_j(q)||^2)
// with i = I(p), j = I(q); colors in unit range.
double mrf_energy(const LabelMap& labels, const MergeInputs& in, const MergeParams& params);

struct LabelSolveReport {
  double initial_energy = 0.0;
  double final_energy = 0.0;
  int sweeps = 0;
  long truncated_edges = 0;  // non-submodular expansion terms adjusted
};

// Data-term initialization followed by alpha-expansion sweeps until a full
// sweep lowers the energy by less than 1e-9. Never returns higher energy
// than the initialization.
LabelMap solve_labels(const MergeInputs& in, const MergeParams& params,
                      LabelSolveReport* report = nullptr);

// Pointwise selection of image, features and both error planes.
Guidance merge_guidance(const LabelMap& labels, std::span<const Guidance> candidates);

}  // namespace chromaflow
