#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "chromaflow/color.h"
#include "chromaflow/features.h"
#include "chromaflow/nnf.h"

namespace chromaflow {

// Per-pixel, per-channel gain and offset on unit-range Lab channels:
// out_c = a_c * in_c + b_c.
struct TransferField {
  int width = 0;
  int height = 0;
  std::array<Plane, 3> a;
  std::array<Plane, 3> b;

  TransferField() = default;
  TransferField(int w, int h, float gain = 1.0f, float offset = 0.0f);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool operator==(const TransferField&) const = default;
};

// Same-cluster color neighbors, stored CSR-style.
struct NonlocalGraph {
  int width = 0;
  int height = 0;
  std::vector<int> cluster;
  std::vector<int> offsets;    // size pixel_count + 1
  std::vector<int> neighbors;  // pixel indices
  std::vector<float> weights;  // exp(1 - SSD) / K

  int begin(std::size_t p) const { return offsets[p]; }
  int end(std::size_t p) const { return offsets[p + 1]; }
};

struct TransferParams {
  double lambda_l = 0.125;
  double lambda_nl = 2.0;
  double alpha = 1.2;
  double eps_w = 0.0001;
  double eps_std = 0.002;
  int k_clusters = 10;
  int k_neighbors = 8;
  int patch = 3;
  double wls_upsample_lambda = 0.024;
  int cg_max_iters = 100;
  double cg_rel_tol = 1e-4;
};

// Data-term resolution factor 4^(L-1).
double data_level_weight(int level);

// Local mean/std matching over a border-clamped patch:
// a = sd_G / (sd_S + eps_std), b = mean_G - a * mean_S (population sd).
TransferField init_transfer(const LabImage& source, const LabImage& guide, int patch = 3,
                            double eps_std = 0.002);

// K-means (k-means++ seeding, at most 50 Lloyd rounds) over the level-5
// feature vectors, upsampled by nearest neighbor to the requested size.
// k is clamped to the number of distinct vectors.
std::vector<int> cluster_semantic(const FeatureMap& coarse, int width, int height, int k,
                                  std::uint64_t seed);

// Within each cluster, the K nearest pixels in unit-range Lab (ties to the
// lower index), weighted by exp(1 - SSD) / K.
NonlocalGraph build_nonlocal(const LabImage& source, const std::vector<int>& clusters, int k);

// Smoothness weight (|dl|^alpha + eps)^-1.
double smoothness_weight(double dl, double alpha, double eps);

// Quadratic energy of one Lab channel in the unknowns x = [a_0..a_N-1,
// b_0..b_N-1]: E(x) = x'Hx - 2c'x + k.
class ChannelSystem {
 public:
  ChannelSystem(const LabImage& source, const Guidance& guide, const NonlocalGraph& graph,
                int level, const TransferParams& params, int channel);

  const Eigen::SparseMatrix<double>& hessian() const { return h_; }
  const Eigen::VectorXd& rhs() const { return c_; }
  double constant() const { return k_; }

  double energy(const Eigen::VectorXd& x) const;
  // dE/dx = 2(Hx - c).
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;

 private:
  Eigen::SparseMatrix<double> h_;
  Eigen::VectorXd c_;
  double k_ = 0.0;
};

Eigen::VectorXd pack_channel(const TransferField& field, int channel);
void unpack_channel(const Eigen::VectorXd& x, int channel, TransferField& field);

// Evaluates the three-term objective directly from its definition, summed
// over channels. Independent of ChannelSystem.
double transfer_energy(const LabImage& source, const Guidance& guide, const TransferField& field,
                       const NonlocalGraph& graph, int level, const TransferParams& params);

struct SolveReport {
  double initial_energy = 0.0;
  double final_energy = 0.0;
  std::array<int, 3> iterations{};
};

// Minimizes the data + local smoothness + non-local objective with
// incomplete-Cholesky-preconditioned CG per channel, starting from `init`. The result
// never has higher energy than `init`. Throws SolverError on non-finite energy.
TransferField solve_transfer(const LabImage& source, const Guidance& guide,
                             const TransferField& init, const NonlocalGraph& graph, int level,
                             const TransferParams& params, SolveReport* report = nullptr);

// Solves (I + lambda * A) x = signal where A is the 4-neighbor Laplacian
// weighted by smoothness_weight of the guide differences. CG to 1e-5.
Plane wls_filter(const Plane& signal, const Plane& guide, double lambda, double alpha,
                 double eps);

// Bilinear upsampling of all six coefficient planes to the size of
// `source_full`, then wls_filter guided by its unit luminance.
TransferField upsample_coefficients(const TransferField& field, const LabImage& source_full,
                                    double lambda, double alpha = 1.2, double eps = 0.0001);

// out = a * S + b per unit-range channel, clamped to the valid Lab range.
LabImage apply_transfer(const TransferField& field, const LabImage& source);

}  // namespace chromaflow
