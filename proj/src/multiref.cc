#include "chromaflow/multiref.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "chromaflow/error.h"
#include "maxflow.h"

namespace chromaflow {

namespace {

// Unary and pairwise tables of the label energy at one level.
class MergeProblem {
 public:
  MergeProblem(const MergeInputs& in, const MergeParams& params) {
    n_ = static_cast<int>(in.candidates.size());
    if (n_ < 1) throw std::invalid_argument("label merge needs at least one candidate");
    if (in.errors.size() != in.candidates.size() || in.features.size() != in.candidates.size()) {
      throw DimensionError("label merge: candidate, error and feature counts differ");
    }
    w_ = in.candidates[0].width;
    h_ = in.candidates[0].height;
    const int channels = in.features[0].channels;
    for (int i = 0; i < n_; ++i) {
      const auto& c = in.candidates[i];
      const auto& e = in.errors[i];
      const auto& f = in.features[i];
      if (c.width != w_ || c.height != h_ || e.width != w_ || e.height != h_ || f.width != w_ ||
          f.height != h_ || f.channels != channels) {
        throw DimensionError("label merge: candidate " + std::to_string(i) + " differs in shape");
      }
    }

    const std::size_t np = pixels();
    const double we = MergeParams::omega_e(in.level);
    const double wc = MergeParams::omega_c(in.level);
    unary_.assign(np * n_, 0.0);
    std::vector<std::array<Plane, 3>> unit;
    unit.reserve(n_);
    for (const auto& c : in.candidates) unit.push_back(to_unit_planes(c));
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w_ + x;
        const auto maj = majority_color(in.candidates, x, y, params.hist_bins);
        for (int i = 0; i < n_; ++i) {
          double dev = 0.0;
          for (int c = 0; c < 3; ++c) {
            const double d = static_cast<double>(unit[i][c].data[p]) - maj[c];
            dev += d * d;
          }
          unary_[p * n_ + i] = we * in.errors[i].data[p] + params.beta_c * wc * dev;
        }
      }
    }

    // pair_[p][i][j] = ||F_i(p) - F_j(p)||^2 on normalized features.
    std::vector<FeatureMap> norm;
    norm.reserve(n_);
    for (const auto& f : in.features) norm.push_back(channel_normalize(f));
    pair_.assign(np * n_ * n_, 0.0);
    for (std::size_t p = 0; p < np; ++p) {
      for (int i = 0; i < n_; ++i) {
        for (int j = i + 1; j < n_; ++j) {
          const float* u = &norm[i].data[p * channels];
          const float* v = &norm[j].data[p * channels];
          double acc = 0.0;
          for (int c = 0; c < channels; ++c) {
            const double d = static_cast<double>(u[c]) - v[c];
            acc += d * d;
          }
          pair_[(p * n_ + i) * n_ + j] = acc;
          pair_[(p * n_ + j) * n_ + i] = acc;
        }
      }
    }
    // Every undirected edge is visited from both endpoints in the objective.
    pair_scale_ = 2.0 * params.beta_l * MergeParams::omega_l(in.level);
  }

  int labels() const { return n_; }
  int width() const { return w_; }
  int height() const { return h_; }
  std::size_t pixels() const { return static_cast<std::size_t>(w_) * h_; }

  double unary(std::size_t p, int i) const { return unary_[p * n_ + i]; }
  double pairwise(std::size_t p, std::size_t q, int i, int j) const {
    if (i == j) return 0.0;
    return pair_scale_ * (pair_[(p * n_ + i) * n_ + j] + pair_[(q * n_ + i) * n_ + j]);
  }

  double energy(const std::vector<int>& lab) const {
    double e = 0.0;
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w_ + x;
        e += unary(p, lab[p]);
        if (x + 1 < w_) e += pairwise(p, p + 1, lab[p], lab[p + 1]);
        if (y + 1 < h_) e += pairwise(p, p + w_, lab[p], lab[p + w_]);
      }
    }
    return e;
  }

 private:
  int n_ = 0, w_ = 0, h_ = 0;
  std::vector<double> unary_;
  std::vector<double> pair_;
  double pair_scale_ = 0.0;
};

// One expansion move toward `alpha`. Returns the proposed labeling.
std::vector<int> expand(const MergeProblem& prob, const std::vector<int>& lab, int alpha,
                        long* truncated) {
  const int w = prob.width(), h = prob.height();
  const std::size_t np = prob.pixels();
  std::vector<int> node(np, -1);
  int num_nodes = 0;
  for (std::size_t p = 0; p < np; ++p) {
    if (lab[p] != alpha) node[p] = num_nodes++;
  }
  if (num_nodes == 0) return lab;

  // cost0/cost1: unary cost of keeping / switching.
  std::vector<double> cost0(num_nodes), cost1(num_nodes);
  for (std::size_t p = 0; p < np; ++p) {
    if (node[p] < 0) continue;
    cost0[node[p]] = prob.unary(p, lab[p]);
    cost1[node[p]] = prob.unary(p, alpha);
  }

  struct Edge {
    int from, to;
    double cap;
  };
  std::vector<Edge> edges;
  auto add_pair = [&](std::size_t p, std::size_t q) {
    const int np_ = node[p], nq = node[q];
    if (np_ < 0 && nq < 0) return;
    if (nq < 0) {
      cost0[np_] += prob.pairwise(p, q, lab[p], alpha);
      return;
    }
    if (np_ < 0) {
      cost0[nq] += prob.pairwise(p, q, alpha, lab[q]);
      return;
    }
    const double a = prob.pairwise(p, q, lab[p], lab[q]);
    double b = prob.pairwise(p, q, lab[p], alpha);
    double c = prob.pairwise(p, q, alpha, lab[q]);
    const double d = 0.0;
    // Raising the switch costs keeps E(current) exact and only overestimates
    // other labelings, so an accepted move cannot increase the true energy.
    if (a + d > b + c) {
      const double excess = a + d - b - c;
      b += 0.5 * excess;
      c += 0.5 * excess;
      ++*truncated;
    }
    cost1[np_] += c - a;
    cost1[nq] += d - c;
    edges.push_back({np_, nq, b + c - a - d});
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) add_pair(p, p + 1);
      if (y + 1 < h) add_pair(p, p + w);
    }
  }

  internal::MaxFlow flow(num_nodes);
  for (int v = 0; v < num_nodes; ++v) {
    const double m = std::min(cost0[v], cost1[v]);
    // Sink side means "switch": source->v is cut then, so it carries cost1.
    flow.add_terminal(v, cost1[v] - m, cost0[v] - m);
  }
  for (const Edge& e : edges) flow.add_edge(e.from, e.to, e.cap);
  flow.solve();

  std::vector<int> out = lab;
  for (std::size_t p = 0; p < np; ++p) {
    if (node[p] >= 0 && !flow.source_side(node[p])) out[p] = alpha;
  }
  return out;
}

}  // namespace

double MergeParams::omega_e(int level) { return std::pow(4.0, level - 5); }
double MergeParams::omega_c(int level) { return omega_e(level); }
double MergeParams::omega_l(int level) { return std::pow(2.0, level - 5); }

std::array<float, 3> majority_color(std::span<const LabImage> candidates, int x, int y, int bins) {
  if (candidates.empty()) throw std::invalid_argument("majority_color: no candidates");
  if (bins < 1) throw std::invalid_argument("majority_color: bins must be >= 1");
  std::array<float, 3> out{};
  std::vector<int> count(bins);
  std::vector<double> sum(bins);
  for (int c = 0; c < 3; ++c) {
    std::fill(count.begin(), count.end(), 0);
    std::fill(sum.begin(), sum.end(), 0.0);
    for (const LabImage& img : candidates) {
      const float v = lab_to_unit(c, img[c].at(x, y));
      const int bin = std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
      ++count[bin];
      sum[bin] += v;
    }
    const int best = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    out[c] = static_cast<float>(sum[best] / count[best]);
  }
  return out;
}

double mrf_energy(const LabelMap& labels, const MergeInputs& in, const MergeParams& params) {
  const MergeProblem prob(in, params);
  if (labels.width != prob.width() || labels.height != prob.height()) {
    throw DimensionError("mrf_energy: label map size differs");
  }
  for (int l : labels.label) {
    if (l < 0 || l >= prob.labels()) throw std::out_of_range("mrf_energy: label out of range");
  }
  return prob.energy(labels.label);
}

LabelMap solve_labels(const MergeInputs& in, const MergeParams& params, LabelSolveReport* report) {
  const MergeProblem prob(in, params);
  const int n = prob.labels();
  LabelMap out(prob.width(), prob.height());
  for (std::size_t p = 0; p < prob.pixels(); ++p) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (prob.unary(p, i) < prob.unary(p, best)) best = i;
    }
    out.label[p] = best;
  }

  LabelSolveReport rep;
  double energy = prob.energy(out.label);
  rep.initial_energy = energy;
  if (!std::isfinite(energy)) throw SolverError("non-finite label energy");
  if (n > 1) {
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      const double sweep_start = energy;
      for (int alpha = 0; alpha < n; ++alpha) {
        std::vector<int> proposal = expand(prob, out.label, alpha, &rep.truncated_edges);
        const double e = prob.energy(proposal);
        if (e < energy) {
          energy = e;
          out.label = std::move(proposal);
        }
      }
      ++rep.sweeps;
      if (sweep_start - energy < 1e-9) break;
    }
  }
  rep.final_energy = energy;
  if (report) *report = rep;
  return out;
}

Guidance merge_guidance(const LabelMap& labels, std::span<const Guidance> candidates) {
  if (candidates.empty()) throw std::invalid_argument("merge_guidance: no candidates");
  const Guidance& first = candidates[0];
  const int w = first.image.width, h = first.image.height;
  if (labels.width != w || labels.height != h) throw DimensionError("merge_guidance: label size differs");
  for (const Guidance& g : candidates) {
    if (g.image.width != w || g.image.height != h || g.features.width != w ||
        g.features.height != h || g.features.channels != first.features.channels ||
        !g.raw_error.same_size(first.raw_error) || !g.error.same_size(first.error)) {
      throw DimensionError("merge_guidance: candidates differ in shape");
    }
  }
  Guidance out = first;
  const int channels = first.features.channels;
  for (std::size_t p = 0; p < labels.label.size(); ++p) {
    const int l = labels.label[p];
    if (l < 0 || l >= static_cast<int>(candidates.size())) {
      throw std::out_of_range("merge_guidance: label out of range");
    }
    if (l == 0) continue;
    const Guidance& g = candidates[l];
    for (int c = 0; c < 3; ++c) out.image[c].data[p] = g.image[c].data[p];
    std::copy_n(&g.features.data[p * channels], channels, &out.features.data[p * channels]);
    if (!g.raw_error.data.empty()) out.raw_error.data[p] = g.raw_error.data[p];
    if (!g.error.data.empty()) out.error.data[p] = g.error.data[p];
  }
  return out;
}

}  // namespace chromaflow
