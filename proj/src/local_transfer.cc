#include "chromaflow/local_transfer.h"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/OrderingMethods>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "chromaflow/error.h"

namespace chromaflow {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void check_same_size(const LabImage& a, const LabImage& b, const char* who) {
  if (a.width != b.width || a.height != b.height) {
    throw DimensionError(std::string(who) + ": image sizes differ");
  }
}

void check_guidance(const LabImage& source, const Guidance& guide, const NonlocalGraph& graph,
                    const char* who) {
  check_same_size(source, guide.image, who);
  if (!guide.error.data.empty() &&
      (guide.error.width != source.width || guide.error.height != source.height)) {
    throw DimensionError(std::string(who) + ": error map size differs");
  }
  if (graph.width != source.width || graph.height != source.height ||
      graph.offsets.size() != source.pixel_count() + 1) {
    throw DimensionError(std::string(who) + ": non-local graph size differs");
  }
}

// Everything the per-channel energy needs, in unit range.
struct ChannelInputs {
  int width, height;
  std::vector<double> s, g, wd, lum;
};

ChannelInputs channel_inputs(const LabImage& source, const Guidance& guide, int level,
                             int channel) {
  const std::size_t n = source.pixel_count();
  ChannelInputs in{source.width, source.height, std::vector<double>(n), std::vector<double>(n),
                   std::vector<double>(n), std::vector<double>(n)};
  const double omega = data_level_weight(level);
  for (std::size_t i = 0; i < n; ++i) {
    in.s[i] = lab_to_unit(channel, source[channel].data[i]);
    in.g[i] = lab_to_unit(channel, guide.image[channel].data[i]);
    const double e = guide.error.data.empty() ? 0.0 : guide.error.data[i];
    in.wd[i] = omega * (1.0 - e);
    in.lum[i] = lab_to_unit(0, source.l().data[i]);
  }
  return in;
}

// Direct evaluation of one channel's energy from the defining sums, with the
// local term summed over N4(p) for every p (each edge seen from both ends).
double channel_energy_direct(const ChannelInputs& in, const NonlocalGraph& graph,
                             const TransferParams& params, const Plane& a, const Plane& b) {
  const int w = in.width, h = in.height;
  double data = 0.0, local = 0.0, nonlocal = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const double tp = a.data[p] * in.s[p] + b.data[p];
      data += in.wd[p] * (tp - in.g[p]) * (tp - in.g[p]);

      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const std::size_t q = static_cast<std::size_t>(ny[k]) * w + nx[k];
        const double wl = smoothness_weight(in.lum[p] - in.lum[q], params.alpha, params.eps_w);
        const double da = static_cast<double>(a.data[p]) - a.data[q];
        const double db = static_cast<double>(b.data[p]) - b.data[q];
        local += wl * (da * da + db * db);
      }

      for (int j = graph.begin(p); j < graph.end(p); ++j) {
        const std::size_t q = static_cast<std::size_t>(graph.neighbors[j]);
        const double tq = a.data[q] * in.s[q] + b.data[q];
        nonlocal += graph.weights[j] * (tp - tq) * (tp - tq);
      }
    }
  }
  return data + params.lambda_l * local + params.lambda_nl * nonlocal;
}

Eigen::VectorXd solve_cg_identity(const Eigen::SparseMatrix<double>& a,
                                  const Eigen::VectorXd& rhs, const Eigen::VectorXd& guess,
                                  double tol, int max_iters) {
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IdentityPreconditioner>
      cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(max_iters);
  cg.compute(a);
  return cg.solveWithGuess(rhs, guess);
}

}  // namespace

TransferField::TransferField(int w, int h, float gain, float offset)
    : width(w),
      height(h),
      a{Plane(w, h, gain), Plane(w, h, gain), Plane(w, h, gain)},
      b{Plane(w, h, offset), Plane(w, h, offset), Plane(w, h, offset)} {}

double data_level_weight(int level) { return std::pow(4.0, level - 1); }

double smoothness_weight(double dl, double alpha, double eps) {
  return 1.0 / (std::pow(std::abs(dl), alpha) + eps);
}

TransferField init_transfer(const LabImage& source, const LabImage& guide, int patch,
                            double eps_std) {
  check_same_size(source, guide, "init_transfer");
  if (patch < 1 || patch % 2 == 0) throw std::invalid_argument("init_transfer: patch must be odd");
  const auto su = to_unit_planes(source);
  const auto gu = to_unit_planes(guide);
  const int w = source.width, h = source.height, r = patch / 2;

  TransferField out(w, h);
  std::vector<double> sv, gv;
  sv.reserve(patch * patch);
  gv.reserve(patch * patch);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        sv.clear();
        gv.clear();
        for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
            sv.push_back(su[c].at(xx, yy));
            gv.push_back(gu[c].at(xx, yy));
          }
        }
        const double n = static_cast<double>(sv.size());
        const double ms = std::accumulate(sv.begin(), sv.end(), 0.0) / n;
        const double mg = std::accumulate(gv.begin(), gv.end(), 0.0) / n;
        double vs = 0.0, vg = 0.0;
        for (std::size_t i = 0; i < sv.size(); ++i) {
          vs += (sv[i] - ms) * (sv[i] - ms);
          vg += (gv[i] - mg) * (gv[i] - mg);
        }
        const double gain = std::sqrt(vg / n) / (std::sqrt(vs / n) + eps_std);
        out.a[c].at(x, y) = static_cast<float>(gain);
        out.b[c].at(x, y) = static_cast<float>(mg - gain * ms);
      }
    }
  }
  return out;
}

std::vector<int> cluster_semantic(const FeatureMap& coarse, int width, int height, int k,
                                  std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("cluster_semantic: k must be >= 1");
  const int n = static_cast<int>(coarse.pixel_count());
  const int dim = coarse.channels;
  auto vec = [&](int i) { return coarse.at(i % coarse.width, i / coarse.width); };
  auto sq_dist = [dim](const float* u, const double* v) {
    double acc = 0.0;
    for (int c = 0; c < dim; ++c) acc += (u[c] - v[c]) * (u[c] - v[c]);
    return acc;
  };

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::lexicographical_compare(vec(i), vec(i) + dim, vec(j), vec(j) + dim);
  });
  int distinct = n > 0 ? 1 : 0;
  for (int i = 1; i < n; ++i) {
    if (!std::equal(vec(order[i]), vec(order[i]) + dim, vec(order[i - 1]))) ++distinct;
  }
  k = std::min(k, distinct);

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<double> centers;
  centers.reserve(static_cast<std::size_t>(k) * dim);
  auto add_center = [&](int i) { centers.insert(centers.end(), vec(i), vec(i) + dim); };
  add_center(std::uniform_int_distribution<int>(0, n - 1)(rng));
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) d2[i] = sq_dist(vec(i), centers.data());
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double pick = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    int chosen = -1;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && acc > pick) {
        chosen = i;
        break;
      }
    }
    if (chosen < 0) {  // rounding at the tail
      for (int i = n - 1; i >= 0 && chosen < 0; --i) {
        if (d2[i] > 0.0) chosen = i;
      }
    }
    add_center(chosen);
    const double* nc = &centers[static_cast<std::size_t>(c) * dim];
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(vec(i), nc));
  }

  // Lloyd iterations.
  std::vector<int> assign(n, -1);
  for (int round = 0; round < 50; ++round) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(vec(i), &centers[static_cast<std::size_t>(c) * dim]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sums(centers.size(), 0.0);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      const float* v = vec(i);
      for (int c = 0; c < dim; ++c) sums[static_cast<std::size_t>(assign[i]) * dim + c] += v[c];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty clusters keep their center
      for (int j = 0; j < dim; ++j) {
        centers[static_cast<std::size_t>(c) * dim + j] =
            sums[static_cast<std::size_t>(c) * dim + j] / counts[c];
      }
    }
  }

  std::vector<int> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(coarse.height - 1, static_cast<int>((y + 0.5) * coarse.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(coarse.width - 1, static_cast<int>((x + 0.5) * coarse.width / width));
      out[static_cast<std::size_t>(y) * width + x] = assign[sy * coarse.width + sx];
    }
  }
  return out;
}

NonlocalGraph build_nonlocal(const LabImage& source, const std::vector<int>& clusters, int k) {
  const std::size_t n = source.pixel_count();
  if (clusters.size() != n) throw DimensionError("build_nonlocal: cluster map size differs");
  if (k < 0) throw std::invalid_argument("build_nonlocal: K must be >= 0");
  const auto unit = to_unit_planes(source);
  auto color_d2 = [&](std::size_t p, std::size_t q) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(unit[c].data[p]) - unit[c].data[q];
      acc += d * d;
    }
    return acc;
  };

  // Group members per cluster, sorted by lightness for a pruned scan.
  const int num_clusters = n ? *std::max_element(clusters.begin(), clusters.end()) + 1 : 0;
  std::vector<std::vector<int>> members(num_clusters);
  for (std::size_t p = 0; p < n; ++p) members[clusters[p]].push_back(static_cast<int>(p));
  const auto& lum = unit[0].data;

  using Cand = std::pair<double, int>;  // (SSD, index); lexicographic order breaks ties
  std::vector<std::vector<Cand>> found(n);
  std::vector<Cand> heap;
  for (auto& m : members) {
    std::sort(m.begin(), m.end(), [&](int i, int j) {
      return lum[i] != lum[j] ? lum[i] < lum[j] : i < j;
    });
    const int size = static_cast<int>(m.size());
    for (int i = 0; i < size; ++i) {
      const int p = m[i];
      heap.clear();
      auto offer = [&](int q) {
        const Cand c{color_d2(p, q), q};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end());
        } else if (k > 0 && c < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end());
        }
      };
      auto pruned = [&](int q) {
        const double dl = static_cast<double>(lum[p]) - lum[q];
        return k == 0 || (static_cast<int>(heap.size()) == k && dl * dl > heap.front().first);
      };
      for (int j = i - 1; j >= 0 && !pruned(m[j]); --j) offer(m[j]);
      for (int j = i + 1; j < size && !pruned(m[j]); ++j) offer(m[j]);
      std::sort(heap.begin(), heap.end());
      found[p] = heap;
    }
  }

  NonlocalGraph g;
  g.width = source.width;
  g.height = source.height;
  g.cluster = clusters;
  g.offsets.assign(n + 1, 0);
  for (std::size_t p = 0; p < n; ++p) {
    g.offsets[p + 1] = g.offsets[p] + static_cast<int>(found[p].size());
    for (const auto& [d2, q] : found[p]) {
      g.neighbors.push_back(q);
      g.weights.push_back(static_cast<float>(std::exp(1.0 - d2) / k));
    }
  }
  return g;
}

ChannelSystem::ChannelSystem(const LabImage& source, const Guidance& guide,
                             const NonlocalGraph& graph, int level, const TransferParams& params,
                             int channel) {
  check_guidance(source, guide, graph, "ChannelSystem");
  const ChannelInputs in = channel_inputs(source, guide, level, channel);
  const int w = in.width, h = in.height;
  const int n = w * h;
  h_.resize(2 * n, 2 * n);
  c_ = Eigen::VectorXd::Zero(2 * n);
  k_ = 0.0;
  Triplets t;
  t.reserve(static_cast<std::size_t>(n) * (4 + 8 + 16 * params.k_neighbors));

  auto ia = [](int p) { return p; };
  auto ib = [n](int p) { return n + p; };

  for (int p = 0; p < n; ++p) {
    const double wd = in.wd[p], s = in.s[p], g = in.g[p];
    t.emplace_back(ia(p), ia(p), wd * s * s);
    t.emplace_back(ia(p), ib(p), wd * s);
    t.emplace_back(ib(p), ia(p), wd * s);
    t.emplace_back(ib(p), ib(p), wd);
    c_[ia(p)] += wd * s * g;
    c_[ib(p)] += wd * g;
    k_ += wd * g * g;
  }

  // Each undirected edge appears twice in the sum over N4(p).
  auto add_edge = [&](int p, int q) {
    const double wl = 2.0 * params.lambda_l *
                      smoothness_weight(in.lum[p] - in.lum[q], params.alpha, params.eps_w);
    for (int off : {0, n}) {
      t.emplace_back(p + off, p + off, wl);
      t.emplace_back(q + off, q + off, wl);
      t.emplace_back(p + off, q + off, -wl);
      t.emplace_back(q + off, p + off, -wl);
    }
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) add_edge(p, p + 1);
      if (y + 1 < h) add_edge(p, p + w);
    }
  }

  // Non-local: weight * (v'x)^2 with v = [s_p at a_p, 1 at b_p, -s_q at a_q, -1 at b_q].
  for (int p = 0; p < n; ++p) {
    for (int j = graph.begin(p); j < graph.end(p); ++j) {
      const int q = graph.neighbors[j];
      const double wn = params.lambda_nl * graph.weights[j];
      const int idx[4] = {ia(p), ib(p), ia(q), ib(q)};
      const double v[4] = {in.s[p], 1.0, -in.s[q], -1.0};
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) t.emplace_back(idx[r], idx[c], wn * v[r] * v[c]);
      }
    }
  }
  h_.setFromTriplets(t.begin(), t.end());
}

double ChannelSystem::energy(const Eigen::VectorXd& x) const {
  return x.dot(h_ * x) - 2.0 * c_.dot(x) + k_;
}

Eigen::VectorXd ChannelSystem::gradient(const Eigen::VectorXd& x) const {
  return 2.0 * (h_ * x - c_);
}

Eigen::VectorXd pack_channel(const TransferField& field, int channel) {
  const int n = static_cast<int>(field.pixel_count());
  Eigen::VectorXd x(2 * n);
  for (int p = 0; p < n; ++p) {
    x[p] = field.a[channel].data[p];
    x[n + p] = field.b[channel].data[p];
  }
  return x;
}

void unpack_channel(const Eigen::VectorXd& x, int channel, TransferField& field) {
  const int n = static_cast<int>(field.pixel_count());
  for (int p = 0; p < n; ++p) {
    field.a[channel].data[p] = static_cast<float>(x[p]);
    field.b[channel].data[p] = static_cast<float>(x[n + p]);
  }
}

double transfer_energy(const LabImage& source, const Guidance& guide, const TransferField& field,
                       const NonlocalGraph& graph, int level, const TransferParams& params) {
  check_guidance(source, guide, graph, "transfer_energy");
  if (field.width != source.width || field.height != source.height) {
    throw DimensionError("transfer_energy: field size differs");
  }
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    total += channel_energy_direct(channel_inputs(source, guide, level, c), graph, params,
                                   field.a[c], field.b[c]);
  }
  return total;
}

TransferField solve_transfer(const LabImage& source, const Guidance& guide,
                             const TransferField& init, const NonlocalGraph& graph, int level,
                             const TransferParams& params, SolveReport* report) {
  check_guidance(source, guide, graph, "solve_transfer");
  if (init.width != source.width || init.height != source.height) {
    throw DimensionError("solve_transfer: init field size differs");
  }
  TransferField out = init;
  SolveReport rep;
  for (int c = 0; c < 3; ++c) {
    const ChannelInputs in = channel_inputs(source, guide, level, c);
    const double e0 = channel_energy_direct(in, graph, params, init.a[c], init.b[c]);
    if (!std::isfinite(e0)) {
      throw SolverError("non-finite initial energy in channel " + std::to_string(c));
    }

    const ChannelSystem sys(source, guide, graph, level, params, c);
    // Jacobi preconditioning stalls on the strong smoothness edges.
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::IncompleteCholesky<double, Eigen::Lower, Eigen::AMDOrdering<int>>>
        cg;
    cg.setTolerance(params.cg_rel_tol);
    cg.setMaxIterations(params.cg_max_iters);
    cg.compute(sys.hessian());
    const Eigen::VectorXd x = cg.solveWithGuess(sys.rhs(), pack_channel(init, c));
    rep.iterations[c] = static_cast<int>(cg.iterations());

    TransferField candidate = out;
    unpack_channel(x, c, candidate);
    const double e1 = channel_energy_direct(in, graph, params, candidate.a[c], candidate.b[c]);
    if (!std::isfinite(e1)) {
      throw SolverError("non-finite energy after CG in channel " + std::to_string(c));
    }
    if (e1 <= e0) {
      out.a[c] = std::move(candidate.a[c]);
      out.b[c] = std::move(candidate.b[c]);
      rep.final_energy += e1;
    } else {
      rep.final_energy += e0;
    }
    rep.initial_energy += e0;
  }
  if (report) *report = rep;
  return out;
}

Plane wls_filter(const Plane& signal, const Plane& guide, double lambda, double alpha,
                 double eps) {
  if (!signal.same_size(guide)) throw DimensionError("wls_filter: signal and guide sizes differ");
  if (lambda == 0.0) return signal;
  const int w = signal.width, h = signal.height, n = w * h;

  Triplets t;
  t.reserve(static_cast<std::size_t>(n) * 5);
  std::vector<double> diag(n, 1.0);
  auto add_edge = [&](int p, int q) {
    const double wl = lambda * smoothness_weight(guide.data[p] - guide.data[q], alpha, eps);
    diag[p] += wl;
    diag[q] += wl;
    t.emplace_back(p, q, -wl);
    t.emplace_back(q, p, -wl);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) add_edge(p, p + 1);
      if (y + 1 < h) add_edge(p, p + w);
    }
  }
  for (int p = 0; p < n; ++p) t.emplace_back(p, p, diag[p]);
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());

  Eigen::VectorXd rhs(n);
  for (int p = 0; p < n; ++p) rhs[p] = signal.data[p];
  // Plain CG from x0 = signal keeps every residual zero-sum, so the mean of
  // the signal is preserved to rounding.
  const Eigen::VectorXd x = solve_cg_identity(a, rhs, rhs, 1e-5, std::max(1000, 4 * n));

  Plane out(w, h);
  for (int p = 0; p < n; ++p) out.data[p] = static_cast<float>(x[p]);
  return out;
}

TransferField upsample_coefficients(const TransferField& field, const LabImage& source_full,
                                    double lambda, double alpha, double eps) {
  const int w = source_full.width, h = source_full.height;
  const Plane guide = unit_luminance(source_full);
  TransferField out(w, h);
  for (int c = 0; c < 3; ++c) {
    out.a[c] = wls_filter(resize_bilinear(field.a[c], w, h), guide, lambda, alpha, eps);
    out.b[c] = wls_filter(resize_bilinear(field.b[c], w, h), guide, lambda, alpha, eps);
  }
  return out;
}

LabImage apply_transfer(const TransferField& field, const LabImage& source) {
  if (field.width != source.width || field.height != source.height) {
    throw DimensionError("apply_transfer: field and image sizes differ");
  }
  auto unit = to_unit_planes(source);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < unit[c].size(); ++i) {
      unit[c].data[i] = field.a[c].data[i] * unit[c].data[i] + field.b[c].data[i];
    }
  }
  return from_unit_planes(unit);
}

}  // namespace chromaflow
