#include "chromaflow/local_transfer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "chromaflow/error.h"
#include "oracles.h"

namespace chromaflow {
namespace {

// Nine values with the given mean and population standard deviation.
std::vector<float> nine_values(double mean, double sd) {
  const double d = sd * 3.0 / std::sqrt(8.0);
  std::vector<float> v(9, static_cast<float>(mean));
  for (int i = 0; i < 4; ++i) {
    v[i] = static_cast<float>(mean - d);
    v[i + 5] = static_cast<float>(mean + d);
  }
  return v;
}

LabImage lightness_image(const std::vector<float>& unit_l, int w, int h) {
  LabImage img(w, h);
  for (std::size_t i = 0; i < unit_l.size(); ++i) img[0].data[i] = 100.0f * unit_l[i];
  return img;
}

TEST(InitTransferTest, MatchesPatchStatistics) {
  const LabImage s = lightness_image(nine_values(0.5, 0.1), 3, 3);
  const LabImage g = lightness_image(nine_values(0.3, 0.2), 3, 3);
  const TransferField f = init_transfer(s, g, 3, 0.002);
  EXPECT_NEAR(f.a[0].at(1, 1), 0.2 / 0.102, 1e-4);
  EXPECT_NEAR(f.b[0].at(1, 1), 0.3 - (0.2 / 0.102) * 0.5, 1e-4);
  EXPECT_NEAR(f.a[0].at(1, 1), 1.9608, 1e-4);
  EXPECT_NEAR(f.b[0].at(1, 1), -0.6804, 1e-4);
}

TEST(InitTransferTest, ConstantSourcePatchGivesLargeGain) {
  const LabImage s = lightness_image(std::vector<float>(9, 0.4f), 3, 3);
  const LabImage g = lightness_image(nine_values(0.5, 0.2), 3, 3);
  EXPECT_NEAR(init_transfer(s, g).a[0].at(1, 1), 100.0, 1e-2);
}

TEST(InitTransferTest, SelfTransferIsNearIdentity) {
  std::mt19937_64 rng(31);
  const LabImage s = oracle::random_lab(rng, 9, 7);
  const TransferField f = init_transfer(s, s);
  const LabImage out = apply_transfer(f, s);
  const auto su = to_unit_planes(s);
  const auto ou = to_unit_planes(out);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < su[c].size(); ++i) {
      EXPECT_LE(f.a[c].data[i], 1.0f);
      EXPECT_GT(f.a[c].data[i], 0.95f);
      EXPECT_NEAR(ou[c].data[i], su[c].data[i], 0.01);
    }
  }
  EXPECT_THROW(init_transfer(s, oracle::random_lab(rng, 9, 6)), DimensionError);
}

FeatureMap two_halves(int w, int h) {
  FeatureMap f(5, w, h, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f.at(x, y)[0] = x < w / 2 ? 0.0f : 5.0f;
      f.at(x, y)[1] = x < w / 2 ? 1.0f : 0.0f;
    }
  }
  return f;
}

TEST(ClusterTest, SeparatesHalvesAndUpsamples) {
  const auto labels = cluster_semantic(two_halves(4, 2), 8, 4, 2, 1);
  ASSERT_EQ(labels.size(), 32u);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(labels[y * 8 + x], labels[y * 8 + (x < 4 ? 0 : 7)]);
    }
  }
  EXPECT_NE(labels[0], labels[7]);
}

TEST(ClusterTest, SingleClusterAndClamping) {
  const auto one = cluster_semantic(two_halves(4, 2), 4, 2, 1, 3);
  EXPECT_TRUE(std::all_of(one.begin(), one.end(), [](int l) { return l == 0; }));
  const auto clamped = cluster_semantic(two_halves(4, 2), 4, 2, 10, 3);
  EXPECT_EQ(std::set<int>(clamped.begin(), clamped.end()).size(), 2u);
  for (int l : clamped) EXPECT_LT(l, 2);
}

TEST(ClusterTest, DeterministicForSeed) {
  std::mt19937_64 rng(32);
  const FeatureMap f = oracle::random_features(rng, 5, 6, 5, 3);
  EXPECT_EQ(cluster_semantic(f, 12, 10, 4, 9), cluster_semantic(f, 12, 10, 4, 9));
}

TEST(NonlocalTest, IdenticalColorsGetFullWeight) {
  LabImage s(3, 1);
  s[0].data = {50.0f, 20.0f, 50.0f};
  s[1].data = {10.0f, -5.0f, 10.0f};
  const NonlocalGraph g = build_nonlocal(s, {0, 1, 0}, 8);
  ASSERT_EQ(g.end(0) - g.begin(0), 1);
  EXPECT_EQ(g.neighbors[g.begin(0)], 2);
  EXPECT_FLOAT_EQ(g.weights[g.begin(0)], static_cast<float>(std::exp(1.0) / 8));
  EXPECT_EQ(g.end(1) - g.begin(1), 0);
}

TEST(NonlocalTest, MatchesBruteForceKnn) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    LabImage s = oracle::random_lab(rng, 8, 4);
    // Duplicate some colors so ties occur.
    for (int c = 0; c < 3; ++c) {
      s[c].data[5] = s[c].data[1];
      s[c].data[9] = s[c].data[1];
    }
    std::vector<int> clusters(32);
    for (int i = 0; i < 32; ++i) clusters[i] = i % 2;  // two clusters of 16
    const int k = 3;
    const NonlocalGraph g = build_nonlocal(s, clusters, k);
    const auto unit = to_unit_planes(s);
    for (int p = 0; p < 32; ++p) {
      std::vector<std::pair<double, int>> all;
      for (int q = 0; q < 32; ++q) {
        if (q == p || clusters[q] != clusters[p]) continue;
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d += std::pow(unit[c].data[p] - unit[c].data[q], 2.0);
        all.emplace_back(d, q);
      }
      std::sort(all.begin(), all.end());
      ASSERT_EQ(g.end(p) - g.begin(p), k);
      for (int j = 0; j < k; ++j) {
        EXPECT_EQ(g.neighbors[g.begin(p) + j], all[j].second);
        EXPECT_NEAR(g.weights[g.begin(p) + j], std::exp(1.0 - all[j].first) / k, 1e-6);
      }
    }
  }
}

TEST(NonlocalTest, NeighborsShareClusterAndExcludeSelf) {
  std::mt19937_64 rng(34);
  const LabImage s = oracle::random_lab(rng, 10, 10);
  std::vector<int> clusters(100);
  for (int i = 0; i < 100; ++i) clusters[i] = (i * 7) % 5;
  const NonlocalGraph g = build_nonlocal(s, clusters, 8);
  for (int p = 0; p < 100; ++p) {
    EXPECT_EQ(g.end(p) - g.begin(p), 8);
    for (int j = g.begin(p); j < g.end(p); ++j) {
      EXPECT_NE(g.neighbors[j], p);
      EXPECT_EQ(clusters[g.neighbors[j]], clusters[p]);
      EXPECT_GE(g.weights[j], 0.0f);
    }
  }
}

TEST(ChannelSystemTest, MatchesTermByTermAssemblyAndDirectEnergy) {
  const TransferParams prm;
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 3; ++trial) {
    const auto inst = oracle::random_transfer(rng, 5, 4, prm);
    double direct_total = 0.0;
    for (int c = 0; c < 3; ++c) {
      const ChannelSystem sys(inst.source, inst.guide, inst.graph, inst.level, prm, c);
      const auto q = oracle::transfer_quadratic(inst.source, inst.guide, inst.graph, inst.level, prm, c);
      const Eigen::MatrixXd h(sys.hessian());
      EXPECT_LE((h - q.h).cwiseAbs().maxCoeff(), 1e-6 * q.h.cwiseAbs().maxCoeff());
      EXPECT_LE((sys.rhs() - q.c).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, q.c.cwiseAbs().maxCoeff()));
      const Eigen::VectorXd x = pack_channel(inst.init, c);
      EXPECT_NEAR(sys.energy(x), q.energy(x), 1e-6 * std::abs(q.energy(x)));
      direct_total += sys.energy(x);
    }
    const double direct = transfer_energy(inst.source, inst.guide, inst.init, inst.graph, inst.level, prm);
    EXPECT_NEAR(direct, direct_total, 1e-8 * direct);
  }
}

TEST(ChannelSystemTest, GradientMatchesFiniteDifferences) {
  const TransferParams prm;
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 3; ++trial) {
    const auto inst = oracle::random_transfer(rng, 6, 6, prm);
    for (int c = 0; c < 3; ++c) {
      const ChannelSystem sys(inst.source, inst.guide, inst.graph, inst.level, prm, c);
      const auto q = oracle::transfer_quadratic(inst.source, inst.guide, inst.graph, inst.level, prm, c);
      const Eigen::VectorXd x = pack_channel(inst.init, c);
      Eigen::VectorXd fd(x.size());
      for (int k = 0; k < x.size(); ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[k]));
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        fd[k] = (q.energy(xp) - q.energy(xm)) / (2.0 * h);
      }
      EXPECT_LE((sys.gradient(x) - fd).norm(), 1e-4 * fd.norm());
    }
  }
}

TEST(SolveTransferTest, DataOnlySystemFitsGuidePerPixel) {
  TransferParams prm;
  prm.lambda_l = 0.0;
  prm.lambda_nl = 0.0;
  std::mt19937_64 rng(37);
  LabImage s = oracle::random_lab(rng, 4, 4);
  Guidance g;
  g.image = oracle::random_lab(rng, 4, 4);
  g.error = Plane(4, 4, 0.0f);
  const NonlocalGraph graph = build_nonlocal(s, std::vector<int>(16, 0), 0);
  const TransferField x = solve_transfer(s, g, init_transfer(s, g.image), graph, 2, prm);
  const auto su = to_unit_planes(s);
  const auto gu = to_unit_planes(g.image);
  for (int c = 0; c < 3; ++c) {
    for (int p = 0; p < 16; ++p) {
      // The per-pixel 2x2 normal equations are rank one; any solution maps s onto g.
      EXPECT_NEAR(x.a[c].data[p] * su[c].data[p] + x.b[c].data[p], gu[c].data[p], 1e-4);
    }
  }
}

TEST(SolveTransferTest, MatchesDenseSolveAndNeverIncreasesEnergy) {
  const TransferParams prm;
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 3; ++trial) {
    const auto inst = oracle::random_transfer(rng, 16, 16, prm);
    SolveReport rep;
    const TransferField x = solve_transfer(inst.source, inst.guide, inst.init, inst.graph, inst.level, prm, &rep);
    const double e = transfer_energy(inst.source, inst.guide, x, inst.graph, inst.level, prm);
    double e_star = 0.0;
    for (int c = 0; c < 3; ++c) {
      const auto q = oracle::transfer_quadratic(inst.source, inst.guide, inst.graph, inst.level, prm, c);
      e_star += q.energy(q.minimizer());
    }
    EXPECT_LE(std::abs(e - e_star), 1e-3 * e_star);
    EXPECT_LE(e, transfer_energy(inst.source, inst.guide, inst.init, inst.graph, inst.level, prm));
    EXPECT_NEAR(rep.final_energy, e, 1e-9 * e);
  }
}

TEST(SolveTransferTest, RejectsNonFiniteInput) {
  const TransferParams prm;
  std::mt19937_64 rng(39);
  auto inst = oracle::random_transfer(rng, 4, 4, prm);
  inst.init.a[1].data[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(solve_transfer(inst.source, inst.guide, inst.init, inst.graph, inst.level, prm), SolverError);
}

// Dense (I + lambda A) x = s with A assembled from edge weights.
Eigen::VectorXd dense_wls(const Plane& s, const Plane& g, double lambda, double alpha, double eps) {
  const int w = s.width, h = s.height, n = w * h;
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      const int nb[2][2] = {{x + 1, y}, {x, y + 1}};
      for (const auto& d : nb) {
        if (d[0] >= w || d[1] >= h) continue;
        const int q = d[1] * w + d[0];
        const double wt = lambda / (std::pow(std::abs(g.data[p] - g.data[q]), alpha) + eps);
        m(p, p) += wt;
        m(q, q) += wt;
        m(p, q) -= wt;
        m(q, p) -= wt;
      }
    }
  }
  Eigen::VectorXd rhs(n);
  for (int p = 0; p < n; ++p) rhs[p] = s.data[p];
  return m.ldlt().solve(rhs);
}

TEST(WlsFilterTest, MatchesDenseSolveAndPreservesMean) {
  std::mt19937_64 rng(40);
  const Plane s = oracle::random_plane(rng, 8, 8);
  const Plane g = oracle::random_plane(rng, 8, 8);
  const Plane out = wls_filter(s, g, 0.024, 1.2, 1e-4);
  const Eigen::VectorXd want = dense_wls(s, g, 0.024, 1.2, 1e-4);
  for (int p = 0; p < 64; ++p) EXPECT_NEAR(out.data[p], want[p], 1e-4);
  const double m0 = std::accumulate(s.data.begin(), s.data.end(), 0.0) / 64;
  const double m1 = std::accumulate(out.data.begin(), out.data.end(), 0.0) / 64;
  EXPECT_NEAR(m0, m1, 1e-6);
}

TEST(WlsFilterTest, IdentityAndConstantCases) {
  std::mt19937_64 rng(41);
  const Plane s = oracle::random_plane(rng, 6, 5);
  const Plane g = oracle::random_plane(rng, 6, 5);
  EXPECT_EQ(wls_filter(s, g, 0.0, 1.2, 1e-4), s);
  for (float v : wls_filter(Plane(6, 5, 0.42f), g, 5.0, 1.2, 1e-4).data) EXPECT_NEAR(v, 0.42f, 1e-5);
  EXPECT_THROW(wls_filter(s, Plane(5, 5), 1.0, 1.2, 1e-4), DimensionError);
}

TEST(UpsampleTest, ComposesBilinearAndWls) {
  std::mt19937_64 rng(42);
  TransferField f(4, 4);
  for (int c = 0; c < 3; ++c) {
    f.a[c] = oracle::random_plane(rng, 4, 4, 0.5f, 1.5f);
    f.b[c] = oracle::random_plane(rng, 4, 4, -0.2f, 0.2f);
  }
  const LabImage full = oracle::random_lab(rng, 8, 8);
  const TransferField up = upsample_coefficients(f, full, 0.024);
  const Plane lum = unit_luminance(full);
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd a = dense_wls(resize_bilinear(f.a[c], 8, 8), lum, 0.024, 1.2, 1e-4);
    const Eigen::VectorXd b = dense_wls(resize_bilinear(f.b[c], 8, 8), lum, 0.024, 1.2, 1e-4);
    for (int p = 0; p < 64; ++p) {
      EXPECT_NEAR(up.a[c].data[p], a[p], 1e-4);
      EXPECT_NEAR(up.b[c].data[p], b[p], 1e-4);
    }
  }
}

TEST(UpsampleTest, ConstantFieldAndZeroLambda) {
  std::mt19937_64 rng(43);
  const LabImage full = oracle::random_lab(rng, 10, 6);
  const TransferField up = upsample_coefficients(TransferField(3, 2, 1.3f, -0.1f), full, 0.024);
  for (int c = 0; c < 3; ++c) {
    for (float v : up.a[c].data) EXPECT_NEAR(v, 1.3f, 1e-5);
    for (float v : up.b[c].data) EXPECT_NEAR(v, -0.1f, 1e-5);
  }
  TransferField f(10, 6);
  f.a[1] = oracle::random_plane(rng, 10, 6);
  EXPECT_EQ(upsample_coefficients(f, full, 0.0), f);
}

TEST(ApplyTransferTest, HandEvaluation) {
  std::mt19937_64 rng(44);
  const LabImage s = oracle::random_lab(rng, 5, 3);
  const LabImage same = apply_transfer(TransferField(5, 3), s);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < s[c].size(); ++i) EXPECT_NEAR(same[c].data[i], s[c].data[i], 1e-4);
  }

  const LabImage c = apply_transfer(TransferField(5, 3, 0.0f, 0.25f), s);
  for (float v : c[0].data) EXPECT_NEAR(v, 25.0f, 1e-4);
  for (float v : c[1].data) EXPECT_NEAR(v, 0.25f * 255.0f - 128.0f, 1e-4);

  TransferField f(5, 3);
  for (int ch = 0; ch < 3; ++ch) {
    f.a[ch] = oracle::random_plane(rng, 5, 3, 0.0f, 2.0f);
    f.b[ch] = oracle::random_plane(rng, 5, 3, -0.5f, 0.5f);
  }
  const LabImage out = apply_transfer(f, s);
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < 15; ++i) {
      const double lo = ch == 0 ? 0.0 : -128.0, scale = ch == 0 ? 100.0 : 255.0;
      const double u = (s[ch].data[i] - lo) / scale;
      const double t = std::clamp(f.a[ch].data[i] * u + f.b[ch].data[i], 0.0, 1.0);
      EXPECT_NEAR(out[ch].data[i], lo + scale * t, 1e-3);
    }
  }
  EXPECT_THROW(apply_transfer(TransferField(4, 3), s), DimensionError);
}

TEST(TransferParamsTest, Defaults) {
  const TransferParams p;
  EXPECT_EQ(p.lambda_l, 0.125);
  EXPECT_EQ(p.lambda_nl, 2.0);
  EXPECT_EQ(p.alpha, 1.2);
  EXPECT_EQ(p.eps_w, 0.0001);
  EXPECT_EQ(p.eps_std, 0.002);
  EXPECT_EQ(p.k_clusters, 10);
  EXPECT_EQ(p.k_neighbors, 8);
  EXPECT_EQ(p.patch, 3);
  EXPECT_EQ(p.wls_upsample_lambda, 0.024);
  EXPECT_EQ(p.cg_max_iters, 100);
  EXPECT_EQ(p.cg_rel_tol, 1e-4);
  EXPECT_EQ(data_level_weight(1), 1.0);
  EXPECT_EQ(data_level_weight(5), 256.0);
  EXPECT_NEAR(smoothness_weight(0.0, 1.2, 1e-4), 1e4, 1e-6);
}

}  // namespace
}  // namespace chromaflow
