#include "chromaflow/multiref.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "chromaflow/error.h"
#include "oracles.h"

namespace chromaflow {
namespace {

struct Instance {
  std::vector<Plane> errors;
  std::vector<LabImage> cands;
  std::vector<FeatureMap> feats;
  int level = 3;
  MergeInputs inputs() const { return {errors, cands, feats, level}; }
};

Instance random_instance(std::mt19937_64& rng, int w, int h, int n) {
  Instance in;
  in.level = std::uniform_int_distribution<int>(1, 5)(rng);
  for (int i = 0; i < n; ++i) {
    in.errors.push_back(oracle::random_plane(rng, w, h, 0.0f, 2.0f));
    in.cands.push_back(oracle::random_lab(rng, w, h));
    in.feats.push_back(oracle::random_features(rng, in.level, w, h, 4));
  }
  return in;
}

TEST(MergeParamsTest, DefaultsAndLevelWeights) {
  const MergeParams p;
  EXPECT_EQ(p.beta_c, 0.2);
  EXPECT_EQ(p.beta_l, 0.08);
  EXPECT_EQ(p.hist_bins, 8);
  EXPECT_EQ(MergeParams::omega_e(5), 1.0);
  EXPECT_EQ(MergeParams::omega_e(1), 1.0 / 256.0);
  EXPECT_EQ(MergeParams::omega_c(3), 1.0 / 16.0);
  EXPECT_EQ(MergeParams::omega_l(1), 1.0 / 16.0);
}

TEST(MajorityColorTest, DensestBinMeanWithLowBinTieBreak) {
  std::vector<LabImage> cands(3, LabImage(1, 1));
  // L in unit range: 0.10, 0.12, 0.90 -> bins 0, 0, 7 with 8 bins.
  cands[0][0].data[0] = 10.0f;
  cands[1][0].data[0] = 12.0f;
  cands[2][0].data[0] = 90.0f;
  // a: one candidate per bin, so the lowest bin wins the tie.
  cands[0][1].data[0] = 100.0f;
  cands[1][1].data[0] = -100.0f;
  cands[2][1].data[0] = 0.0f;
  const auto m = majority_color(cands, 0, 0, 8);
  EXPECT_NEAR(m[0], 0.11f, 1e-6);
  EXPECT_NEAR(m[1], 28.0f / 255.0f, 1e-6);
  EXPECT_NEAR(m[2], 128.0f / 255.0f, 1e-6);
}

TEST(MajorityColorTest, MatchesDirectHistogram) {
  std::mt19937_64 rng(51);
  std::vector<LabImage> cands;
  for (int i = 0; i < 6; ++i) cands.push_back(oracle::random_lab(rng, 10, 10));
  for (auto& img : cands) {
    for (int c = 0; c < 3; ++c) {
      for (float& v : img[c].data) v = std::round(v / 25.0f) * 25.0f;
    }
  }
  for (int i = 0; i < 100; ++i) {
    const int x = i % 10, y = (i * 7) % 10;
    const auto m = majority_color(cands, x, y, 8);
    const auto o = oracle::majority(cands, x, y, 8);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(m[c], o[c], 1e-6);
  }
}

TEST(MrfEnergyTest, MatchesTermByTermEvaluation) {
  std::mt19937_64 rng(52);
  const MergeParams prm;
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(rng, 5, 4, 3);
    LabelMap labels(5, 4);
    for (int& l : labels.label) l = std::uniform_int_distribution<int>(0, 2)(rng);
    const double want = oracle::label_energy(labels.label, in.errors, in.cands, in.feats, in.level, prm);
    EXPECT_NEAR(mrf_energy(labels, in.inputs(), prm), want, 1e-7 * want);
  }
}

TEST(MrfEnergyTest, RejectsBadLabels) {
  std::mt19937_64 rng(53);
  const auto in = random_instance(rng, 3, 3, 2);
  EXPECT_THROW(mrf_energy(LabelMap(3, 3, 2), in.inputs(), {}), std::out_of_range);
  EXPECT_THROW(mrf_energy(LabelMap(3, 2), in.inputs(), {}), DimensionError);
  auto bad = in;
  bad.errors.pop_back();
  EXPECT_THROW(solve_labels(bad.inputs(), {}), DimensionError);
}

TEST(SolveLabelsTest, WithinFivePercentOfBruteForce) {
  std::mt19937_64 rng(54);
  const MergeParams prm;
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(rng, 3, 3, 3);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> lab(9);
    for (int code = 0; code < 19683; ++code) {
      for (int p = 0, v = code; p < 9; ++p, v /= 3) lab[p] = v % 3;
      best = std::min(best, oracle::label_energy(lab, in.errors, in.cands, in.feats, in.level, prm));
    }
    LabelSolveReport rep;
    const LabelMap out = solve_labels(in.inputs(), prm, &rep);
    const double e = oracle::label_energy(out.label, in.errors, in.cands, in.feats, in.level, prm);
    EXPECT_LE(e, 1.05 * best);
    EXPECT_LE(rep.final_energy, rep.initial_energy);
    EXPECT_NEAR(rep.final_energy, e, 1e-7 * e);
  }
}

TEST(SolveLabelsTest, StrongerSmoothnessStillDescends) {
  std::mt19937_64 rng(55);
  MergeParams prm;
  prm.beta_l = 5.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(rng, 6, 5, 4);
    LabelSolveReport rep;
    const LabelMap out = solve_labels(in.inputs(), prm, &rep);
    EXPECT_LE(mrf_energy(out, in.inputs(), prm), rep.initial_energy);
    EXPECT_GE(rep.sweeps, 1);
  }
}

TEST(SolveLabelsTest, SingleAndDuplicateCandidates) {
  std::mt19937_64 rng(56);
  auto in = random_instance(rng, 4, 4, 1);
  EXPECT_EQ(solve_labels(in.inputs(), {}), LabelMap(4, 4, 0));
  in.errors.push_back(in.errors[0]);
  in.cands.push_back(in.cands[0]);
  in.feats.push_back(in.feats[0]);
  EXPECT_EQ(solve_labels(in.inputs(), {}), LabelMap(4, 4, 0));
}

TEST(SolveLabelsTest, ClearlyBetterCandidateWins) {
  std::mt19937_64 rng(57);
  auto in = random_instance(rng, 6, 6, 2);
  in.errors[0] = Plane(6, 6, 0.0f);
  in.errors[1] = Plane(6, 6, 4.0f);
  in.level = 5;
  const LabelMap out = solve_labels(in.inputs(), {});
  EXPECT_EQ(out, LabelMap(6, 6, 0));
}

TEST(MergeGuidanceTest, SelectsPointwise) {
  std::mt19937_64 rng(58);
  std::vector<Guidance> cands(3);
  for (auto& g : cands) {
    g.image = oracle::random_lab(rng, 3, 2);
    g.features = oracle::random_features(rng, 2, 3, 2, 2);
    g.raw_error = oracle::random_plane(rng, 3, 2);
    g.error = oracle::random_plane(rng, 3, 2);
  }
  LabelMap labels(3, 2);
  labels.label = {0, 1, 2, 2, 1, 0};
  const Guidance m = merge_guidance(labels, cands);
  for (int p = 0; p < 6; ++p) {
    const Guidance& src = cands[labels.label[p]];
    for (int c = 0; c < 3; ++c) EXPECT_EQ(m.image[c].data[p], src.image[c].data[p]);
    for (int c = 0; c < 2; ++c) EXPECT_EQ(m.features.data[p * 2 + c], src.features.data[p * 2 + c]);
    EXPECT_EQ(m.raw_error.data[p], src.raw_error.data[p]);
    EXPECT_EQ(m.error.data[p], src.error.data[p]);
  }
  labels.label[0] = 3;
  EXPECT_THROW(merge_guidance(labels, cands), std::out_of_range);
}

}  // namespace
}  // namespace chromaflow
