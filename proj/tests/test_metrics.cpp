#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "test_support.hpp"

namespace hdcal {
namespace {

// Plain double evaluation of sum_p sum_i |sum_t (p_i - X_t,i) mu_t(p)|.
double naive_dce(const Transcript& tr) {
  std::map<KeyId, std::vector<double>> acc;
  for (const auto& rec : tr.days()) {
    for (const auto& e : tr.mixture(rec)) {
      auto& v = acc[e.key];
      v.resize(tr.dim(), 0.0);
      const double w = static_cast<double>(e.count) / static_cast<double>(tr.weight_den());
      const auto p = test::as_doubles(tr.keys().dist(e.key));
      for (std::size_t i = 0; i < tr.dim(); ++i) v[i] += (p[i] - (rec.outcome.index == i + 1 ? 1.0 : 0.0)) * w;
    }
  }
  double total = 0.0;
  for (const auto& [k, v] : acc) {
    for (double x : v) total += std::abs(x);
  }
  return total;
}

Transcript mixture_transcript(std::size_t d, std::uint32_t den, const std::vector<std::vector<std::pair<RationalDist, std::uint32_t>>>& days,
                              const std::vector<std::size_t>& outcomes) {
  Transcript tr(d, den);
  for (std::size_t t = 0; t < days.size(); ++t) {
    std::vector<MixtureEntry> raw;
    for (const auto& [p, c] : days[t]) raw.push_back({tr.keys().intern(p), c});
    tr.append(merge_entries(std::move(raw)), std::nullopt, Outcome{outcomes[t]});
  }
  return tr;
}

TEST(Dce, PerfectPrediction) {
  const auto tr = test::point_mass_transcript({RationalDist::point_mass(2, 1)}, {1});
  EXPECT_EQ(dce(tr), 0.0);
  EXPECT_EQ(oracle_dce_direct(tr), 0.0);
}

TEST(Dce, BalancedOutcomes) {
  const auto half = RationalDist::uniform(2);
  const auto tr = test::point_mass_transcript({half, half}, {1, 2});
  EXPECT_EQ(dce(tr), 0.0);
  EXPECT_EQ(oracle_dce_direct(tr), 0.0);
}

TEST(Dce, SplitMassHandExample) {
  // 1/2 ((1,0) - (1,0)) and 1/2 ((0,1) - (1,0)): 0 + (1/2 + 1/2) = 1
  const auto tr = mixture_transcript(2, 2, {{{RationalDist::point_mass(2, 1), 1}, {RationalDist::point_mass(2, 2), 1}}}, {1});
  EXPECT_EQ(dce(tr), 1.0);
  EXPECT_EQ(oracle_dce_direct(tr), 1.0);
  EXPECT_EQ(dce_exact(tr), 1);
}

TEST(Dce, MissingMixtureRejected) {
  Transcript tr(2, 1);
  tr.append({}, std::nullopt, Outcome{1});
  EXPECT_EQ(test::thrown_code([&] { dce(tr); }), ErrorCode::kMissingMixture);
}

TEST(Dce, MatchesIndependentOraclesOnRandomTranscripts) {
  auto rng = derive_stream(17, StreamRole::kGenerator, 0);
  for (int c = 0; c < 100; ++c) {
    const auto tr = random_transcript(rng, 16, 4, 3, 6);
    const double fast = dce(tr);
    EXPECT_NEAR(fast, oracle_dce_direct(tr), 1e-12);
    EXPECT_NEAR(fast, naive_dce(tr), 1e-12);
    EXPECT_NEAR(fast, static_cast<double>(dce_exact(tr)), 1e-12);
  }
}

TEST(Dce, MatchesOracleOnTinyRun) {
  const auto cfg = test::run_config(2, 2, 2, 1, 1);
  const auto tr = run_protocol(cfg, 0);
  ASSERT_EQ(tr.size(), 4u);
  EXPECT_NEAR(dce(tr), oracle_dce_direct(tr), 1e-12);
  EXPECT_NEAR(dce(tr), naive_dce(tr), 1e-12);
}

TEST(EceTrajectory, Examples) {
  const auto half = RationalDist::uniform(2);
  EXPECT_EQ(ece_trajectory(test::point_mass_transcript({RationalDist::point_mass(2, 2), RationalDist::point_mass(2, 1)}, {2, 1})), 0.0);
  EXPECT_EQ(ece_trajectory(test::point_mass_transcript({half}, {1})), 1.0);
  EXPECT_EQ(ece_trajectory(test::point_mass_transcript({half, half}, {1, 2})), 0.0);
}

TEST(EceTrajectory, MissingRealizedPrediction) {
  const auto tr = mixture_transcript(2, 1, {{{RationalDist::uniform(2), 1}}}, {1});
  EXPECT_EQ(test::thrown_code([&] { ece_trajectory(tr); }), ErrorCode::kMissingRealizedPrediction);
}

TEST(DceRestricted, Examples) {
  const auto half = RationalDist::uniform(2);
  const auto tr = test::point_mass_transcript({half}, {1});
  RestrictionSpec spec{{1}, {canonical_key(half)}, {1, 2}};
  EXPECT_EQ(dce_restricted(tr, spec), 1.0);
  EXPECT_EQ(dce_restricted(tr, RestrictionSpec{{1}, {}, {1, 2}}), 0.0);
  EXPECT_EQ(dce_restricted(tr, RestrictionSpec{{1}, {canonical_key(half)}, {}}), 0.0);
  RestrictionSpec bad{{2}, {canonical_key(half)}, {1}};
  EXPECT_EQ(test::thrown_code([&] { dce_restricted(tr, bad); }), ErrorCode::kOutOfRange);
}

TEST(DceRestricted, PropertiesOnRandomTranscripts) {
  auto rng = derive_stream(23, StreamRole::kGenerator, 0);
  for (int c = 0; c < 60; ++c) {
    const auto tr = random_transcript(rng, 12, 4, 3, 6);
    const auto full = full_restriction(tr);
    const double total = dce(tr);
    EXPECT_NEAR(dce_restricted(tr, full), total, 1e-12);

    // Coordinates split exactly.
    double by_coord = 0.0;
    for (std::size_t i = 1; i <= tr.dim(); ++i) by_coord += dce_restricted(tr, RestrictionSpec{full.days, full.predictions, {i}});
    EXPECT_NEAR(by_coord, total, 1e-12);

    // Dropping prediction values can only shrink the sum.
    auto fewer = full;
    if (fewer.predictions.size() > 1) fewer.predictions.erase(fewer.predictions.begin());
    EXPECT_LE(dce_restricted(tr, fewer), total + 1e-12);

    // Splitting the days is subadditive.
    RestrictionSpec first = full, second = full;
    first.days.clear();
    second.days.clear();
    for (Day t : full.days) (t % 2 ? first : second).days.insert(t);
    EXPECT_LE(total, dce_restricted(tr, first) + dce_restricted(tr, second) + 1e-12);
  }
}

TEST(EceEstimate, DeterministicMixtureHasNoSamplingError) {
  // One level: every day's mixture is a single key, so trials differ only in
  // their sampling streams and all give the same trajectory.
  const auto base = run_protocol(test::run_config(2, 1, 4, 2, 1), 0);
  const auto est = ece_estimate(
      [&](std::uint64_t trial) {
        auto rng = derive_stream(99, StreamRole::kForecaster, trial);
        return with_sampled_predictions(base, rng);
      },
      8);
  EXPECT_EQ(est.std_error, 0.0);
  auto rng = derive_stream(1234, StreamRole::kForecaster, 0);
  EXPECT_EQ(est.mean, ece_trajectory(with_sampled_predictions(base, rng)));
}

TEST(EceEstimate, RejectsSingleTrial) {
  EXPECT_EQ(test::thrown_code([] { ece_estimate([](std::uint64_t) { return Transcript(2, 1); }, 1); }), ErrorCode::kInvalidArgument);
}

TEST(EceEstimate, MatchesExhaustiveExpectation) {
  auto gen = derive_stream(31, StreamRole::kGenerator, 0);
  for (std::uint64_t c = 0; c < 4; ++c) {
    const auto tr = random_transcript(gen, 10, 2, 2, 4);
    const double exact = exhaustive_expected_ece(tr);
    const auto est = ece_estimate(
        [&](std::uint64_t trial) {
          auto rng = derive_stream(31, StreamRole::kForecaster, (c << 32) | trial);
          return with_sampled_predictions(tr, rng);
        },
        2000);
    const double slack = 3.0 * est.std_error + 1e-12;
    EXPECT_LE(std::abs(est.mean - exact), slack) << "case " << c;
    // Jensen: E[ECE] >= DCE.
    EXPECT_GE(exact, dce(tr) - 1e-12);
  }
}

TEST(EceEstimate, StdErrorShrinksWithTrials) {
  auto gen = derive_stream(37, StreamRole::kGenerator, 0);
  Transcript tr = random_transcript(gen, 10, 2, 2, 4);
  while (true) {
    bool mixed = false;
    for (const auto& rec : tr.days()) mixed |= rec.mix_size > 1;
    if (mixed) break;
    tr = random_transcript(gen, 10, 2, 2, 4);
  }
  auto run = [&](std::size_t trials, std::uint64_t salt) {
    return ece_estimate(
        [&](std::uint64_t trial) {
          auto rng = derive_stream(salt, StreamRole::kForecaster, trial);
          return with_sampled_predictions(tr, rng);
        },
        trials);
  };
  const double ratio = run(500, 1).std_error / run(2000, 2).std_error;
  EXPECT_GT(ratio, 1.6);
  EXPECT_LT(ratio, 2.5);
}

TEST(ExhaustiveEce, JensenOnHierarchicalRuns) {
  auto cfg = test::run_config(2, 2, 2, 1, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto tr = run_protocol(cfg, 0);
    EXPECT_GE(exhaustive_expected_ece(tr), dce(tr) - 1e-12);
  }
}

}  // namespace
}  // namespace hdcal
