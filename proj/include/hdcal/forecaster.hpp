#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdcal/errors.hpp"
#include "hdcal/rng.hpp"
#include "hdcal/simplex.hpp"

namespace hdcal {

using Day = std::uint64_t;

inline constexpr std::uint64_t kDefaultDayBudget = std::uint64_t{1} << 26;

inline BigInt pow_big(std::int64_t base, std::int64_t exponent) {
  BigInt out = 1;
  for (std::int64_t i = 0; i < exponent; ++i) out *= base;
  return out;
}

/// Generalized parameters of the hierarchical forecaster. Level l iterates
/// every T_l = S * H^(L - l) days; the horizon is T = S * H^L. The smoothing
/// pseudo-count is the integer m, standing in for 1/epsilon.
struct ForecastConfig {
  std::int64_t d = 2;
  std::int64_t L = 1;
  std::int64_t H = 2;
  std::int64_t S = 1;
  std::int64_t m = 1;

  void validate() const {
    if (d < 2) throw Error(ErrorCode::kConfigInvalid, "d must be >= 2");
    if (L < 1) throw Error(ErrorCode::kConfigInvalid, "L must be >= 1");
    if (H < 2) throw Error(ErrorCode::kConfigInvalid, "H must be >= 2");
    if (S < 1) throw Error(ErrorCode::kConfigInvalid, "S must be >= 1");
    if (m < 1) throw Error(ErrorCode::kConfigInvalid, "m must be >= 1");
  }

  // T_l for l in [0, L]; T_0 is the horizon.
  BigInt iteration_length(std::int64_t level) const {
    if (level < 0 || level > L) throw Error(ErrorCode::kOutOfRange, "level " + std::to_string(level));
    return BigInt(S) * pow_big(H, L - level);
  }
  BigInt horizon() const { return iteration_length(0); }

  double epsilon() const { return 1.0 / static_cast<double>(m); }

  friend bool operator==(const ForecastConfig&, const ForecastConfig&) = default;
};

// m = ceil(1/eps), H = m^4, L = ceil(ln(d) m^2), S = d^3 m^6.
inline ForecastConfig paper_parameters(std::int64_t d, double epsilon,
                                       std::optional<BigInt> day_budget = BigInt(kDefaultDayBudget)) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw Error(ErrorCode::kConfigInvalid, "epsilon must lie in (0,1)");
  if (d < 2) throw Error(ErrorCode::kConfigInvalid, "d must be >= 2");
  ForecastConfig cfg;
  cfg.d = d;
  // 1/eps for eps = 1/k can land a hair above k in floating point.
  cfg.m = static_cast<std::int64_t>(std::ceil(1.0 / epsilon - 1e-9));
  cfg.H = cfg.m * cfg.m * cfg.m * cfg.m;
  cfg.L = static_cast<std::int64_t>(std::ceil(std::log(static_cast<double>(d)) * static_cast<double>(cfg.m * cfg.m) - 1e-9));
  cfg.S = d * d * d * cfg.m * cfg.m * cfg.m * cfg.m * cfg.m * cfg.m;
  cfg.validate();
  if (day_budget && cfg.horizon() > *day_budget) {
    throw Error(ErrorCode::kOverflow, "T = " + cfg.horizon().str() + " exceeds day budget " + day_budget->str());
  }
  return cfg;
}

// (h_1, ..., h_level) with h_r = floor((t-1)/T_r) mod H + 1.
inline std::vector<std::uint64_t> interval_of(Day t, std::int64_t level, const ForecastConfig& cfg) {
  cfg.validate();
  if (level < 1 || level > cfg.L) throw Error(ErrorCode::kOutOfRange, "level " + std::to_string(level));
  if (t < 1 || BigInt(t) > cfg.horizon()) throw Error(ErrorCode::kOutOfRange, "day " + std::to_string(t));
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(level));
  const BigInt offset = BigInt(t - 1);
  for (std::int64_t r = 1; r <= level; ++r) {
    BigInt h = (offset / cfg.iteration_length(r)) % cfg.H;
    out.push_back(static_cast<std::uint64_t>(h) + 1);
  }
  return out;
}

// Smoothed empirical frequency for iteration `iteration` of a level with
// iteration length T_l, given outcome counts over the earlier iterations:
//   (d * C_i + m * T_l) / (d * (iteration - 1 + m) * T_l).
inline RationalDist smoothed_prediction(std::span<const std::uint64_t> counts, std::uint64_t iteration,
                                        const BigInt& iteration_length, std::int64_t m) {
  const std::size_t d = counts.size();
  const BigInt smoothing = BigInt(m) * iteration_length;
  std::vector<BigInt> nums(d);
  for (std::size_t i = 0; i < d; ++i) nums[i] = BigInt(d) * counts[i] + smoothing;
  BigInt den = BigInt(d) * (BigInt(iteration) - 1 + m) * iteration_length;
  return RationalDist::make(std::move(nums), std::move(den));
}

struct LevelState {
  std::int64_t level = 1;
  std::vector<std::uint64_t> counts;
  std::uint64_t iteration = 1;  // h_l, 1-based
  RationalDist prediction;
  KeyId key = 0;
};

inline RationalDist predict_level(const LevelState& state, const ForecastConfig& cfg) {
  const BigInt t_level = cfg.iteration_length(state.level);
  if (state.counts.size() != static_cast<std::size_t>(cfg.d)) {
    throw Error(ErrorCode::kDimensionMismatch, "counts length != d");
  }
  if (state.iteration < 1) throw Error(ErrorCode::kInconsistentCounts, "iteration must be >= 1");
  BigInt total = 0;
  for (auto c : state.counts) total += c;
  if (total != BigInt(state.iteration - 1) * t_level) {
    throw Error(ErrorCode::kInconsistentCounts,
                "counts sum " + total.str() + " != (h-1)*T_l at h=" + std::to_string(state.iteration));
  }
  return smoothed_prediction(state.counts, state.iteration, t_level, cfg.m);
}

struct MixtureEntry {
  KeyId key = 0;
  std::uint32_t count = 0;  // weight is count / weight_den

  friend bool operator==(const MixtureEntry&, const MixtureEntry&) = default;
};

/// The day-t prediction distribution: weight 1/L per level, equal keys merged.
struct MixtureRecord {
  Day t = 0;
  std::vector<MixtureEntry> entries;  // sorted by key
  std::uint32_t weight_den = 1;
};

// Merge (key, count) pairs into sorted, de-duplicated entries.
inline std::vector<MixtureEntry> merge_entries(std::vector<MixtureEntry> raw) {
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  std::vector<MixtureEntry> out;
  for (const auto& e : raw) {
    if (e.count == 0) continue;
    if (!out.empty() && out.back().key == e.key) {
      out.back().count += e.count;
    } else {
      out.push_back(e);
    }
  }
  return out;
}

inline KeyId sample_prediction(std::span<const MixtureEntry> entries, std::uint32_t weight_den, RngStream& rng) {
  if (entries.empty()) throw Error(ErrorCode::kMissingMixture, "empty mixture");
  if (entries.size() == 1) {
    // Consume a draw regardless so stream positions do not depend on the mixture shape.
    rng.next_u64();
    return entries.front().key;
  }
  std::uint64_t u = rng.uniform_below(weight_den);
  for (const auto& e : entries) {
    if (u < e.count) return e.key;
    u -= e.count;
  }
  throw Error(ErrorCode::kInvalidArgument, "mixture weights do not sum to weight_den");
}

inline KeyId sample_prediction(const MixtureRecord& mixture, RngStream& rng) {
  return sample_prediction(mixture.entries, mixture.weight_den, rng);
}

/// The L-level hierarchical forecaster. Feed outcomes in day order with
/// observe(); mixture() describes the prediction distribution for next_day().
class HierarchicalForecaster {
 public:
  HierarchicalForecaster(ForecastConfig cfg, KeyTable& keys, std::uint64_t day_budget = kDefaultDayBudget)
      : cfg_(cfg), keys_(&keys) {
    cfg_.validate();
    const BigInt horizon = cfg_.horizon();
    if (horizon > BigInt(day_budget)) {
      throw Error(ErrorCode::kBudgetExceeded, "T = " + horizon.str() + " exceeds day budget " + std::to_string(day_budget));
    }
    lengths_.resize(static_cast<std::size_t>(cfg_.L) + 1);
    for (std::int64_t l = 0; l <= cfg_.L; ++l) {
      lengths_[static_cast<std::size_t>(l)] = static_cast<std::uint64_t>(cfg_.iteration_length(l));
    }
    levels_.resize(static_cast<std::size_t>(cfg_.L));
    for (std::int64_t l = 1; l <= cfg_.L; ++l) {
      auto& s = levels_[static_cast<std::size_t>(l - 1)];
      s.level = l;
      s.counts.assign(static_cast<std::size_t>(cfg_.d), 0);
      s.iteration = 1;
      refresh(s);
    }
  }

  const ForecastConfig& config() const { return cfg_; }
  std::uint64_t horizon() const { return lengths_[0]; }
  std::uint64_t iteration_length(std::int64_t level) const { return lengths_.at(static_cast<std::size_t>(level)); }
  Day next_day() const { return next_day_; }
  bool finished() const { return next_day_ > horizon(); }
  std::span<const LevelState> levels() const { return levels_; }
  const KeyTable& keys() const { return *keys_; }

  MixtureRecord mixture() const {
    MixtureRecord rec;
    rec.t = next_day_;
    rec.weight_den = static_cast<std::uint32_t>(cfg_.L);
    std::vector<MixtureEntry> raw;
    raw.reserve(levels_.size());
    for (const auto& s : levels_) raw.push_back({s.key, 1});
    rec.entries = merge_entries(std::move(raw));
    return rec;
  }

  void observe(Outcome x, Day t) {
    if (t != next_day_) {
      throw Error(ErrorCode::kOutOfOrderDay, "expected day " + std::to_string(next_day_) + ", got " + std::to_string(t));
    }
    if (finished()) throw Error(ErrorCode::kOutOfRange, "run already complete");
    if (x.index < 1 || x.index > static_cast<std::size_t>(cfg_.d)) {
      throw Error(ErrorCode::kOutOfRange, "outcome index out of range");
    }
    for (auto& s : levels_) {
      s.counts[x.index - 1] += 1;
      const std::size_t l = static_cast<std::size_t>(s.level);
      if (t % lengths_[l] != 0) continue;
      if (t % lengths_[l - 1] == 0) {
        std::fill(s.counts.begin(), s.counts.end(), 0);
        s.iteration = 1;
      } else {
        s.iteration += 1;
      }
      refresh(s);
    }
    ++next_day_;
  }

 private:
  void refresh(LevelState& s) {
    s.prediction = predict_level(s, cfg_);
    s.key = keys_->intern(s.prediction);
  }

  ForecastConfig cfg_;
  KeyTable* keys_;
  std::vector<std::uint64_t> lengths_;
  std::vector<LevelState> levels_;
  Day next_day_ = 1;
};

}  // namespace hdcal
