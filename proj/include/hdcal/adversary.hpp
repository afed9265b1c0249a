#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdcal/errors.hpp"
#include "hdcal/forecaster.hpp"
#include "hdcal/rng.hpp"
#include "hdcal/simplex.hpp"

namespace hdcal {

/// Recursive hard sequence over d = R^2 K outcomes and T = K^(R-1) days.
/// Block D_r holds coordinates (r-1)(d/R)+1 .. r(d/R); sub-block D_{r,k}
/// holds the R coordinates (r-1)(d/R)+(k-1)R+1 .. (r-1)(d/R)+kR.
struct HardSeqConfig {
  std::int64_t R = 2;
  std::int64_t K = 1;

  void validate() const {
    if (R < 2) throw Error(ErrorCode::kConfigInvalid, "R must be >= 2");
    if (K < 1) throw Error(ErrorCode::kConfigInvalid, "K must be >= 1");
    if (pow_big(K, R - 1) > BigInt(kDefaultDayBudget)) {
      throw Error(ErrorCode::kBudgetExceeded, "K^(R-1) exceeds the day budget");
    }
  }

  std::int64_t d() const { return R * R * K; }
  std::int64_t block_size() const { return R * K; }  // |D_r| = d / R
  std::uint64_t horizon() const { return static_cast<std::uint64_t>(pow_big(K, R - 1)); }

  // 1-based coordinate of the j-th element of D_{r,k}.
  std::int64_t coordinate(std::int64_t r, std::int64_t k, std::int64_t j) const {
    return (r - 1) * block_size() + (k - 1) * R + j;
  }
  std::int64_t block_first(std::int64_t r) const { return (r - 1) * block_size() + 1; }
  std::int64_t block_last(std::int64_t r) const { return r * block_size(); }
  std::int64_t subblock_first(std::int64_t r, std::int64_t k) const { return coordinate(r, k, 1); }
  std::int64_t subblock_last(std::int64_t r, std::int64_t k) const { return coordinate(r, k, R); }
};

// eps_r = (1/R)^(6(R - r + 1)).
struct EpsSchedule {
  std::int64_t R = 2;

  BigRational exact(std::int64_t r) const {
    if (r < 1 || r > R) throw Error(ErrorCode::kOutOfRange, "eps index " + std::to_string(r));
    return BigRational(BigInt(1), pow_big(R, 6 * (R - r + 1)));
  }
  double operator()(std::int64_t r) const { return static_cast<double>(exact(r)); }
};

/// tau_{k_{<=r}} in [R] for every prefix k_{<=r} in [K]^r, r in [R-1].
class TauTree {
 public:
  TauTree() = default;
  TauTree(HardSeqConfig cfg, std::vector<std::vector<std::uint32_t>> levels) : cfg_(cfg), levels_(std::move(levels)) {
    if (levels_.size() != static_cast<std::size_t>(cfg_.R - 1)) {
      throw Error(ErrorCode::kMissingTauEntry, "tau tree needs R-1 levels");
    }
    std::uint64_t width = 1;
    for (std::size_t r = 0; r < levels_.size(); ++r) {
      width *= static_cast<std::uint64_t>(cfg_.K);
      if (levels_[r].size() != width) throw Error(ErrorCode::kMissingTauEntry, "level " + std::to_string(r + 1) + " has wrong width");
      for (auto tau : levels_[r]) {
        if (tau < 1 || tau > static_cast<std::uint32_t>(cfg_.R)) throw Error(ErrorCode::kOutOfRange, "tau outside [R]");
      }
    }
  }

  const HardSeqConfig& config() const { return cfg_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.size();
    return n;
  }

  // prefix holds 1-based k_1..k_r.
  std::uint32_t at(std::span<const std::uint64_t> prefix) const {
    if (prefix.empty() || prefix.size() > levels_.size()) {
      throw Error(ErrorCode::kMissingTauEntry, "no tau for prefix of length " + std::to_string(prefix.size()));
    }
    std::uint64_t index = 0;
    for (auto k : prefix) {
      if (k < 1 || k > static_cast<std::uint64_t>(cfg_.K)) throw Error(ErrorCode::kMissingTauEntry, "prefix entry outside [K]");
      index = index * static_cast<std::uint64_t>(cfg_.K) + (k - 1);
    }
    return levels_[prefix.size() - 1][index];
  }

  const std::vector<std::vector<std::uint32_t>>& levels() const { return levels_; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"R", cfg_.R}, {"K", cfg_.K}, {"tau", levels_}};
  }

  static TauTree from_json(const nlohmann::json& j) {
    HardSeqConfig cfg{j.at("R").get<std::int64_t>(), j.at("K").get<std::int64_t>()};
    cfg.validate();
    return TauTree(cfg, j.at("tau").get<std::vector<std::vector<std::uint32_t>>>());
  }

  friend bool operator==(const TauTree& a, const TauTree& b) {
    return a.cfg_.R == b.cfg_.R && a.cfg_.K == b.cfg_.K && a.levels_ == b.levels_;
  }

 private:
  HardSeqConfig cfg_;
  std::vector<std::vector<std::uint32_t>> levels_;
};

inline TauTree sample_tau_tree(const HardSeqConfig& cfg, RngStream& rng) {
  cfg.validate();
  std::vector<std::vector<std::uint32_t>> levels;
  std::uint64_t width = 1;
  for (std::int64_t r = 1; r < cfg.R; ++r) {
    width *= static_cast<std::uint64_t>(cfg.K);
    std::vector<std::uint32_t> level(width);
    for (auto& tau : level) tau = static_cast<std::uint32_t>(rng.uniform_below(static_cast<std::uint64_t>(cfg.R)) + 1);
    levels.push_back(std::move(level));
  }
  return TauTree(cfg, std::move(levels));
}

// Day t <-> (k_1, ..., k_{R-1}) in lexicographic order, k_1 most significant.
inline std::vector<std::uint64_t> day_tuple(Day t, const HardSeqConfig& cfg) {
  cfg.validate();
  if (t < 1 || t > cfg.horizon()) throw Error(ErrorCode::kOutOfRange, "day " + std::to_string(t));
  const auto K = static_cast<std::uint64_t>(cfg.K);
  std::vector<std::uint64_t> tuple(static_cast<std::size_t>(cfg.R - 1));
  std::uint64_t rest = t - 1;
  for (std::size_t i = tuple.size(); i-- > 0;) {
    tuple[i] = rest % K + 1;
    rest /= K;
  }
  return tuple;
}

inline Day day_index(std::span<const std::uint64_t> tuple, const HardSeqConfig& cfg) {
  if (tuple.size() != static_cast<std::size_t>(cfg.R - 1)) throw Error(ErrorCode::kOutOfRange, "tuple length != R-1");
  const auto K = static_cast<std::uint64_t>(cfg.K);
  Day t = 0;
  for (auto k : tuple) {
    if (k < 1 || k > K) throw Error(ErrorCode::kOutOfRange, "tuple entry outside [K]");
    t = t * K + (k - 1);
  }
  return t + 1;
}

// p_t = (1/R) (sum_{r<R} e_{r, k_r, tau_{k<=r}} + unif(D_R)).
inline RationalDist day_distribution(const TauTree& tree, Day t, const HardSeqConfig& cfg) {
  if (tree.config().R != cfg.R || tree.config().K != cfg.K) throw Error(ErrorCode::kMissingTauEntry, "tree built for a different (R, K)");
  const auto tuple = day_tuple(t, cfg);
  const std::int64_t d = cfg.d();
  std::vector<BigInt> nums(static_cast<std::size_t>(d), BigInt(0));
  // Over denominator d, a one-hot of weight 1/R carries R*K and each D_R coordinate 1.
  for (std::int64_t r = 1; r < cfg.R; ++r) {
    std::span<const std::uint64_t> prefix(tuple.data(), static_cast<std::size_t>(r));
    const auto tau = static_cast<std::int64_t>(tree.at(prefix));
    const auto k = static_cast<std::int64_t>(tuple[static_cast<std::size_t>(r - 1)]);
    nums[static_cast<std::size_t>(cfg.coordinate(r, k, tau) - 1)] += cfg.block_size();
  }
  for (std::int64_t i = cfg.block_first(cfg.R); i <= cfg.block_last(cfg.R); ++i) nums[static_cast<std::size_t>(i - 1)] += 1;
  return RationalDist::make(std::move(nums), BigInt(d));
}

inline Outcome sample_outcome(const RationalDist& p, RngStream& rng) {
  const BigInt u = rng.uniform_below(p.denominator());
  BigInt acc = 0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    acc += p.numerators()[i];
    if (u < acc) return Outcome{i + 1};
  }
  throw Error(ErrorCode::kInvalidArgument, "distribution does not sum to one");
}

// ---- adversaries ----------------------------------------------------------------

/// Chooses day t's outcome law. The mixture argument is mu_t, which is a
/// deterministic function of the past; day-t sampling is never visible.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual const RationalDist& next(Day t, std::span<const MixtureEntry> mixture, const KeyTable& keys) = 0;
  virtual bool adaptive() const = 0;
  virtual std::string name() const = 0;
};

class IidAdversary final : public Adversary {
 public:
  explicit IidAdversary(RationalDist q) : q_(std::move(q)) {}
  const RationalDist& next(Day, std::span<const MixtureEntry>, const KeyTable&) override { return q_; }
  bool adaptive() const override { return false; }
  std::string name() const override { return "iid"; }

 private:
  RationalDist q_;
};

// Point mass on argmin_i sum_p mu_t(p) p(i), ties to the smallest index.
class AdaptiveArgminAdversary final : public Adversary {
 public:
  explicit AdaptiveArgminAdversary(std::size_t d) : d_(d) {
    if (d < 2) throw Error(ErrorCode::kConfigInvalid, "d must be >= 2");
  }

  const RationalDist& next(Day, std::span<const MixtureEntry> mixture, const KeyTable& keys) override {
    if (mixture.empty()) throw Error(ErrorCode::kMissingMixture, "adaptive adversary needs the day's mixture");
    if (has_cached_ && std::equal(mixture.begin(), mixture.end(), cached_mix_.begin(), cached_mix_.end())) {
      return cached_;
    }
    std::size_t best = 0;
    BigRational best_mass;
    for (std::size_t i = 0; i < d_; ++i) {
      BigRational mass = 0;
      for (const auto& e : mixture) {
        const auto& p = keys.dist(e.key);
        if (p.dim() != d_) throw Error(ErrorCode::kDimensionMismatch, "mixture key has wrong dimension");
        mass += BigRational(p.numerators()[i] * e.count, p.denominator());
      }
      if (i == 0 || mass < best_mass) {
        best = i;
        best_mass = mass;
      }
    }
    cached_ = RationalDist::point_mass(d_, best + 1);
    cached_mix_.assign(mixture.begin(), mixture.end());
    has_cached_ = true;
    return cached_;
  }
  bool adaptive() const override { return true; }
  std::string name() const override { return "adaptive_argmin"; }

 private:
  std::size_t d_;
  bool has_cached_ = false;
  std::vector<MixtureEntry> cached_mix_;
  RationalDist cached_;
};

// Oblivious: the law depends on (tree, t) only.
class HardSequenceAdversary final : public Adversary {
 public:
  HardSequenceAdversary(HardSeqConfig cfg, TauTree tree) : cfg_(cfg), tree_(std::move(tree)) { cfg_.validate(); }

  const RationalDist& next(Day t, std::span<const MixtureEntry>, const KeyTable&) override {
    current_ = day_distribution(tree_, t, cfg_);
    return current_;
  }
  bool adaptive() const override { return false; }
  std::string name() const override { return "hard"; }
  const TauTree& tree() const { return tree_; }
  const HardSeqConfig& config() const { return cfg_; }

 private:
  HardSeqConfig cfg_;
  TauTree tree_;
  RationalDist current_;
};

inline std::unique_ptr<Adversary> iid_adversary(RationalDist q) { return std::make_unique<IidAdversary>(std::move(q)); }
inline std::unique_ptr<Adversary> adaptive_argmin_adversary(std::size_t d) {
  return std::make_unique<AdaptiveArgminAdversary>(d);
}

// JSONL: header {R, K, d, T, seed}, then {t, tuple, dist} per day.
inline void write_hard_sequence(std::ostream& out, const HardSeqConfig& cfg, const TauTree& tree, std::uint64_t seed) {
  nlohmann::json header{{"R", cfg.R}, {"K", cfg.K}, {"d", cfg.d()}, {"T", cfg.horizon()}, {"seed", seed}};
  out << header.dump() << '\n';
  for (Day t = 1; t <= cfg.horizon(); ++t) {
    nlohmann::json rec{{"t", t}, {"tuple", day_tuple(t, cfg)}, {"dist", to_json(day_distribution(tree, t, cfg))}};
    out << rec.dump() << '\n';
  }
}

}  // namespace hdcal
