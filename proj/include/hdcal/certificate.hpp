#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdcal/errors.hpp"
#include "hdcal/forecaster.hpp"
#include "hdcal/metrics.hpp"
#include "hdcal/simplex.hpp"
#include "hdcal/transcript.hpp"

namespace hdcal {

inline constexpr double kCertificateTolerance = 1e-9;

/// Outcome counts for every node of the interval tree of a completed run.
/// Level 0 is the whole horizon; a level-l node is Gamma_{h_1..h_l}, of
/// length T_l, indexed in mixed radix sum (h_r - 1) H^(l-r).
class IntervalStats {
 public:
  IntervalStats(const Transcript& tr, const ForecastConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (tr.dim() != static_cast<std::size_t>(cfg_.d)) throw Error(ErrorCode::kCorruptRecord, "transcript d != config d");
    if (BigInt(tr.size()) != cfg_.horizon()) {
      throw Error(ErrorCode::kCorruptRecord,
                  "transcript has " + std::to_string(tr.size()) + " days, config implies " + cfg_.horizon().str());
    }
    const auto d = static_cast<std::size_t>(cfg_.d);
    const auto H = static_cast<std::uint64_t>(cfg_.H);
    lengths_.resize(static_cast<std::size_t>(cfg_.L) + 1);
    widths_.resize(lengths_.size());
    for (std::int64_t l = 0; l <= cfg_.L; ++l) {
      lengths_[static_cast<std::size_t>(l)] = static_cast<std::uint64_t>(cfg_.iteration_length(l));
      widths_[static_cast<std::size_t>(l)] = static_cast<std::uint64_t>(pow_big(cfg_.H, l));
    }
    counts_.resize(lengths_.size());
    const std::size_t leaf = lengths_.size() - 1;
    counts_[leaf].assign(widths_[leaf] * d, 0);
    for (const auto& rec : tr.days()) {
      const std::uint64_t node = (rec.t - 1) / lengths_[leaf];
      counts_[leaf][node * d + rec.outcome.index - 1] += 1;
    }
    for (std::size_t l = leaf; l-- > 0;) {
      counts_[l].assign(widths_[l] * d, 0);
      for (std::uint64_t child = 0; child < widths_[l + 1]; ++child) {
        const std::uint64_t parent = child / H;
        for (std::size_t i = 0; i < d; ++i) counts_[l][parent * d + i] += counts_[l + 1][child * d + i];
      }
    }
  }

  const ForecastConfig& config() const { return cfg_; }
  std::uint64_t length(std::int64_t level) const { return lengths_.at(static_cast<std::size_t>(level)); }
  std::uint64_t width(std::int64_t level) const { return widths_.at(static_cast<std::size_t>(level)); }

  std::span<const std::uint64_t> counts(std::int64_t level, std::uint64_t node) const {
    const auto d = static_cast<std::size_t>(cfg_.d);
    return std::span<const std::uint64_t>(counts_.at(static_cast<std::size_t>(level))).subspan(node * d, d);
  }

  // X_{h<=l}: exact mean outcome over the node.
  RationalDist average(std::int64_t level, std::uint64_t node) const { return from_counts(counts(level, node)); }

  // Prediction of level `level` during iteration `iteration` (1..H+1) of the
  // level-(l-1) interval `parent`. iteration H+1 is never played but is the
  // successor of the last iteration.
  RationalDist prediction(std::int64_t level, std::uint64_t parent, std::uint64_t iteration) const {
    const auto d = static_cast<std::size_t>(cfg_.d);
    std::vector<std::uint64_t> prefix(d, 0);
    for (std::uint64_t h = 1; h < iteration; ++h) {
      const auto c = counts(level, parent * static_cast<std::uint64_t>(cfg_.H) + (h - 1));
      for (std::size_t i = 0; i < d; ++i) prefix[i] += c[i];
    }
    return smoothed_prediction(prefix, iteration, BigInt(length(level)), cfg_.m);
  }

  std::string scope(std::int64_t level, std::uint64_t node) const {
    std::vector<std::uint64_t> digits(static_cast<std::size_t>(level));
    for (std::size_t r = digits.size(); r-- > 0;) {
      digits[r] = node % static_cast<std::uint64_t>(cfg_.H) + 1;
      node /= static_cast<std::uint64_t>(cfg_.H);
    }
    std::string s = "l=" + std::to_string(level) + " h=(";
    for (std::size_t r = 0; r < digits.size(); ++r) s += (r ? "," : "") + std::to_string(digits[r]);
    return s + ")";
  }

 private:
  ForecastConfig cfg_;
  std::vector<std::uint64_t> lengths_;
  std::vector<std::uint64_t> widths_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

struct CheckRow {
  std::string name;
  std::string scope;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool pass = false;
};

inline CheckRow inequality_row(std::string name, std::string scope, double measured, double bound) {
  const double margin = bound - measured;
  return {std::move(name), std::move(scope), measured, bound, margin, margin >= -kCertificateTolerance};
}

// For inequalities whose margin was computed before rounding.
inline CheckRow exact_inequality_row(std::string name, std::string scope, double measured, double bound, double margin) {
  return {std::move(name), std::move(scope), measured, bound, margin, margin >= -kCertificateTolerance};
}

inline CheckRow identity_row(std::string name, std::string scope, double residual) {
  return {std::move(name), std::move(scope), residual, 0.0, -std::abs(residual), std::abs(residual) <= kCertificateTolerance};
}

// ---- smoothness of consecutive predictions ------------------------------------

struct SmoothnessResult {
  std::vector<CheckRow> rows;  // one per (l, h_{<l}, h_l)
  double max_gap = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
};

// l1(p_{h_l}, p_{h_l + 1}) <= 2 / (h_l + m) for every level, interval, iteration.
inline SmoothnessResult check_smoothness(const IntervalStats& stats) {
  const auto& cfg = stats.config();
  SmoothnessResult out;
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    for (std::uint64_t parent = 0; parent < stats.width(l - 1); ++parent) {
      RationalDist current = stats.prediction(l, parent, 1);
      for (std::uint64_t h = 1; h <= static_cast<std::uint64_t>(cfg.H); ++h) {
        RationalDist next = stats.prediction(l, parent, h + 1);
        const double gap = l1_distance(current, next);
        const double bound = 2.0 / static_cast<double>(h + static_cast<std::uint64_t>(cfg.m));
        auto row = inequality_row("smoothness", stats.scope(l, parent * static_cast<std::uint64_t>(cfg.H) + h - 1), gap, bound);
        out.max_gap = std::max(out.max_gap, gap);
        out.min_margin = std::min(out.min_margin, row.margin);
        if (!row.pass) ++out.violations;
        out.rows.push_back(std::move(row));
        current = std::move(next);
      }
    }
  }
  return out;
}

// ---- pseudo-regret of one level inside one interval ---------------------------

struct PseudoRegretResult {
  double lhs = 0.0;
  double tight_bound = 0.0;
  double paper_bound = 0.0;
  bool paper_asserted = false;  // only when tight_bound <= paper_bound
  bool pass = false;
};

// Iteration averages w_1..w_H of one interval and smoothing m:
//   lhs   = sum_h <w_h, ln 1/z_{h+1}>,  z_h = (sum_{tau<h} w_tau + m/d) / (h - 1 + m)
//   tight = (H+1+m) ln(H+1+m) - (1+m) ln(1+m) - H
//           + sum_i [ -(W_i + m/d) ln(W_i + m/d) + (m/d) ln(m/d) + W_i ],  W_i = sum_h w_h(i)
//   paper = H Ent(W / H) + H / m^2
inline PseudoRegretResult pseudo_regret_bounds(std::span<const RationalDist> w, std::int64_t m) {
  if (w.size() < 2) throw Error(ErrorCode::kConfigInvalid, "pseudo-regret needs H >= 2");
  const std::size_t d = w.front().dim();
  const auto H = static_cast<double>(w.size());
  const double md = static_cast<double>(m) / static_cast<double>(d);

  PseudoRegretResult out;
  std::vector<BigRational> cumulative(d, BigRational(0));
  for (std::size_t h = 0; h < w.size(); ++h) {
    require_same_dim(w[h], w.front());
    for (std::size_t i = 0; i < d; ++i) cumulative[i] += w[h].coord(i);
    // z_{h+2} in 1-based terms, i.e. the successor of iteration h+1.
    const BigRational denom = BigRational(static_cast<long long>(h + 1) + m);
    BigInt common = 1;
    std::vector<BigRational> z(d);
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = (cumulative[i] + BigRational(BigInt(m), BigInt(d))) / denom;
      common = boost::multiprecision::lcm(common, boost::multiprecision::denominator(z[i]));
    }
    std::vector<BigInt> nums(d);
    for (std::size_t i = 0; i < d; ++i) nums[i] = boost::multiprecision::numerator(z[i]) * (common / boost::multiprecision::denominator(z[i]));
    out.lhs += cross_entropy(w[h], RationalDist::make(std::move(nums), common));
  }

  const double a = H + 1.0 + static_cast<double>(m);
  const double b = 1.0 + static_cast<double>(m);
  double tight = a * std::log(a) - b * std::log(b) - H;
  double total_entropy = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double Wi = static_cast<double>(cumulative[i]);
    tight += -(Wi + md) * std::log(Wi + md) + md * std::log(md) + Wi;
    if (Wi > 0.0) total_entropy += (Wi / H) * std::log(H / Wi);
  }
  out.tight_bound = tight;
  out.paper_bound = H * total_entropy + H / static_cast<double>(m * m);
  out.paper_asserted = out.tight_bound <= out.paper_bound;
  out.pass = out.lhs <= out.tight_bound + kCertificateTolerance;
  return out;
}

inline PseudoRegretResult check_pseudo_regret(const IntervalStats& stats, std::int64_t level, std::uint64_t parent) {
  const auto& cfg = stats.config();
  if (level < 1 || level > cfg.L || parent >= stats.width(level - 1)) throw Error(ErrorCode::kOutOfRange, "no such interval");
  std::vector<RationalDist> w;
  w.reserve(static_cast<std::size_t>(cfg.H));
  for (std::uint64_t h = 0; h < static_cast<std::uint64_t>(cfg.H); ++h) {
    w.push_back(stats.average(level, parent * static_cast<std::uint64_t>(cfg.H) + h));
  }
  return pseudo_regret_bounds(w, cfg.m);
}

// ---- entropy telescoping ------------------------------------------------------

struct TelescopeResult {
  double lhs_value = 0.0;
  double rhs_value = 0.0;
  double residual = 0.0;
};

// (1/L) sum_l H^-l sum_{h<l} [H Ent(X_{h<l}) - sum_{h_l} Ent(X_{h<=l})]
//   == (1/L) [Ent(X) - H^-L sum_{h<=L} Ent(X_{h<=L})]
inline TelescopeResult check_telescope(const IntervalStats& stats) {
  const auto& cfg = stats.config();
  const auto H = static_cast<double>(cfg.H);
  const auto L = static_cast<double>(cfg.L);
  std::vector<std::vector<double>> ent(static_cast<std::size_t>(cfg.L) + 1);
  for (std::int64_t l = 0; l <= cfg.L; ++l) {
    auto& row = ent[static_cast<std::size_t>(l)];
    row.resize(stats.width(l));
    for (std::uint64_t n = 0; n < stats.width(l); ++n) row[n] = entropy(stats.average(l, n));
  }
  TelescopeResult out;
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    double level_sum = 0.0;
    for (std::uint64_t parent = 0; parent < stats.width(l - 1); ++parent) {
      double children = 0.0;
      for (std::uint64_t h = 0; h < static_cast<std::uint64_t>(cfg.H); ++h) {
        children += ent[static_cast<std::size_t>(l)][parent * static_cast<std::uint64_t>(cfg.H) + h];
      }
      level_sum += H * ent[static_cast<std::size_t>(l - 1)][parent] - children;
    }
    out.lhs_value += std::pow(H, -static_cast<double>(l)) * level_sum;
  }
  out.lhs_value /= L;
  double leaves = 0.0;
  for (double e : ent.back()) leaves += e;
  out.rhs_value = (ent[0][0] - std::pow(H, -L) * leaves) / L;
  out.residual = out.lhs_value - out.rhs_value;
  return out;
}

// ---- the assembled chain -------------------------------------------------------

struct ChainValues {
  double A0 = 0.0;  // DCE of the recorded mixtures
  double A1 = 0.0;  // per-interval l1 split
  double A2 = 0.0;  // successor predictions + 2 eps T
  double A3 = 0.0;  // T sqrt(2 K_bar) + 2 eps T
  double K_bar = 0.0;
  double C_bar = 0.0;  // telescoped tight-bound corrections
  double telescope_residual = 0.0;
  // A1 - A0 and A2 - A1, evaluated in exact arithmetic before rounding.
  double margin_01 = 0.0;
  double margin_12 = 0.0;
};

namespace detail {

// T_l * ||p - C / T_l||_1 = sum_i |T_l p_i - C_i|, exactly.
inline BigRational scaled_l1(const RationalDist& p, std::span<const std::uint64_t> counts, std::uint64_t length) {
  BigInt acc = 0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    BigInt diff = p.numerators()[i] * length - p.denominator() * counts[i];
    acc += boost::multiprecision::abs(diff);
  }
  return BigRational(acc, p.denominator());
}

}  // namespace detail

inline ChainValues check_chain(const Transcript& tr, const IntervalStats& stats) {
  const auto& cfg = stats.config();
  const auto H = static_cast<double>(cfg.H);
  const auto L = static_cast<double>(cfg.L);
  const auto T = static_cast<double>(stats.length(0));
  const double eps = cfg.epsilon();

  const BigRational a0 = dce_exact(tr);
  BigRational a1 = 0;
  BigRational a2 = 0;
  CompensatedSum k_bar;
  CompensatedSum c_bar;
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    const std::uint64_t t_level = stats.length(l);
    const double level_weight = std::pow(H, -static_cast<double>(l));
    for (std::uint64_t parent = 0; parent < stats.width(l - 1); ++parent) {
      for (std::uint64_t h = 1; h <= static_cast<std::uint64_t>(cfg.H); ++h) {
        const auto node = parent * static_cast<std::uint64_t>(cfg.H) + h - 1;
        const auto counts = stats.counts(l, node);
        const RationalDist successor = stats.prediction(l, parent, h + 1);
        a1 += detail::scaled_l1(stats.prediction(l, parent, h), counts, t_level);
        a2 += detail::scaled_l1(successor, counts, t_level);
        k_bar += level_weight * kl_divergence(stats.average(l, node), successor);
      }
      const auto pr = check_pseudo_regret(stats, l, parent);
      c_bar += level_weight * (pr.tight_bound - H * entropy(stats.average(l - 1, parent)));
    }
  }
  a1 /= cfg.L;
  a2 = a2 / cfg.L + BigRational(BigInt(2) * stats.length(0), BigInt(cfg.m));

  ChainValues c;
  c.A0 = static_cast<double>(a0);
  c.A1 = static_cast<double>(a1);
  c.A2 = static_cast<double>(a2);
  c.margin_01 = static_cast<double>(a1 - a0);
  c.margin_12 = static_cast<double>(a2 - a1);
  c.K_bar = k_bar.value() / L;
  c.C_bar = c_bar.value() / L;
  c.A3 = T * std::sqrt(2.0 * c.K_bar) + 2.0 * eps * T;
  c.telescope_residual = check_telescope(stats).residual;
  return c;
}

// ---- recorded mixtures vs recomputation from outcomes ------------------------

struct RecomputationResult {
  std::size_t mismatched_days = 0;
  Day first_mismatch = 0;
};

inline RecomputationResult check_recomputation(const Transcript& tr, const IntervalStats& stats) {
  const auto& cfg = stats.config();
  constexpr KeyId kAbsent = std::numeric_limits<KeyId>::max();
  // Key id (in the transcript's table) of each level's prediction per node.
  std::vector<std::vector<KeyId>> ids(static_cast<std::size_t>(cfg.L) + 1);
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    auto& row = ids[static_cast<std::size_t>(l)];
    row.resize(stats.width(l));
    for (std::uint64_t node = 0; node < stats.width(l); ++node) {
      const auto found = tr.keys().find(stats.prediction(l, node / static_cast<std::uint64_t>(cfg.H), node % static_cast<std::uint64_t>(cfg.H) + 1));
      row[node] = found ? *found : kAbsent;
    }
  }
  RecomputationResult out;
  std::vector<MixtureEntry> expected;
  for (const auto& rec : tr.days()) {
    expected.clear();
    bool absent = tr.weight_den() != static_cast<std::uint32_t>(cfg.L);
    for (std::int64_t l = 1; l <= cfg.L; ++l) {
      const KeyId id = ids[static_cast<std::size_t>(l)][(rec.t - 1) / stats.length(l)];
      if (id == kAbsent) absent = true;
      expected.push_back({id, 1});
    }
    expected = merge_entries(std::move(expected));
    const auto recorded = tr.mixture(rec);
    if (absent || !std::equal(expected.begin(), expected.end(), recorded.begin(), recorded.end())) {
      if (out.mismatched_days++ == 0) out.first_mismatch = rec.t;
    }
  }
  return out;
}

// ---- report ----------------------------------------------------------------------

struct CertificateReport {
  std::string run_id;
  std::vector<CheckRow> checks;
  ChainValues chain;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckRow& r) { return r.pass; });
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const CheckRow& r) { return !r.pass; }));
  }
  const CheckRow* find(std::string_view name) const {
    for (const auto& r : checks) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : checks) {
      rows.push_back({{"name", r.name}, {"scope", r.scope}, {"measured", r.measured}, {"bound", r.bound}, {"margin", r.margin}, {"pass", r.pass}});
    }
    return {{"run_id", run_id},
            {"checks", std::move(rows)},
            {"chain",
             {{"A0", chain.A0}, {"A1", chain.A1}, {"A2", chain.A2}, {"A3", chain.A3}, {"K_bar", chain.K_bar}, {"C_bar", chain.C_bar},
              {"telescope_residual", chain.telescope_residual}}}};
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "run_id,name,scope,measured,bound,margin,pass\n";
    for (const auto& r : checks) {
      out << run_id << ',' << r.name << ",\"" << r.scope << "\"," << r.measured << ',' << r.bound << ',' << r.margin << ','
          << (r.pass ? 1 : 0) << '\n';
    }
    return out.str();
  }
};

// Runs every check on a completed hierarchical-forecaster run.
inline CertificateReport certify(const Transcript& tr, const ForecastConfig& cfg, std::string run_id) {
  IntervalStats stats(tr, cfg);
  CertificateReport report;
  report.run_id = std::move(run_id);
  auto& rows = report.checks;

  const auto recompute = check_recomputation(tr, stats);
  rows.push_back(inequality_row("recomputation_identity",
                                recompute.mismatched_days ? "first mismatch t=" + std::to_string(recompute.first_mismatch) : "all days",
                                static_cast<double>(recompute.mismatched_days), 0.0));

  std::size_t bad_realized = 0;
  for (const auto& rec : tr.days()) {
    if (!rec.realized) continue;
    const auto mix = tr.mixture(rec);
    if (std::none_of(mix.begin(), mix.end(), [&](const MixtureEntry& e) { return e.key == *rec.realized; })) ++bad_realized;
  }
  rows.push_back(inequality_row("realized_in_support", "all days", static_cast<double>(bad_realized), 0.0));

  auto smooth = check_smoothness(stats);
  for (auto& r : smooth.rows) rows.push_back(std::move(r));
  rows.push_back(inequality_row("smoothness_max_gap", "all levels", smooth.max_gap, 2.0 * cfg.epsilon()));

  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    for (std::uint64_t parent = 0; parent < stats.width(l - 1); ++parent) {
      const auto pr = check_pseudo_regret(stats, l, parent);
      const auto scope = stats.scope(l - 1, parent);
      rows.push_back(inequality_row("pseudo_regret_tight", "l=" + std::to_string(l) + " interval " + scope, pr.lhs, pr.tight_bound));
      if (pr.paper_asserted) {
        rows.push_back(inequality_row("pseudo_regret_paper", "l=" + std::to_string(l) + " interval " + scope, pr.lhs, pr.paper_bound));
      }
    }
  }

  const auto tele = check_telescope(stats);
  rows.push_back(identity_row("telescope", "all levels", tele.residual));

  report.chain = check_chain(tr, stats);
  const auto& c = report.chain;
  rows.push_back(exact_inequality_row("chain_A0_le_A1", "run", c.A0, c.A1, c.margin_01));
  rows.push_back(exact_inequality_row("chain_A1_le_A2", "run", c.A1, c.A2, c.margin_12));
  rows.push_back(inequality_row("chain_A2_le_A3", "run", c.A2, c.A3));
  const double log_d = std::log(static_cast<double>(cfg.d));
  const auto L = static_cast<double>(cfg.L);
  rows.push_back(inequality_row("kl_budget", "run", c.K_bar, log_d / L + c.C_bar));

  const double inv_m2 = 1.0 / static_cast<double>(cfg.m * cfg.m);
  if (c.C_bar <= inv_m2) {
    const auto T = static_cast<double>(stats.length(0));
    const double eps = cfg.epsilon();
    rows.push_back(inequality_row("chain_A3_regime", "run", c.A3, 2.0 * eps * T + T * std::sqrt(2.0 * (log_d / L + inv_m2))));
    if (L >= log_d * static_cast<double>(cfg.m * cfg.m)) {
      rows.push_back(inequality_row("chain_A3_le_4epsT", "run", c.A3, 4.0 * eps * T));
    }
  }
  return report;
}

}  // namespace hdcal
