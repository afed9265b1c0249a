#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "hdcal/errors.hpp"
#include "hdcal/parallel.hpp"
#include "hdcal/simplex.hpp"
#include "hdcal/transcript.hpp"

namespace hdcal {

namespace detail {

// Per-key exact accumulators for sum_t (p - X_t) * w_t(p): total weight N_p
// and weighted outcome counts V_p, both integers over the weight denominator.
struct GroupAccumulator {
  explicit GroupAccumulator(std::size_t d) : d_(d) {}

  void add(KeyId key, Outcome x, std::uint64_t weight) {
    if (key >= total_.size()) {
      total_.resize(key + 1, 0);
      outcome_.resize((key + 1) * d_, 0);
    }
    total_[key] += weight;
    outcome_[key * d_ + (x.index - 1)] += weight;
  }

  // sum over keys (in id order) and coordinates of |N_p p_i - V_p,i| / weight_den,
  // one float conversion per |.| term.
  template <class CoordFilter>
  double l1_mass(const KeyTable& keys, std::uint64_t weight_den, CoordFilter&& keep) const {
    CompensatedSum sum;
    for_each_term(keys, weight_den, keep, [&](const BigInt& num, const BigInt& den) { sum += to_double(num, den); });
    return sum.value();
  }

  double l1_mass(const KeyTable& keys, std::uint64_t weight_den) const {
    return l1_mass(keys, weight_den, [](std::size_t) { return true; });
  }

  BigRational l1_mass_exact(const KeyTable& keys, std::uint64_t weight_den) const {
    BigRational sum = 0;
    for_each_term(keys, weight_den, [](std::size_t) { return true; },
                  [&](const BigInt& num, const BigInt& den) { sum += BigRational(num, den); });
    return sum;
  }

 private:
  template <class CoordFilter, class Sink>
  void for_each_term(const KeyTable& keys, std::uint64_t weight_den, CoordFilter&& keep, Sink&& sink) const {
    for (KeyId k = 0; k < total_.size(); ++k) {
      if (total_[k] == 0) continue;
      const auto& p = keys.dist(k);
      const BigInt scale = p.denominator() * weight_den;
      for (std::size_t i = 0; i < d_; ++i) {
        if (!keep(i)) continue;
        BigInt diff = p.numerators()[i] * total_[k] - p.denominator() * outcome_[k * d_ + i];
        if (diff == 0) continue;
        sink(boost::multiprecision::abs(diff), scale);
      }
    }
  }

  std::size_t d_;
  std::vector<std::uint64_t> total_;
  std::vector<std::uint64_t> outcome_;
};

}  // namespace detail

namespace detail {

inline GroupAccumulator accumulate_mixtures(const Transcript& tr) {
  GroupAccumulator acc(tr.dim());
  for (const auto& rec : tr.days()) {
    if (rec.mix_size == 0) throw Error(ErrorCode::kMissingMixture, "day " + std::to_string(rec.t));
    for (const auto& e : tr.mixture(rec)) acc.add(e.key, rec.outcome, e.count);
  }
  return acc;
}

}  // namespace detail

// Distributional calibration error: sum_p || sum_t (p - X_t) mu_t(p) ||_1.
inline double dce(const Transcript& tr) {
  return detail::accumulate_mixtures(tr).l1_mass(tr.keys(), tr.weight_den());
}

// Same value as an exact rational.
inline BigRational dce_exact(const Transcript& tr) {
  return detail::accumulate_mixtures(tr).l1_mass_exact(tr.keys(), tr.weight_den());
}

// Calibration error of the realized prediction sequence (one trajectory).
inline double ece_trajectory(const Transcript& tr) {
  detail::GroupAccumulator acc(tr.dim());
  for (const auto& rec : tr.days()) {
    if (!rec.realized) throw Error(ErrorCode::kMissingRealizedPrediction, "day " + std::to_string(rec.t));
    acc.add(*rec.realized, rec.outcome, 1);
  }
  return acc.l1_mass(tr.keys(), 1);
}

/// Days I (1-based), prediction values P, coordinates D (1-based).
struct RestrictionSpec {
  std::set<Day> days;
  std::set<PredictionKey> predictions;
  std::set<std::size_t> coords;
};

inline RestrictionSpec full_restriction(const Transcript& tr) {
  RestrictionSpec spec;
  for (Day t = 1; t <= tr.size(); ++t) spec.days.insert(t);
  for (KeyId k = 0; k < tr.keys().size(); ++k) spec.predictions.insert(tr.keys().key(k));
  for (std::size_t i = 1; i <= tr.dim(); ++i) spec.coords.insert(i);
  return spec;
}

// sum_{p in P} sum_{i in D} | sum_{t in I} (p(i) - X_t(i)) mu_t(p) |.
inline double dce_restricted(const Transcript& tr, const RestrictionSpec& spec) {
  std::vector<char> in_p(tr.keys().size(), 0);
  for (const auto& key : spec.predictions) {
    if (auto id = tr.keys().find(key.dist())) in_p[*id] = 1;
  }
  std::vector<char> in_d(tr.dim(), 0);
  for (auto i : spec.coords) {
    if (i < 1 || i > tr.dim()) throw Error(ErrorCode::kOutOfRange, "coordinate outside [d]");
    in_d[i - 1] = 1;
  }
  detail::GroupAccumulator acc(tr.dim());
  for (Day t : spec.days) {
    if (t < 1 || t > tr.size()) throw Error(ErrorCode::kOutOfRange, "day outside [T]");
    const auto& rec = tr.day(t - 1);
    for (const auto& e : tr.mixture(rec)) {
      if (in_p[e.key]) acc.add(e.key, rec.outcome, e.count);
    }
  }
  return acc.l1_mass(tr.keys(), tr.weight_den(), [&](std::size_t i) { return in_d[i] != 0; });
}

// Brute-force DCE: naive loop over (value, coordinate, day) with exact
// rational accumulation and a single conversion at the end.
inline double oracle_dce_direct(const Transcript& tr) {
  std::set<KeyId> values;
  for (const auto& rec : tr.days()) {
    for (const auto& e : tr.mixture(rec)) values.insert(e.key);
  }
  BigRational total = 0;
  for (KeyId key : values) {
    const auto& p = tr.keys().dist(key);
    for (std::size_t i = 0; i < tr.dim(); ++i) {
      BigRational inner = 0;
      for (const auto& rec : tr.days()) {
        BigRational weight = 0;
        for (const auto& e : tr.mixture(rec)) {
          if (e.key == key) weight += BigRational(BigInt(e.count), BigInt(tr.weight_den()));
        }
        const BigRational x = rec.outcome.index == i + 1 ? 1 : 0;
        inner += (p.coord(i) - x) * weight;
      }
      total += boost::multiprecision::abs(inner);
    }
  }
  return static_cast<double>(total);
}

struct EceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
  std::vector<double> samples;
};

inline EceEstimate summarize(std::vector<double> samples) {
  EceEstimate est;
  est.trials = samples.size();
  double sum = 0.0;
  for (double v : samples) sum += v;
  est.mean = sum / static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - est.mean) * (v - est.mean);
  const double var = samples.size() > 1 ? ss / static_cast<double>(samples.size() - 1) : 0.0;
  est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
  est.samples = std::move(samples);
  return est;
}

// Mean and standard error of ece_trajectory over independent trials.
// run_trial(i) must build trial i's transcript from its own derived streams.
template <class RunTrial>
EceEstimate ece_estimate(RunTrial&& run_trial, std::size_t trials) {
  if (trials < 2) throw Error(ErrorCode::kInvalidArgument, "ece_estimate needs at least 2 trials");
  auto samples = parallel_map(trials, [&](std::size_t i) { return ece_trajectory(run_trial(static_cast<std::uint64_t>(i))); });
  return summarize(std::move(samples));
}

// Exact E[ECE] by enumerating every realized-prediction assignment.
inline double exhaustive_expected_ece(const Transcript& tr, std::uint64_t max_paths = std::uint64_t{1} << 20) {
  std::uint64_t paths = 1;
  for (const auto& rec : tr.days()) {
    if (rec.mix_size == 0) throw Error(ErrorCode::kMissingMixture, "day " + std::to_string(rec.t));
    paths *= rec.mix_size;
    if (paths > max_paths) throw Error(ErrorCode::kBudgetExceeded, "too many prediction assignments to enumerate");
  }
  const std::size_t T = tr.size();
  std::vector<std::size_t> choice(T, 0);
  double expectation = 0.0;
  for (;;) {
    detail::GroupAccumulator acc(tr.dim());
    double prob = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
      const auto& e = tr.mixture(i)[choice[i]];
      prob *= static_cast<double>(e.count) / static_cast<double>(tr.weight_den());
      acc.add(e.key, tr.day(i).outcome, 1);
    }
    expectation += prob * acc.l1_mass(tr.keys(), 1);
    std::size_t i = 0;
    while (i < T && ++choice[i] == tr.day(i).mix_size) choice[i++] = 0;
    if (i == T) break;
  }
  return expectation;
}

}  // namespace hdcal
