#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "hdcal/errors.hpp"

namespace hdcal {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

inline double to_double(const BigInt& numerator, const BigInt& denominator) {
  return static_cast<double>(BigRational(numerator, denominator));
}

inline double log_of(const BigInt& x) { return std::log(static_cast<double>(x)); }

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  CompensatedSum& operator+=(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Exact point of the probability simplex over [d]: integer numerators over
/// a shared denominator, always stored gcd-reduced.
class RationalDist {
 public:
  RationalDist() = default;

  // make_rational_dist: validates and reduces to canonical form.
  static RationalDist make(std::vector<BigInt> numerators, BigInt denominator) {
    if (denominator == 0) throw Error(ErrorCode::kZeroDenominator, "denominator is zero");
    if (denominator < 0) throw Error(ErrorCode::kInvalidArgument, "negative denominator");
    if (numerators.size() < 2) {
      throw Error(ErrorCode::kDimensionMismatch, "need d >= 2, got " + std::to_string(numerators.size()));
    }
    BigInt sum = 0;
    for (const auto& n : numerators) {
      if (n < 0) throw Error(ErrorCode::kInvalidArgument, "negative numerator");
      sum += n;
    }
    if (sum != denominator) {
      throw Error(ErrorCode::kSumMismatch,
                  "numerators sum to " + sum.str() + ", denominator is " + denominator.str());
    }
    BigInt g = denominator;
    for (const auto& n : numerators) {
      if (g == 1) break;
      g = boost::multiprecision::gcd(g, n);
    }
    if (g != 1) {
      for (auto& n : numerators) n /= g;
      denominator /= g;
    }
    RationalDist out;
    out.num_ = std::move(numerators);
    out.den_ = std::move(denominator);
    out.cache_values();
    return out;
  }

  static RationalDist make(const std::vector<std::int64_t>& numerators, std::int64_t denominator) {
    std::vector<BigInt> nums(numerators.begin(), numerators.end());
    return make(std::move(nums), BigInt(denominator));
  }

  static RationalDist uniform(std::size_t d) { return make(std::vector<BigInt>(d, BigInt(1)), BigInt(d)); }

  // index is 1-based.
  static RationalDist point_mass(std::size_t d, std::size_t index) {
    if (index < 1 || index > d) throw Error(ErrorCode::kOutOfRange, "point mass index out of range");
    std::vector<BigInt> nums(d, BigInt(0));
    nums[index - 1] = 1;
    return make(std::move(nums), BigInt(1));
  }

  std::size_t dim() const { return num_.size(); }
  const std::vector<BigInt>& numerators() const { return num_; }
  const BigInt& denominator() const { return den_; }

  // Coordinate value as double, 0-based.
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }
  BigRational coord(std::size_t i) const { return BigRational(num_[i], den_); }

  friend bool operator==(const RationalDist& a, const RationalDist& b) {
    return a.den_ == b.den_ && a.num_ == b.num_;
  }
  friend bool operator<(const RationalDist& a, const RationalDist& b) {
    if (a.num_.size() != b.num_.size()) return a.num_.size() < b.num_.size();
    if (a.den_ != b.den_) return a.den_ < b.den_;
    return a.num_ < b.num_;
  }

 private:
  void cache_values() {
    values_.resize(num_.size());
    for (std::size_t i = 0; i < num_.size(); ++i) values_[i] = to_double(num_[i], den_);
  }

  std::vector<BigInt> num_;
  BigInt den_ = 1;
  std::vector<double> values_;
};

/// Outcome index in [1, d]; the one-hot vector e_index.
struct Outcome {
  std::size_t index = 1;

  static Outcome of(std::size_t index, std::size_t d) {
    if (index < 1 || index > d) {
      throw Error(ErrorCode::kOutOfRange, "outcome " + std::to_string(index) + " not in [1," + std::to_string(d) + "]");
    }
    return Outcome{index};
  }

  double operator[](std::size_t i) const { return i + 1 == index ? 1.0 : 0.0; }
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

/// Canonical grouping key for a prediction. Equal simplex points give equal
/// keys because RationalDist is always reduced.
class PredictionKey {
 public:
  PredictionKey() = default;
  explicit PredictionKey(RationalDist dist) : dist_(std::move(dist)) {}

  const RationalDist& dist() const { return dist_; }
  const std::vector<BigInt>& numerators() const { return dist_.numerators(); }
  const BigInt& denominator() const { return dist_.denominator(); }

  friend bool operator==(const PredictionKey& a, const PredictionKey& b) { return a.dist_ == b.dist_; }
  friend bool operator<(const PredictionKey& a, const PredictionKey& b) { return a.dist_ < b.dist_; }

 private:
  RationalDist dist_;
};

inline PredictionKey canonical_key(const RationalDist& a) { return PredictionKey(a); }

inline void require_same_dim(const RationalDist& a, const RationalDist& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

// Exact sum |a_i - b_i| over the common denominator, converted once.
inline double l1_distance(const RationalDist& a, const RationalDist& b) {
  require_same_dim(a, b);
  BigInt acc = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    BigInt diff = a.numerators()[i] * b.denominator() - b.numerators()[i] * a.denominator();
    acc += boost::multiprecision::abs(diff);
  }
  return to_double(acc, a.denominator() * b.denominator());
}

// Natural-log entropy, 0 ln 0 := 0.
inline double entropy(const RationalDist& a) {
  const double log_den = log_of(a.denominator());
  double h = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    if (a.numerators()[i] == 0) continue;
    h += a[i] * (log_den - log_of(a.numerators()[i]));
  }
  return h;
}

inline double kl_divergence(const RationalDist& x, const RationalDist& p) {
  require_same_dim(x, p);
  const double log_xden = log_of(x.denominator());
  const double log_pden = log_of(p.denominator());
  double kl = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    if (x.numerators()[i] == 0) continue;
    if (p.numerators()[i] == 0) {
      throw Error(ErrorCode::kAbsoluteContinuityViolation,
                  "x_" + std::to_string(i + 1) + " > 0 but p_" + std::to_string(i + 1) + " = 0");
    }
    kl += x[i] * ((log_of(x.numerators()[i]) - log_xden) - (log_of(p.numerators()[i]) - log_pden));
  }
  return kl < 0.0 ? 0.0 : kl;
}

// <x, ln(1/p)>; requires p_i > 0 wherever x_i > 0.
inline double cross_entropy(const RationalDist& x, const RationalDist& p) {
  require_same_dim(x, p);
  const double log_pden = log_of(p.denominator());
  double ce = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    if (x.numerators()[i] == 0) continue;
    if (p.numerators()[i] == 0) {
      throw Error(ErrorCode::kAbsoluteContinuityViolation, "cross entropy against zero coordinate");
    }
    ce += x[i] * (log_pden - log_of(p.numerators()[i]));
  }
  return ce;
}

// Counts vector -> empirical distribution.
inline RationalDist from_counts(std::span<const std::uint64_t> counts) {
  std::vector<BigInt> nums(counts.begin(), counts.end());
  BigInt total = 0;
  for (const auto& n : nums) total += n;
  return RationalDist::make(std::move(nums), std::move(total));
}

// ---- JSON form [[n_1,...,n_d], den] ----------------------------------------

inline nlohmann::json bigint_to_json(const BigInt& v) {
  if (v >= 0 && v <= BigInt(std::numeric_limits<std::uint64_t>::max())) {
    return static_cast<std::uint64_t>(v);
  }
  return v.str();
}

inline BigInt bigint_from_json(const nlohmann::json& j) {
  if (j.is_number_unsigned()) return BigInt(j.get<std::uint64_t>());
  if (j.is_number_integer()) return BigInt(j.get<std::int64_t>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::kCorruptRecord, "bad integer string '" + s + "'");
    }
    return BigInt(s);
  }
  throw Error(ErrorCode::kCorruptRecord, "expected integer, got " + j.dump());
}

inline nlohmann::json to_json(const RationalDist& a) {
  nlohmann::json nums = nlohmann::json::array();
  for (const auto& n : a.numerators()) nums.push_back(bigint_to_json(n));
  return nlohmann::json::array({std::move(nums), bigint_to_json(a.denominator())});
}

inline RationalDist dist_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_array()) {
    throw Error(ErrorCode::kCorruptRecord, "expected [[n...], den], got " + j.dump());
  }
  std::vector<BigInt> nums;
  nums.reserve(j[0].size());
  for (const auto& n : j[0]) nums.push_back(bigint_from_json(n));
  try {
    return RationalDist::make(std::move(nums), bigint_from_json(j[1]));
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptRecord, e.what());
  }
}

// ---- interning ---------------------------------------------------------------

using KeyId = std::uint32_t;

/// Dense ids for the distinct prediction values seen in one transcript.
class KeyTable {
 public:
  KeyId intern(const RationalDist& dist) {
    PredictionKey key(dist);
    auto [it, inserted] = index_.try_emplace(key, static_cast<KeyId>(keys_.size()));
    if (inserted) keys_.push_back(std::move(key));
    return it->second;
  }

  std::optional<KeyId> find(const RationalDist& dist) const {
    auto it = index_.find(PredictionKey(dist));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const PredictionKey& key(KeyId id) const { return keys_.at(id); }
  const RationalDist& dist(KeyId id) const { return keys_.at(id).dist(); }
  std::size_t size() const { return keys_.size(); }

 private:
  std::vector<PredictionKey> keys_;
  std::map<PredictionKey, KeyId> index_;
};

}  // namespace hdcal
