#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdcal/errors.hpp"
#include "hdcal/forecaster.hpp"
#include "hdcal/simplex.hpp"

namespace hdcal {

inline constexpr std::string_view kTranscriptFormat = "hdcal-transcript/1";

struct DayRecord {
  Day t = 0;
  std::size_t mix_offset = 0;
  std::size_t mix_size = 0;  // 0 means no mixture was recorded
  std::optional<KeyId> realized;
  Outcome outcome;
  std::optional<KeyId> adversary;
};

/// Day-ordered protocol record. Mixture weights are counts over a
/// transcript-wide weight denominator (L for the hierarchical forecaster).
/// Prediction values and adversary laws share one KeyTable.
class Transcript {
 public:
  Transcript(std::size_t d, std::uint32_t weight_den) : d_(d), weight_den_(weight_den) {
    if (d < 2) throw Error(ErrorCode::kDimensionMismatch, "d must be >= 2");
    if (weight_den == 0) throw Error(ErrorCode::kInvalidArgument, "weight denominator must be positive");
  }

  std::size_t dim() const { return d_; }
  std::uint32_t weight_den() const { return weight_den_; }
  std::size_t size() const { return days_.size(); }
  Day horizon() const { return days_.size(); }

  KeyTable& keys() { return keys_; }
  const KeyTable& keys() const { return keys_; }

  // Free-form header data: forecaster config, seed, adversary.
  nlohmann::json meta = nlohmann::json::object();

  void append(std::span<const MixtureEntry> mixture, std::optional<KeyId> realized, Outcome outcome,
              std::optional<KeyId> adversary = std::nullopt) {
    if (outcome.index < 1 || outcome.index > d_) throw Error(ErrorCode::kOutOfRange, "outcome outside [d]");
    std::uint64_t total = 0;
    for (const auto& e : mixture) {
      check_key(e.key);
      total += e.count;
    }
    if (!mixture.empty() && total != weight_den_) {
      throw Error(ErrorCode::kInvalidArgument, "day " + std::to_string(days_.size() + 1) + ": mixture weights do not sum to 1");
    }
    if (realized) check_key(*realized);
    if (adversary) check_key(*adversary);
    DayRecord rec;
    rec.t = days_.size() + 1;
    rec.mix_offset = entries_.size();
    rec.mix_size = mixture.size();
    rec.realized = realized;
    rec.outcome = outcome;
    rec.adversary = adversary;
    entries_.insert(entries_.end(), mixture.begin(), mixture.end());
    days_.push_back(rec);
  }

  // index is 0-based; days_[i].t == i + 1.
  const DayRecord& day(std::size_t index) const { return days_.at(index); }
  std::span<const DayRecord> days() const { return days_; }

  std::span<const MixtureEntry> mixture(const DayRecord& rec) const {
    return std::span<const MixtureEntry>(entries_).subspan(rec.mix_offset, rec.mix_size);
  }
  std::span<const MixtureEntry> mixture(std::size_t index) const { return mixture(day(index)); }

  void set_outcome(std::size_t index, Outcome outcome) {
    if (outcome.index < 1 || outcome.index > d_) throw Error(ErrorCode::kOutOfRange, "outcome outside [d]");
    days_.at(index).outcome = outcome;
  }

 private:
  void check_key(KeyId id) const {
    if (id >= keys_.size()) throw Error(ErrorCode::kInvalidArgument, "unknown key id");
    if (keys_.dist(id).dim() != d_) throw Error(ErrorCode::kDimensionMismatch, "key dimension != d");
  }

  std::size_t d_;
  std::uint32_t weight_den_;
  KeyTable keys_;
  std::vector<DayRecord> days_;
  std::vector<MixtureEntry> entries_;
};

// ---- JSONL persistence ----------------------------------------------------------
//
// Line 1:  {"d":..,"format":"hdcal-transcript/1","kind":"header","meta":{..},"T":..,"weight_den":..}
// Line t+1: {"t":t,"mixture":[[key,count],..],"realized":key|null,"outcome":i,"dist":key|null}
// where key is [[n_1,..,n_d],den] in reduced form.

inline void write_transcript(std::ostream& out, const Transcript& tr) {
  nlohmann::json header{{"kind", "header"},
                        {"format", kTranscriptFormat},
                        {"d", tr.dim()},
                        {"T", tr.size()},
                        {"weight_den", tr.weight_den()},
                        {"meta", tr.meta}};
  out << header.dump() << '\n';
  std::vector<std::string> key_text(tr.keys().size());
  for (KeyId id = 0; id < tr.keys().size(); ++id) key_text[id] = to_json(tr.keys().dist(id)).dump();
  std::string line;
  for (const auto& rec : tr.days()) {
    line.clear();
    line += "{\"t\":";
    line += std::to_string(rec.t);
    line += ",\"mixture\":[";
    bool first = true;
    for (const auto& e : tr.mixture(rec)) {
      if (!first) line += ',';
      first = false;
      line += '[';
      line += key_text[e.key];
      line += ',';
      line += std::to_string(e.count);
      line += ']';
    }
    line += "],\"realized\":";
    line += rec.realized ? key_text[*rec.realized] : "null";
    line += ",\"outcome\":";
    line += std::to_string(rec.outcome.index);
    line += ",\"dist\":";
    line += rec.adversary ? key_text[*rec.adversary] : "null";
    line += "}\n";
    out << line;
  }
}

inline Transcript read_transcript(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kCorruptRecord, "empty transcript");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptRecord, std::string("header: ") + e.what());
  }
  if (header.value("kind", "") != "header" || header.value("format", "") != kTranscriptFormat) {
    throw Error(ErrorCode::kCorruptRecord, "not a transcript header");
  }
  const auto d = header.at("d").get<std::size_t>();
  const auto days = header.at("T").get<std::uint64_t>();
  Transcript tr(d, header.at("weight_den").get<std::uint32_t>());
  tr.meta = header.value("meta", nlohmann::json::object());

  std::unordered_map<std::string, KeyId> cache;
  auto key_of = [&](const nlohmann::json& j) {
    auto text = j.dump();
    if (auto it = cache.find(text); it != cache.end()) return it->second;
    const KeyId id = tr.keys().intern(dist_from_json(j));
    cache.emplace(std::move(text), id);
    return id;
  };

  std::vector<MixtureEntry> mix;
  Day expected = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      if (rec.at("t").get<Day>() != expected) {
        throw Error(ErrorCode::kCorruptRecord, "day " + std::to_string(expected) + " missing or out of order");
      }
      mix.clear();
      for (const auto& e : rec.at("mixture")) mix.push_back({key_of(e.at(0)), e.at(1).get<std::uint32_t>()});
      std::optional<KeyId> realized;
      if (!rec.at("realized").is_null()) realized = key_of(rec.at("realized"));
      std::optional<KeyId> adversary;
      if (!rec.at("dist").is_null()) adversary = key_of(rec.at("dist"));
      tr.append(mix, realized, Outcome::of(rec.at("outcome").get<std::size_t>(), d), adversary);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCorruptRecord) throw;
      throw Error(ErrorCode::kCorruptRecord, "day " + std::to_string(expected) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptRecord, "day " + std::to_string(expected) + ": " + e.what());
    }
    ++expected;
  }
  if (tr.size() != days) {
    throw Error(ErrorCode::kCorruptRecord, "header promises " + std::to_string(days) + " days, found " + std::to_string(tr.size()));
  }
  return tr;
}

}  // namespace hdcal
