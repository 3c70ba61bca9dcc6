#pragma once

// Domain types shared by every stage of the evaluator. All types validate
// their invariants on construction and are immutable afterwards.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agentseval/error.hpp"
#include "agentseval/text.hpp"

namespace agentseval {

using Json = nlohmann::ordered_json;

enum class Section { findings, impression, whole };

inline std::string_view to_string(Section s) {
  switch (s) {
    case Section::findings: return "findings";
    case Section::impression: return "impression";
    case Section::whole: return "whole";
  }
  return "whole";
}

inline std::optional<Section> parse_section(std::string_view s) {
  const auto key = text::name_key(s);
  if (key == "findings") return Section::findings;
  if (key == "impression") return Section::impression;
  if (key == "whole") return Section::whole;
  return std::nullopt;
}

enum class PerturbationLevel { A1, A2, A3, B1, B2, B3, none };

inline constexpr PerturbationLevel kRewriteLevels[] = {
    PerturbationLevel::A1, PerturbationLevel::A2, PerturbationLevel::A3,
    PerturbationLevel::B1, PerturbationLevel::B2, PerturbationLevel::B3};

inline std::string_view to_string(PerturbationLevel l) {
  switch (l) {
    case PerturbationLevel::A1: return "A1";
    case PerturbationLevel::A2: return "A2";
    case PerturbationLevel::A3: return "A3";
    case PerturbationLevel::B1: return "B1";
    case PerturbationLevel::B2: return "B2";
    case PerturbationLevel::B3: return "B3";
    case PerturbationLevel::none: return "none";
  }
  return "none";
}

inline std::optional<PerturbationLevel> parse_level(std::string_view s) {
  const auto t = text::trim_view(s);
  for (auto l : {PerturbationLevel::A1, PerturbationLevel::A2, PerturbationLevel::A3,
                 PerturbationLevel::B1, PerturbationLevel::B2, PerturbationLevel::B3,
                 PerturbationLevel::none}) {
    if (text::name_key(t) == text::name_key(to_string(l))) return l;
  }
  return std::nullopt;
}

inline bool is_semantic(PerturbationLevel l) {
  return l == PerturbationLevel::B1 || l == PerturbationLevel::B2 || l == PerturbationLevel::B3;
}

/// One evaluation unit: a reference report and the generated report to score.
struct ReportPair {
  std::string id;
  std::string gt_report;
  std::string pred_report;
  std::optional<Section> section;
  std::optional<std::int64_t> error_count;
  std::optional<PerturbationLevel> perturbation;

  bool operator==(const ReportPair&) const = default;
};

/// Returns the pair with both reports trimmed. Throws EmptyReport when either
/// side is blank and InvalidErrorCount for a negative annotated count.
inline ReportPair validate_pair(ReportPair pair) {
  pair.gt_report = text::trim(pair.gt_report);
  pair.pred_report = text::trim(pair.pred_report);
  if (pair.gt_report.empty()) {
    throw Error(ErrorKind::EmptyReport, "pair '" + pair.id + "' has a blank reference report");
  }
  if (pair.pred_report.empty()) {
    throw Error(ErrorKind::EmptyReport, "pair '" + pair.id + "' has a blank generated report");
  }
  if (pair.error_count && *pair.error_count < 0) {
    throw Error(ErrorKind::InvalidErrorCount,
                "pair '" + pair.id + "' has error_count " + std::to_string(*pair.error_count));
  }
  return pair;
}

enum class CriteriaOrigin { base_pool, dynamic };

inline std::string_view to_string(CriteriaOrigin o) {
  return o == CriteriaOrigin::base_pool ? "base_pool" : "dynamic";
}

/// Ordered, duplicate-free list of diagnostic indicator names. Names compare
/// case-insensitively after trimming; the stored spelling is the first seen.
class CriteriaSet {
 public:
  CriteriaSet() = default;

  CriteriaSet(std::vector<std::string> names, CriteriaOrigin origin) : origin_(origin) {
    if (names.empty()) throw Error(ErrorKind::EmptyCriteria, "criteria set must not be empty");
    for (auto& raw : names) {
      auto name = text::trim(raw);
      if (name.empty()) throw Error(ErrorKind::InvalidArgument, "blank criterion name");
      auto key = text::name_key(name);
      if (index_.count(key) != 0) {
        throw Error(ErrorKind::InvalidArgument, "duplicate criterion '" + name + "'");
      }
      index_.emplace(std::move(key), names_.size());
      names_.push_back(std::move(name));
    }
  }

  /// Builds a set from untrusted agent output: blanks are skipped and later
  /// duplicates dropped. `dropped` receives the names that were discarded.
  static CriteriaSet deduplicated(const std::vector<std::string>& names, CriteriaOrigin origin,
                                  std::vector<std::string>* dropped = nullptr) {
    std::vector<std::string> kept;
    std::unordered_map<std::string, bool> seen;
    for (const auto& raw : names) {
      auto name = text::trim(raw);
      if (name.empty()) continue;
      if (!seen.emplace(text::name_key(name), true).second) {
        if (dropped) dropped->push_back(name);
        continue;
      }
      kept.push_back(std::move(name));
    }
    return CriteriaSet(std::move(kept), origin);
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  CriteriaOrigin origin() const noexcept { return origin_; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(text::name_key(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view name) const { return find(name).has_value(); }

  bool same_names(const CriteriaSet& other) const {
    if (other.size() != size()) return false;
    for (const auto& n : other.names_) {
      if (!contains(n)) return false;
    }
    return true;
  }

  bool operator==(const CriteriaSet& o) const { return names_ == o.names_ && origin_ == o.origin_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  CriteriaOrigin origin_ = CriteriaOrigin::dynamic;
};

enum class Side { gt, pred };

/// Criterion name -> extracted evidence. The key set always equals the
/// governing CriteriaSet and entries follow its order.
class ValueDict {
 public:
  ValueDict() = default;

  ValueDict(const CriteriaSet& criteria, const std::vector<std::pair<std::string, std::string>>& entries,
            Side side)
      : side_(side) {
    std::vector<std::optional<std::string>> slots(criteria.size());
    for (const auto& [name, value] : entries) {
      auto idx = criteria.find(name);
      if (!idx) throw Error(ErrorKind::KeySetMismatch, "criterion '" + name + "' is not in the criteria set");
      if (slots[*idx]) throw Error(ErrorKind::KeySetMismatch, "criterion '" + name + "' given twice");
      if (text::trim_view(value).empty()) {
        throw Error(ErrorKind::InvalidArgument, "criterion '" + name + "' has an empty value");
      }
      slots[*idx] = value;
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) {
        throw Error(ErrorKind::KeySetMismatch, "criterion '" + criteria.names()[i] + "' has no value");
      }
      entries_.emplace_back(criteria.names()[i], std::move(*slots[i]));
    }
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
  Side side() const noexcept { return side_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const std::string* find(std::string_view name) const {
    const auto key = text::name_key(name);
    for (const auto& [n, v] : entries_) {
      if (text::name_key(n) == key) return &v;
    }
    return nullptr;
  }

  bool operator==(const ValueDict&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  Side side_ = Side::gt;
};

inline bool is_grid_score(double v) { return v == 0.0 || v == 0.5 || v == 1.0; }

/// A deterministic correction applied on top of the evaluation agent's output.
struct ScoreOverride {
  std::string criterion;
  std::optional<double> original_value;
  std::string reason;

  bool operator==(const ScoreOverride&) const = default;
};

namespace override_reason {
inline constexpr std::string_view kSnapped = "snapped_to_grid";
inline constexpr std::string_view kNotMentioned = "not_mentioned_forced_zero";
inline constexpr std::string_view kMissing = "missing_score";
}  // namespace override_reason

/// Per-criterion agreement scores, each one of {0, 0.5, 1}.
class ScoreDetail {
 public:
  ScoreDetail() = default;

  ScoreDetail(const CriteriaSet& criteria, const std::vector<std::pair<std::string, double>>& scores,
              std::vector<ScoreOverride> overrides = {})
      : overrides_(std::move(overrides)) {
    std::vector<std::optional<double>> slots(criteria.size());
    for (const auto& [name, value] : scores) {
      auto idx = criteria.find(name);
      if (!idx) throw Error(ErrorKind::KeySetMismatch, "criterion '" + name + "' is not in the criteria set");
      if (slots[*idx]) throw Error(ErrorKind::KeySetMismatch, "criterion '" + name + "' scored twice");
      if (!is_grid_score(value)) {
        throw Error(ErrorKind::OutOfRange,
                    "criterion '" + name + "' has score " + std::to_string(value) + " outside {0, 0.5, 1}");
      }
      slots[*idx] = value;
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) throw Error(ErrorKind::KeySetMismatch, "criterion '" + criteria.names()[i] + "' not scored");
      scores_.emplace_back(criteria.names()[i], *slots[i]);
    }
  }

  const std::vector<std::pair<std::string, double>>& scores() const noexcept { return scores_; }
  const std::vector<ScoreOverride>& overrides() const noexcept { return overrides_; }
  std::size_t size() const noexcept { return scores_.size(); }

  bool operator==(const ScoreDetail&) const = default;

 private:
  std::vector<std::pair<std::string, double>> scores_;
  std::vector<ScoreOverride> overrides_;
};

/// Per-criterion importance weights; criteria without an entry use the default.
class WeightMap {
 public:
  WeightMap() = default;

  explicit WeightMap(std::vector<std::pair<std::string, double>> weights, double default_weight = 1.0)
      : default_weight_(default_weight) {
    check(default_weight, "default");
    for (auto& [name, w] : weights) {
      check(w, name);
      weights_[text::name_key(name)] = w;
      names_.emplace_back(text::trim(name), w);
    }
  }

  double weight_for(std::string_view criterion) const {
    auto it = weights_.find(text::name_key(criterion));
    return it == weights_.end() ? default_weight_ : it->second;
  }

  double default_weight() const noexcept { return default_weight_; }
  const std::vector<std::pair<std::string, double>>& entries() const noexcept { return names_; }

  /// Every weight multiplied by `factor` (> 0).
  WeightMap scaled(double factor) const {
    std::vector<std::pair<std::string, double>> w;
    for (const auto& [n, v] : names_) w.emplace_back(n, v * factor);
    return WeightMap(std::move(w), default_weight_ * factor);
  }

  bool operator==(const WeightMap& o) const {
    return default_weight_ == o.default_weight_ && names_ == o.names_;
  }

 private:
  static void check(double w, const std::string& name) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorKind::InvalidArgument, "weight for '" + name + "' must be finite and >= 0");
    }
  }

  std::map<std::string, double> weights_;
  std::vector<std::pair<std::string, double>> names_;
  double default_weight_ = 1.0;
};

/// Full reasoning trace and aggregate for one pair.
struct SampleResult {
  std::string pair_id;
  CriteriaSet base_criteria;
  CriteriaSet dynamic_criteria;
  ValueDict gt_values;
  ValueDict pred_values;
  ScoreDetail score_details;
  double aggregate = 0.0;
  std::vector<std::pair<std::string, double>> timings_ms;
  std::string backend_fingerprint;
  std::vector<std::string> warnings;

  bool operator==(const SampleResult&) const = default;
};

// JSON conversions used by the trace format.

inline Json criteria_to_json(const CriteriaSet& c) { return Json(c.names()); }

inline CriteriaSet criteria_from_json(const Json& j, CriteriaOrigin origin) {
  if (!j.is_array()) throw Error(ErrorKind::SchemaViolation, "criteria must be a JSON array");
  std::vector<std::string> names;
  for (const auto& e : j) {
    if (!e.is_string()) throw Error(ErrorKind::SchemaViolation, "criterion names must be strings");
    names.push_back(e.get<std::string>());
  }
  return CriteriaSet(std::move(names), origin);
}

inline Json values_to_json(const ValueDict& d) {
  Json j = Json::object();
  for (const auto& [k, v] : d.entries()) j[k] = v;
  return j;
}

inline ValueDict values_from_json(const Json& j, const CriteriaSet& criteria, Side side) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "value dict must be a JSON object");
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw Error(ErrorKind::SchemaViolation, "value for '" + k + "' must be a string");
    entries.emplace_back(k, v.get<std::string>());
  }
  return ValueDict(criteria, entries, side);
}

inline Json scores_to_json(const ScoreDetail& d) {
  Json j = Json::object();
  for (const auto& [k, v] : d.scores()) j[k] = v;
  return j;
}

inline Json overrides_to_json(const std::vector<ScoreOverride>& overrides) {
  Json arr = Json::array();
  for (const auto& o : overrides) {
    Json e = Json::object();
    e["criterion"] = o.criterion;
    e["original_value"] = o.original_value ? Json(*o.original_value) : Json(nullptr);
    e["reason"] = o.reason;
    arr.push_back(std::move(e));
  }
  return arr;
}

inline std::vector<ScoreOverride> overrides_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::SchemaViolation, "overrides must be a JSON array");
  std::vector<ScoreOverride> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("criterion") || !e.contains("reason") || !e["criterion"].is_string() ||
        !e["reason"].is_string()) {
      throw Error(ErrorKind::SchemaViolation, "malformed override entry");
    }
    ScoreOverride o;
    o.criterion = e["criterion"].get<std::string>();
    o.reason = e["reason"].get<std::string>();
    if (e.contains("original_value") && e["original_value"].is_number()) {
      o.original_value = e["original_value"].get<double>();
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline ScoreDetail scores_from_json(const Json& j, const CriteriaSet& criteria, std::vector<ScoreOverride> overrides) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "score details must be a JSON object");
  std::vector<std::pair<std::string, double>> scores;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) throw Error(ErrorKind::SchemaViolation, "score for '" + k + "' must be a number");
    scores.emplace_back(k, v.get<double>());
  }
  return ScoreDetail(criteria, scores, std::move(overrides));
}

inline Json weights_to_json(const WeightMap& w) {
  Json j = Json::object();
  j["default"] = w.default_weight();
  Json entries = Json::object();
  for (const auto& [n, v] : w.entries()) entries[n] = v;
  j["weights"] = std::move(entries);
  return j;
}

/// Accepts either {"default": d, "weights": {...}} or a flat {name: weight} map.
inline WeightMap weights_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "weights must be a JSON object");
  double def = 1.0;
  const Json* table = &j;
  if (j.contains("weights") && j["weights"].is_object()) {
    table = &j["weights"];
    if (j.contains("default")) {
      if (!j["default"].is_number()) throw Error(ErrorKind::Config, "weights.default must be a number");
      def = j["default"].get<double>();
    }
  }
  std::vector<std::pair<std::string, double>> entries;
  for (const auto& [k, v] : table->items()) {
    if (table == &j && k == "default") {
      if (!v.is_number()) throw Error(ErrorKind::Config, "default weight must be a number");
      def = v.get<double>();
      continue;
    }
    if (!v.is_number()) throw Error(ErrorKind::Config, "weight for '" + k + "' must be a number");
    entries.emplace_back(k, v.get<double>());
  }
  return WeightMap(std::move(entries), def);
}

}  // namespace agentseval
