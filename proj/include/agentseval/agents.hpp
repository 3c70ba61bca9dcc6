#pragma once

// The five pipeline agents and the two single-agent baselines. Every agent is
// a prompt, one backend call, and a parser that turns the raw reply into a
// validated structure. Parsers are free functions so recorded replies can be
// re-validated without a backend.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agentseval/core.hpp"
#include "agentseval/error.hpp"
#include "agentseval/llmclient.hpp"
#include "agentseval/log.hpp"
#include "agentseval/prompts.hpp"
#include "agentseval/text.hpp"

namespace agentseval {

namespace repair {
inline constexpr std::string_view kFenceStrip = "fence-strip";
inline constexpr std::string_view kPrefixDrop = "prefix-drop";
inline constexpr std::string_view kSuffixDrop = "suffix-drop";
inline constexpr std::string_view kTrailingComma = "trailing-comma-fix";
}  // namespace repair

struct ExtractedJson {
  Json value;
  std::vector<std::string> repairs;
};

namespace detail {

// Index of the bracket closing the value opened at `start`, or npos.
inline std::size_t find_balanced_end(std::string_view s, std::size_t start) {
  std::string stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      stack.push_back(c == '[' ? ']' : '}');
    } else if (c == ']' || c == '}') {
      if (stack.empty() || stack.back() != c) return std::string_view::npos;
      stack.pop_back();
      if (stack.empty()) return i;
    }
  }
  return std::string_view::npos;
}

inline std::string strip_trailing_commas(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && (s[j] == ' ' || s[j] == '\n' || s[j] == '\r' || s[j] == '\t')) ++j;
      if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

inline std::optional<ExtractedJson> scan_for_json(std::string_view s) {
  for (std::size_t start = 0; start < s.size(); ++start) {
    if (s[start] != '[' && s[start] != '{') continue;
    const auto end = find_balanced_end(s, start);
    if (end == std::string_view::npos) continue;
    const auto candidate = s.substr(start, end - start + 1);
    ExtractedJson out;
    out.value = Json::parse(candidate, nullptr, false);
    if (out.value.is_discarded()) {
      out.value = Json::parse(strip_trailing_commas(candidate), nullptr, false);
      if (out.value.is_discarded()) continue;
      out.repairs.emplace_back(repair::kTrailingComma);
    }
    if (!text::trim_view(s.substr(0, start)).empty()) out.repairs.insert(out.repairs.begin(), std::string(repair::kPrefixDrop));
    if (!text::trim_view(s.substr(end + 1)).empty()) out.repairs.emplace_back(repair::kSuffixDrop);
    return out;
  }
  return std::nullopt;
}

}  // namespace detail

/// Pulls the first well-formed JSON array or object out of model output.
/// Code fences are stripped first; surrounding prose is dropped; trailing
/// commas are repaired. Each repair is recorded in order of application.
inline ExtractedJson extract_json(std::string_view raw) {
  const auto fence = raw.find("```");
  if (fence != std::string_view::npos) {
    auto body_start = raw.find('\n', fence);
    body_start = body_start == std::string_view::npos ? fence + 3 : body_start + 1;
    const auto close = raw.find("```", body_start);
    const auto body = raw.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
    if (auto found = detail::scan_for_json(body)) {
      found->repairs.insert(found->repairs.begin(), std::string(repair::kFenceStrip));
      return std::move(*found);
    }
  }
  if (auto found = detail::scan_for_json(raw)) return std::move(*found);
  throw Error(ErrorKind::UnparseableOutput, "no JSON array or object found in model output");
}

/// Validated agent output plus the calls that produced it.
template <typename T>
struct AgentOutput {
  T value;
  std::vector<llm::ChatExchange> exchanges;
  std::vector<std::string> repairs;
  std::vector<std::string> warnings;
};

template <typename T>
struct Parsed {
  T value;
  std::vector<std::string> repairs;
  std::vector<std::string> warnings;
};

// ---- parsers --------------------------------------------------------------

namespace detail {

inline std::vector<std::string> string_items(const Json& arr, std::vector<std::string>& warnings) {
  std::vector<std::string> names;
  for (const auto& e : arr) {
    if (e.is_string()) {
      names.push_back(e.get<std::string>());
    } else {
      warnings.push_back("ignored non-string list item " + e.dump());
    }
  }
  return names;
}

inline std::string value_text(const Json& v) {
  if (v.is_null()) return std::string(text::kNotMentioned);
  if (v.is_string()) return text::trim(v.get_ref<const std::string&>());
  if (v.is_array()) {
    std::string joined;
    for (const auto& e : v) {
      if (!joined.empty()) joined += "; ";
      joined += e.is_string() ? e.get<std::string>() : e.dump();
    }
    return text::trim(joined);
  }
  return v.dump();
}

}  // namespace detail

/// Base-pool reply: JSON array of names, deduplicated, truncated to K.
inline Parsed<CriteriaSet> parse_base_pool(std::string_view raw, int k) {
  auto ex = extract_json(raw);
  if (!ex.value.is_array()) throw Error(ErrorKind::UnparseableOutput, "base pool reply is not a JSON array");
  Parsed<CriteriaSet> out;
  out.repairs = std::move(ex.repairs);
  auto names = detail::string_items(ex.value, out.warnings);
  std::vector<std::string> unique;
  {
    std::vector<std::string> seen;
    for (auto& n : names) {
      auto t = text::trim(n);
      if (t.empty()) continue;
      const auto key = text::name_key(t);
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
        out.warnings.push_back("dropped duplicate criterion '" + t + "'");
        continue;
      }
      seen.push_back(key);
      unique.push_back(std::move(t));
    }
  }
  if (unique.empty()) throw Error(ErrorKind::EmptyPool, "base pool reply contained no criteria");
  if (unique.size() > static_cast<std::size_t>(k)) {
    out.warnings.push_back("truncated base pool from " + std::to_string(unique.size()) + " to " + std::to_string(k));
    unique.resize(static_cast<std::size_t>(k));
  }
  out.value = CriteriaSet(std::move(unique), CriteriaOrigin::base_pool);
  return out;
}

/// Criteria-identifier reply: JSON array of names, deduplicated in order.
inline Parsed<CriteriaSet> parse_criteria(std::string_view raw) {
  auto ex = extract_json(raw);
  if (!ex.value.is_array()) throw Error(ErrorKind::UnparseableOutput, "criteria reply is not a JSON array");
  Parsed<CriteriaSet> out;
  out.repairs = std::move(ex.repairs);
  auto names = detail::string_items(ex.value, out.warnings);
  bool any = false;
  for (const auto& n : names) any = any || !text::trim_view(n).empty();
  if (!any) throw Error(ErrorKind::EmptyCriteria, "criteria reply contained no criteria");
  std::vector<std::string> dropped;
  out.value = CriteriaSet::deduplicated(names, CriteriaOrigin::dynamic, &dropped);
  for (const auto& d : dropped) out.warnings.push_back("dropped duplicate criterion '" + d + "'");
  return out;
}

/// GT-analyzer / prediction-matcher reply: JSON object of criterion -> text.
/// Missing criteria become "Not mentioned", unknown keys are dropped.
inline Parsed<ValueDict> parse_values(std::string_view raw, const CriteriaSet& criteria, Side side) {
  auto ex = extract_json(raw);
  if (!ex.value.is_object()) throw Error(ErrorKind::UnparseableOutput, "extraction reply is not a JSON object");
  Parsed<ValueDict> out;
  out.repairs = std::move(ex.repairs);
  std::vector<std::optional<std::string>> slots(criteria.size());
  for (const auto& [key, v] : ex.value.items()) {
    const auto idx = criteria.find(key);
    if (!idx) {
      out.warnings.push_back("dropped unknown key '" + key + "'");
      continue;
    }
    if (slots[*idx]) {
      out.warnings.push_back("ignored repeated key '" + key + "'");
      continue;
    }
    auto value = detail::value_text(v);
    if (value.empty()) {
      out.warnings.push_back("empty value for '" + key + "' treated as Not mentioned");
      value = std::string(text::kNotMentioned);
    }
    slots[*idx] = std::move(value);
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& name = criteria.names()[i];
    if (!slots[i]) {
      out.warnings.push_back("filled missing key '" + name + "' with Not mentioned");
      entries.emplace_back(name, std::string(text::kNotMentioned));
    } else {
      entries.emplace_back(name, std::move(*slots[i]));
    }
  }
  out.value = ValueDict(criteria, entries, side);
  return out;
}

/// Nearest of {0, 0.5, 1}; exact midpoints (0.25, 0.75) go to 0.5.
inline double snap_to_grid(double v) {
  const double d0 = std::abs(v);
  const double d5 = std::abs(v - 0.5);
  const double d1 = std::abs(v - 1.0);
  if (d5 <= d0 && d5 <= d1) return 0.5;
  return d0 < d1 ? 0.0 : 1.0;
}

/// Evaluation reply: JSON object of criterion -> score. Off-grid scores are
/// snapped, any criterion whose GT or prediction value is "Not mentioned" is
/// forced to 0, and a missing score counts as 0. Every correction becomes an
/// override entry.
inline Parsed<ScoreDetail> parse_scores(std::string_view raw, const CriteriaSet& criteria, const ValueDict& gt,
                                        const ValueDict& pred) {
  auto ex = extract_json(raw);
  if (!ex.value.is_object()) throw Error(ErrorKind::UnparseableOutput, "evaluation reply is not a JSON object");
  Parsed<ScoreDetail> out;
  out.repairs = std::move(ex.repairs);

  std::vector<std::optional<double>> raw_scores(criteria.size());
  for (const auto& [key, v] : ex.value.items()) {
    const auto idx = criteria.find(key);
    if (!idx) {
      out.warnings.push_back("dropped score for unknown key '" + key + "'");
      continue;
    }
    if (raw_scores[*idx]) continue;
    double score = 0.0;
    if (v.is_number()) {
      score = v.get<double>();
    } else if (v.is_boolean()) {
      score = v.get<bool>() ? 1.0 : 0.0;
    } else if (v.is_string()) {
      const auto s = text::trim(v.get<std::string>());
      char* end = nullptr;
      score = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) {
        throw Error(ErrorKind::UnparseableOutput, "score for '" + key + "' is not numeric: " + v.dump());
      }
    } else {
      throw Error(ErrorKind::UnparseableOutput, "score for '" + key + "' is not numeric: " + v.dump());
    }
    if (!std::isfinite(score)) throw Error(ErrorKind::UnparseableOutput, "score for '" + key + "' is not finite");
    raw_scores[*idx] = score;
  }

  std::vector<std::pair<std::string, double>> scores;
  std::vector<ScoreOverride> overrides;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& name = criteria.names()[i];
    const auto* gv = gt.find(name);
    const auto* pv = pred.find(name);
    const bool sentinel = (gv && text::is_not_mentioned(*gv)) || (pv && text::is_not_mentioned(*pv));
    if (!raw_scores[i]) {
      overrides.push_back({name, std::nullopt, std::string(override_reason::kMissing)});
      scores.emplace_back(name, 0.0);
      continue;
    }
    const double r = *raw_scores[i];
    if (sentinel) {
      if (r != 0.0) overrides.push_back({name, r, std::string(override_reason::kNotMentioned)});
      scores.emplace_back(name, 0.0);
      continue;
    }
    const double snapped = snap_to_grid(r);
    if (snapped != r) overrides.push_back({name, r, std::string(override_reason::kSnapped)});
    scores.emplace_back(name, snapped);
  }
  out.value = ScoreDetail(criteria, scores, std::move(overrides));
  return out;
}

/// Single-agent rating. Accepts {"score": x}, "N/100", a "score: x" label or a
/// bare number; values in (1, 100] are read as percentages.
inline Parsed<double> parse_single_score(std::string_view raw) {
  Parsed<double> out;
  std::optional<double> value;
  const std::string s(raw);

  try {
    auto ex = extract_json(raw);
    if (ex.value.is_object()) {
      for (const auto& [k, v] : ex.value.items()) {
        if (text::name_key(k) == "score" && v.is_number()) {
          value = v.get<double>();
          out.repairs = std::move(ex.repairs);
        }
      }
    }
  } catch (const Error&) {
  }

  auto last_match = [&](const std::regex& re, int group) -> std::optional<double> {
    std::optional<double> found;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      found = std::strtod((*it)[group].str().c_str(), nullptr);
    }
    return found;
  };
  if (!value) {
    static const std::regex per_hundred(R"((-?\d+(?:\.\d+)?)\s*/\s*100\b)");
    if (auto v = last_match(per_hundred, 1)) value = *v / 100.0;
  }
  if (!value) {
    static const std::regex labelled(R"(score\s*(?:[:=]|is)?\s*\**\s*(-?\d+(?:\.\d+)?))", std::regex::icase);
    value = last_match(labelled, 1);
  }
  if (!value) {
    auto t = text::trim(raw);
    while (!t.empty() && (t.back() == '.' || t.back() == '%')) t.pop_back();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (!t.empty() && end == t.c_str() + t.size()) value = v;
  }
  if (!value || !std::isfinite(*value)) throw Error(ErrorKind::UnparseableOutput, "no score found in reply");
  double v = *value;
  if (v > 1.0 && v <= 100.0) v /= 100.0;
  if (v < 0.0 || v > 1.0) throw Error(ErrorKind::OutOfRange, "score " + std::to_string(*value) + " outside [0, 1]");
  out.value = v;
  return out;
}

// ---- agents ---------------------------------------------------------------

enum class SingleVariant { detailed, simple };

inline constexpr std::string_view kJsonReminder = "\n\nReturn only valid JSON.";
inline constexpr std::string_view kScoreReminder = "\n\nReturn only the final score as a number between 0 and 1.";

/// Runs agents against one backend and prompt catalog. Stateless apart from
/// the references it holds, so one instance may serve concurrent samples.
class Agents {
 public:
  Agents(llm::Backend& backend, const PromptCatalog& prompts) : backend_(backend), prompts_(prompts) {}

  AgentOutput<CriteriaSet> base_pool_generator(const std::vector<std::string>& reports, int k,
                                               const std::string& sample_id = "pool") const {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "K must be >= 1");
    if (reports.empty()) throw Error(ErrorKind::InvalidArgument, "base pool needs at least one report");
    PromptValues values{{"K", std::to_string(k)}, {"reports", Json(reports).dump()}};
    return run<CriteriaSet>(AgentRole::base_pool, values, sample_id, kJsonReminder,
                            [k](std::string_view raw) { return parse_base_pool(raw, k); });
  }

  AgentOutput<CriteriaSet> criteria_identifier(const std::string& gt, const CriteriaSet& base,
                                               const std::string& sample_id) const {
    if (base.empty()) throw Error(ErrorKind::InvalidArgument, "base pool is empty");
    PromptValues values{{"base_criteria", criteria_to_json(base).dump()}, {"gt_report", gt}};
    return run<CriteriaSet>(AgentRole::criteria, values, sample_id, kJsonReminder,
                            [](std::string_view raw) { return parse_criteria(raw); });
  }

  AgentOutput<ValueDict> gt_analyzer(const std::string& gt, const CriteriaSet& criteria,
                                     const std::string& sample_id) const {
    return extract_values(AgentRole::gt_analyzer, gt, criteria, Side::gt, sample_id);
  }

  AgentOutput<ValueDict> prediction_matcher(const std::string& pred, const CriteriaSet& criteria,
                                            const std::string& sample_id) const {
    return extract_values(AgentRole::pred_matcher, pred, criteria, Side::pred, sample_id);
  }

  AgentOutput<ScoreDetail> evaluation_agent(const CriteriaSet& criteria, const ValueDict& gt, const ValueDict& pred,
                                            const std::string& sample_id) const {
    const CriteriaSet gt_keys = keys_of(gt);
    if (!gt_keys.same_names(keys_of(pred)) || !gt_keys.same_names(criteria)) {
      throw Error(ErrorKind::KeySetMismatch, "GT and prediction dictionaries cover different criteria");
    }
    PromptValues values{{"criteria_list", criteria_to_json(criteria).dump()},
                        {"gt_dict", values_to_json(gt).dump(2)},
                        {"pred_dict", values_to_json(pred).dump(2)}};
    return run<ScoreDetail>(AgentRole::evaluator, values, sample_id, kJsonReminder,
                            [&](std::string_view raw) { return parse_scores(raw, criteria, gt, pred); });
  }

  AgentOutput<double> single_agent(const std::string& gt, const std::string& pred, SingleVariant variant,
                                   const std::string& sample_id) const {
    const auto role = variant == SingleVariant::detailed ? AgentRole::single_detailed : AgentRole::single_simple;
    PromptValues values{{"gt_report", gt}, {"prediction_report", pred}};
    return run<double>(role, values, sample_id, kScoreReminder,
                       [](std::string_view raw) { return parse_single_score(raw); });
  }

 private:
  static CriteriaSet keys_of(const ValueDict& d) {
    std::vector<std::string> names;
    for (const auto& [k, v] : d.entries()) names.push_back(k);
    return CriteriaSet(std::move(names), CriteriaOrigin::dynamic);
  }

  AgentOutput<ValueDict> extract_values(AgentRole role, const std::string& report, const CriteriaSet& criteria,
                                        Side side, const std::string& sample_id) const {
    if (criteria.empty()) throw Error(ErrorKind::InvalidArgument, "criteria set is empty");
    PromptValues values{{"criteria_list", criteria_to_json(criteria).dump()},
                        {side == Side::gt ? "gt_report" : "prediction_report", report}};
    return run<ValueDict>(role, values, sample_id, kJsonReminder,
                          [&](std::string_view raw) { return parse_values(raw, criteria, side); });
  }

  // One call, one parse; an unparseable reply earns a single re-prompt with a
  // reminder appended to the user message.
  template <typename T, typename ParseFn>
  AgentOutput<T> run(AgentRole role, const PromptValues& values, const std::string& sample_id,
                     std::string_view reminder, ParseFn parse) const {
    const auto& tmpl = prompts_.get(role);
    const auto system = render(tmpl.system_text, values);
    const auto user = render(tmpl.user_text, values);
    AgentOutput<T> out;
    for (int attempt = 1;; ++attempt) {
      llm::CallContext ctx{std::string(to_string(role)), sample_id, attempt};
      auto ex = backend_.complete(system, attempt == 1 ? user : user + std::string(reminder), ctx);
      const std::string response = ex.response_text;
      out.exchanges.push_back(std::move(ex));
      try {
        auto parsed = parse(response);
        out.value = std::move(parsed.value);
        out.repairs = std::move(parsed.repairs);
        out.warnings = std::move(parsed.warnings);
        for (const auto& w : out.warnings) log::warn(std::string(to_string(role)) + "/" + sample_id + ": " + w);
        return out;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::UnparseableOutput || attempt >= 2) throw;
        log::warn(std::string(to_string(role)) + "/" + sample_id + ": re-prompting after " + e.what());
      }
    }
  }

  llm::Backend& backend_;
  const PromptCatalog& prompts_;
};

}  // namespace agentseval
