#pragma once

// LLM-driven rewrites of clean reports into the A (meaning-preserving) and
// B (fact-altering) perturbation levels, plus a heuristic intensity check.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentseval/core.hpp"
#include "agentseval/error.hpp"
#include "agentseval/llmclient.hpp"
#include "agentseval/log.hpp"
#include "agentseval/pipeline.hpp"
#include "agentseval/prompts.hpp"
#include "agentseval/textmetrics.hpp"

namespace agentseval::perturb {

/// Level definitions used as the rewrite instruction.
inline std::string_view level_definition(PerturbationLevel l) {
  switch (l) {
    case PerturbationLevel::A1:
      return "A1 (Light paraphrase): minor adjustments to wording or sentence flow while retaining identical "
             "semantics.";
    case PerturbationLevel::A2:
      return "A2 (Moderate paraphrase): noticeable restructuring of expressions and phrasing, preserving all factual "
             "and clinical details.";
    case PerturbationLevel::A3:
      return "A3 (Strong paraphrase): extensive reformulation with significant stylistic and syntactic divergence, "
             "yet conveying the same medical meaning.";
    case PerturbationLevel::B1:
      return "B1 (Mild semantic deviation): subtle term-level edits that slightly alter clinical implication (e.g., "
             "\"tiny lesion\" to \"small lesion\").";
    case PerturbationLevel::B2:
      return "B2 (Moderate deviation): partial alteration of core findings or relationships, affecting roughly half "
             "of the sentences.";
    case PerturbationLevel::B3:
      return "B3 (Severe deviation): extensive factual inversion or contradiction across most findings (90% of "
             "statements), resulting in clinically incorrect interpretations.";
    case PerturbationLevel::none: break;
  }
  throw Error(ErrorKind::InvalidArgument, "level 'none' has no rewrite definition");
}

inline constexpr std::string_view kRewriteSystem =
    R"(You rewrite medical imaging reports to build a benchmark for report evaluation metrics.

Rewrite level:
{{level_definition}}

{{level_instruction}}

Return only the rewritten report as plain text. Do not add headings, notes or explanations.)";

inline constexpr std::string_view kRewriteUser = R"(Original report:
{{report}})";

inline constexpr std::string_view kPreserveInstruction =
    "Every finding, measurement, laterality, severity and degree of certainty must stay exactly as in the original. "
    "Only the wording may change.";

inline constexpr std::string_view kAlterInstruction =
    "Change the clinical content as the level describes. Target about {{fraction}} of the statements. The result "
    "must still read like a fluent, plausible report.";

inline constexpr std::string_view kAlterQualitative =
    "Change the clinical content as the level describes. The result must still read like a fluent, plausible report.";

inline PromptTemplate default_rewrite_template() { return {std::string(kRewriteSystem), std::string(kRewriteUser)}; }

/// Loads `perturb.system.txt` / `perturb.user.txt` from a prompt directory,
/// falling back to the defaults for whichever file is absent.
inline PromptTemplate rewrite_template_from_directory(const std::filesystem::path& dir) {
  auto t = default_rewrite_template();
  auto load = [](const std::filesystem::path& p, std::string& dst) {
    if (std::filesystem::exists(p)) dst = detail::read_text_file(p);
  };
  load(dir / "perturb.system.txt", t.system_text);
  load(dir / "perturb.user.txt", t.user_text);
  return t;
}

struct PerturbationSpec {
  PerturbationLevel level = PerturbationLevel::A1;
  std::optional<double> target_alteration_fraction;  // B-levels only
  std::optional<PromptTemplate> prompt_override;

  /// Spec with the level's default fraction: B2 0.5, B3 0.9, none otherwise.
  static PerturbationSpec for_level(PerturbationLevel level) {
    PerturbationSpec s;
    s.level = level;
    if (level == PerturbationLevel::B2) s.target_alteration_fraction = 0.5;
    if (level == PerturbationLevel::B3) s.target_alteration_fraction = 0.9;
    s.validate();
    return s;
  }

  void validate() const {
    if (level == PerturbationLevel::none) throw Error(ErrorKind::InvalidArgument, "cannot rewrite at level 'none'");
    if (target_alteration_fraction) {
      if (!is_semantic(level)) {
        throw Error(ErrorKind::InvalidArgument, "A-levels take no alteration fraction");
      }
      const double f = *target_alteration_fraction;
      if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alteration fraction must be in [0, 1]");
    }
  }
};

inline std::string percent_text(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", fraction * 100.0);
  return buf;
}

inline PromptValues rewrite_values(const std::string& report, const PerturbationSpec& spec) {
  std::string instruction;
  if (!is_semantic(spec.level)) {
    instruction = std::string(kPreserveInstruction);
  } else if (spec.target_alteration_fraction) {
    instruction = render(kAlterInstruction, PromptValues{{"fraction", percent_text(*spec.target_alteration_fraction)}});
  } else {
    instruction = std::string(kAlterQualitative);
  }
  return {{"level", std::string(to_string(spec.level))},
          {"level_definition", std::string(level_definition(spec.level))},
          {"level_instruction", instruction},
          {"report", report}};
}

struct Rewrite {
  std::string text;
  llm::ChatExchange exchange;
};

/// One rewrite of `report` at the spec's level. The reply is returned as is.
inline Rewrite perturb_report(const std::string& report, const PerturbationSpec& spec, llm::Backend& backend,
                              const std::string& sample_id = "") {
  spec.validate();
  if (text::trim_view(report).empty()) throw Error(ErrorKind::EmptyReport, "cannot rewrite a blank report");
  const auto tmpl = spec.prompt_override.value_or(default_rewrite_template());
  const auto values = rewrite_values(report, spec);
  llm::CallContext ctx{"perturb_" + std::string(to_string(spec.level)), sample_id, 1};
  Rewrite out;
  out.exchange = backend.complete(render(tmpl.system_text, values), render(tmpl.user_text, values), ctx);
  out.text = out.exchange.response_text;
  if (text::trim_view(out.text).empty()) {
    throw Error(ErrorKind::EmptyRewrite, "empty rewrite for '" + sample_id + "' at " + ctx.role);
  }
  return out;
}

enum class IntensityWarning { NoChangeDetected, ExtremeDivergence };

inline std::string_view to_string(IntensityWarning w) {
  return w == IntensityWarning::NoChangeDetected ? "NoChangeDetected" : "ExtremeDivergence";
}

/// A-level rewrites sharing fewer tokens than this are flagged as divergent.
inline constexpr double kDivergenceJaccard = 0.1;

struct IntensityReport {
  std::size_t original_sentences = 0;
  std::size_t rewritten_sentences = 0;
  double jaccard = 0.0;          // |A ∩ B| / |A ∪ B| over token sets
  double unigram_overlap = 0.0;  // clipped share of original tokens kept
  std::vector<IntensityWarning> warnings;
};

/// Sentences end at '.', '!' or '?' followed by whitespace or end of text,
/// or at a line break. Decimal points do not split.
inline std::size_t count_sentences(std::string_view s) {
  std::size_t count = 0;
  bool content = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool at_end = i + 1 == s.size();
    const bool terminal =
        c == '\n' || ((c == '.' || c == '!' || c == '?') &&
                      (at_end || s[i + 1] == ' ' || s[i + 1] == '\n' || s[i + 1] == '\t' || s[i + 1] == '\r'));
    if (terminal) {
      if (content) ++count;
      content = false;
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      content = true;
    }
  }
  if (content) ++count;
  return count;
}

inline IntensityReport check_intensity(const std::string& original, const std::string& rewritten,
                                       const PerturbationSpec& spec) {
  IntensityReport r;
  r.original_sentences = count_sentences(original);
  r.rewritten_sentences = count_sentences(rewritten);
  const auto a = metrics::tokenize(original).tokens;
  const auto b = metrics::tokenize(rewritten).tokens;
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  r.jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);

  std::map<std::string, std::size_t> rest;
  for (const auto& t : b) ++rest[t];
  std::size_t kept = 0;
  for (const auto& t : a) {
    if (auto it = rest.find(t); it != rest.end() && it->second > 0) {
      --it->second;
      ++kept;
    }
  }
  r.unigram_overlap = a.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(a.size());

  if (is_semantic(spec.level)) {
    if (text::trim_view(original) == text::trim_view(rewritten)) r.warnings.push_back(IntensityWarning::NoChangeDetected);
  } else {
    if (r.jaccard == 1.0) r.warnings.push_back(IntensityWarning::NoChangeDetected);
    if (r.jaccard < kDivergenceJaccard) r.warnings.push_back(IntensityWarning::ExtremeDivergence);
  }
  return r;
}

struct PerturbFailure {
  std::string pair_id;
  PerturbationLevel level = PerturbationLevel::none;
  ErrorKind kind = ErrorKind::InvalidArgument;
  std::string message;
};

struct PerturbCell {
  std::string row_id;
  PerturbationLevel level = PerturbationLevel::none;
  IntensityReport intensity;
};

struct PerturbedManifest {
  std::vector<ReportPair> rows;  // sample-major, levels in the given order
  std::vector<PerturbCell> cells;
  std::vector<PerturbFailure> failures;
  std::vector<llm::ChatExchange> exchanges;
};

inline std::string perturbed_id(const std::string& id, PerturbationLevel level) {
  return id + "-" + std::string(to_string(level));
}

/// One row per (sample, level) with gt = original and pred = rewrite. Failed
/// cells are skipped and listed; intensity warnings are logged, never fatal.
inline PerturbedManifest build_perturbed_manifest(const std::vector<ReportPair>& clean,
                                                  const std::vector<PerturbationSpec>& levels, llm::Backend& backend,
                                                  int max_parallel = 1) {
  if (clean.empty()) throw Error(ErrorKind::EmptyInput, "clean manifest is empty");
  if (levels.empty()) throw Error(ErrorKind::InvalidArgument, "no perturbation levels requested");
  for (const auto& s : levels) s.validate();

  const std::size_t cells = clean.size() * levels.size();
  std::vector<std::optional<Rewrite>> rewrites(cells);
  std::vector<std::optional<PerturbFailure>> failures(cells);
  detail::parallel_for(cells, max_parallel, [&](std::size_t c) {
    const auto& pair = clean[c / levels.size()];
    const auto& spec = levels[c % levels.size()];
    try {
      rewrites[c] = perturb_report(pair.gt_report, spec, backend, pair.id);
    } catch (const Error& e) {
      failures[c] = PerturbFailure{pair.id, spec.level, e.kind(), e.message()};
    }
  });

  PerturbedManifest out;
  for (std::size_t c = 0; c < cells; ++c) {
    const auto& pair = clean[c / levels.size()];
    const auto& spec = levels[c % levels.size()];
    if (failures[c]) {
      log::warn("rewrite " + perturbed_id(pair.id, spec.level) + " failed: " + failures[c]->message);
      out.failures.push_back(std::move(*failures[c]));
      continue;
    }
    ReportPair row;
    row.id = perturbed_id(pair.id, spec.level);
    row.gt_report = pair.gt_report;
    row.pred_report = text::trim(rewrites[c]->text);
    row.section = pair.section;
    row.perturbation = spec.level;
    auto intensity = check_intensity(row.gt_report, row.pred_report, spec);
    for (auto w : intensity.warnings) log::warn(row.id + ": " + std::string(to_string(w)));
    out.cells.push_back({row.id, spec.level, std::move(intensity)});
    out.rows.push_back(std::move(row));
    out.exchanges.push_back(std::move(rewrites[c]->exchange));
  }
  return out;
}

}  // namespace agentseval::perturb
