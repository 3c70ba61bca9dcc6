#pragma once

// Prompt templates for every agent role. Templates are plain text with
// {{placeholder}} markers and can be replaced from files on disk.

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "agentseval/error.hpp"

namespace agentseval {

enum class AgentRole { base_pool, criteria, gt_analyzer, pred_matcher, evaluator, single_detailed, single_simple };

inline constexpr std::array kAllRoles = {AgentRole::base_pool,    AgentRole::criteria,        AgentRole::gt_analyzer,
                                         AgentRole::pred_matcher, AgentRole::evaluator,       AgentRole::single_detailed,
                                         AgentRole::single_simple};

inline std::string_view to_string(AgentRole r) {
  switch (r) {
    case AgentRole::base_pool: return "base_pool";
    case AgentRole::criteria: return "criteria";
    case AgentRole::gt_analyzer: return "gt_analyzer";
    case AgentRole::pred_matcher: return "pred_matcher";
    case AgentRole::evaluator: return "evaluator";
    case AgentRole::single_detailed: return "single_detailed";
    case AgentRole::single_simple: return "single_simple";
  }
  return "unknown";
}

struct PromptTemplate {
  std::string system_text;
  std::string user_text;
};

using PromptValues = std::map<std::string, std::string, std::less<>>;

/// Substitutes every {{name}} marker. A marker without a value is an error,
/// and substituted text is never rescanned.
inline std::string render(std::string_view tmpl, const PromptValues& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error(ErrorKind::Template, "unterminated placeholder");
    out.append(tmpl.substr(pos, open - pos));
    const auto name = tmpl.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) throw Error(ErrorKind::Template, "no value for placeholder {{" + std::string(name) + "}}");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

namespace prompts {

inline constexpr std::string_view kBasePoolSystem =
    R"P(You are a medical report knowledge extractor. Your goal is to automatically construct an initial pool of clinically meaningful diagnostic indicators ("base criteria") from a batch of ground-truth reports in any medical domain.

Given a set of ground-truth reports and your task is to identify the top-K most important, recurrent, and clinically relevant diagnostic indicators that summarize the key concepts or critical points across the batch.

Requirements:
1. Analyze all provided reports and extract candidate diagnostic indicators (phrases or short names).
2. Prioritize indicators that are:
   - clinically meaningful and actionable,
   - semantically distinct (avoid duplicates),
   - representative of the domain (frequent or high-priority findings).
3. Select exactly the top-K indicators and return them as a JSON array of strings.
4. Output must be concise, standardized, and evaluation-ready.
5. Do not include explanations, counts, metadata, or examples—return only the JSON list.
6. If fewer than K meaningful indicators are found, return all unique best candidates.

Example output:
[
"Organ Enlargement",
"Inflammatory Lesions",
"Fluid Accumulation",
"Mass Lesion",
"Abnormal Lab Finding"
])P";

inline constexpr std::string_view kBasePoolUser =
    R"P(Number of indicators to output (K): {{K}}

Ground-truth reports:
{{reports}}

Instruction:
Extract and return the top-K clinically meaningful indicators across the provided reports.
Return only a JSON array of up to K unique indicator names.)P";

inline constexpr std::string_view kCriteriaSystem =
    R"P(You are a professional thoracic radiology expert responsible for identifying clinically meaningful assessment
indicators from chest CT reports.

Basic reference indicators (for reference only):
{{base_criteria}}

Your tasks:
1. Select indicators relevant to the report content.
2. Remove indicators not mentioned or irrelevant.
3. Add any new, report-specific findings (e.g., pneumonia pattern, COVID-19–related findings, metastases).
4. Ensure each indicator is clinically interpretable and judgeable.
5. Return a pure JSON list of indicator names.

Output requirements:
- Use standard English medical terminology (CT-based)
- Use consistent style similar to the reference indicators
- Return only JSON list

Example output:

[
"Ground-glass Opacities",
"Pleural Effusion or Thickening",
"Lymph Node Status (Mediastinal/Hilar)",
"Hiatal Hernia"
])P";

inline constexpr std::string_view kCriteriaUser = "{{gt_report}}";

inline constexpr std::string_view kGtAnalyzerSystem =
    R"P(You are a thoracic radiologist responsible for extracting values of specific diagnostic indicators from chest CT
reports.

Indicators to extract:
{{criteria_list}}

Extraction rules:
1. Extract directly from the GT report using original wording.
2. Each indicator must correspond exactly to its name.
3. If not described, set as "Not mentioned".
4. Use standard CT radiology expressions.
5. Return JSON only.

Example output:

{
  "Ground-glass Opacities": "Diffuse bilateral lower lobe involvement consistent with viral pneumonia",
  "Pleural Effusion or Thickening": "Mild bilateral pleural thickening without effusion",
  "Hiatal Hernia": "Small sliding type hiatal hernia",
  "Lymph Node Status (Mediastinal/Hilar)": "No enlarged lymph nodes detected"
})P";

inline constexpr std::string_view kGtAnalyzerUser = "{{gt_report}}";

inline constexpr std::string_view kPredMatcherSystem =
    R"P(You are a medical report alignment expert for chest CT imaging.

You need to identify corresponding indicator values in the predicted report,
following the GT-defined indicator names.

Indicators to match:
{{criteria_list}}

Matching rules:
1. Extract each indicator’s value exactly according to its name.
2. Use consistent radiological phrasing as in the GT report.
3. If an indicator is not mentioned, fill with "Not mentioned".
4. Return JSON only.

Example output:

{
  "Ground-glass Opacities": "Residual patchy ground-glass opacity in both lungs",
  "Pleural Effusion or Thickening": "Not mentioned",
  "Hiatal Hernia": "Sliding type hernia observed",
  "Lymph Node Status (Mediastinal/Hilar)": "Normal mediastinal lymph nodes"
})P";

inline constexpr std::string_view kPredMatcherUser =
    R"P(GT reference indicators:
{{criteria_list}}

Prediction report:
{{prediction_report}}

Please output a JSON dictionary strictly matching the indicators with their corresponding values.
If not mentioned, fill with "Not mentioned".)P";

inline constexpr std::string_view kEvaluatorSystem =
    R"P(You are a thoracic CT evaluation expert comparing ground-truth (GT) and predicted CT report findings.

Evaluation indicators:
{{criteria_list}}

Scoring rules:
1. Exact Match (1.0): Descriptions are equivalent, or numeric values differ < 10%.
2. Partial Match (0.5): Same meaning or mild difference (e.g., slight size variation, similar severity).
3. No Match (0.0): Contradictory or absent findings.
4. "Not mentioned" always scores 0.

Output format: JSON dictionary with indicator name as key and score (float) as value.

Example output:

{
  "Ground-glass Opacities": 1.0,
  "Pleural Effusion or Thickening": 0.5,
  "Hiatal Hernia": 0.0
})P";

inline constexpr std::string_view kEvaluatorUser =
    R"P(Please compare the following GT and predicted values:

Ground Truth (GT):
{{gt_dict}}

Prediction:
{{pred_dict}}

Return the score in JSON format following the given rules.
Do NOT include any explanation text.)P";

inline constexpr std::string_view kSingleDetailedSystem =
    R"P(You are a senior radiologist auditing an automatically generated medical imaging report against the reference report written by an expert.

Assess the generated report step by step:
1. Factual correctness: list every finding in the generated report that contradicts the reference (laterality, size, severity, presence or absence, certainty).
2. Completeness: list clinically relevant reference findings that the generated report omits.
3. Reasoning consistency: check that impressions and conclusions follow from the described findings.
4. Linguistic clarity: note wording that is ambiguous or unprofessional.

Weigh clinical discrepancies far more heavily than stylistic differences; paraphrases that keep the same medical meaning are not errors.
After your analysis, finish with a single line of the form:
Final score: <number between 0 and 1>
where 1 means clinically equivalent and 0 means clinically unrelated or contradictory.)P";

inline constexpr std::string_view kSingleDetailedUser =
    R"P(Reference report:
{{gt_report}}

Generated report:
{{prediction_report}})P";

inline constexpr std::string_view kSingleSimpleSystem =
    R"P(Rate how similar in meaning the two reports are. Reply with only a number between 0 and 1.)P";

inline constexpr std::string_view kSingleSimpleUser =
    R"P(Report A:
{{gt_report}}

Report B:
{{prediction_report}})P";

}  // namespace prompts

inline PromptTemplate default_template(AgentRole role) {
  using namespace prompts;
  switch (role) {
    case AgentRole::base_pool: return {std::string(kBasePoolSystem), std::string(kBasePoolUser)};
    case AgentRole::criteria: return {std::string(kCriteriaSystem), std::string(kCriteriaUser)};
    case AgentRole::gt_analyzer: return {std::string(kGtAnalyzerSystem), std::string(kGtAnalyzerUser)};
    case AgentRole::pred_matcher: return {std::string(kPredMatcherSystem), std::string(kPredMatcherUser)};
    case AgentRole::evaluator: return {std::string(kEvaluatorSystem), std::string(kEvaluatorUser)};
    case AgentRole::single_detailed: return {std::string(kSingleDetailedSystem), std::string(kSingleDetailedUser)};
    case AgentRole::single_simple: return {std::string(kSingleSimpleSystem), std::string(kSingleSimpleUser)};
  }
  throw Error(ErrorKind::Template, "unknown role");
}

/// Templates for all roles. Roles can be overridden from a directory holding
/// `<role>.system.txt` and/or `<role>.user.txt`.
class PromptCatalog {
 public:
  PromptCatalog() {
    for (auto role : kAllRoles) templates_[role] = default_template(role);
  }

  static PromptCatalog from_directory(const std::filesystem::path& dir) {
    PromptCatalog catalog;
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Config, "prompt directory not found: " + dir.string());
    for (auto role : kAllRoles) {
      const auto base = std::string(to_string(role));
      if (auto s = read_file(dir / (base + ".system.txt"))) catalog.templates_[role].system_text = *s;
      if (auto u = read_file(dir / (base + ".user.txt"))) catalog.templates_[role].user_text = *u;
    }
    return catalog;
  }

  const PromptTemplate& get(AgentRole role) const { return templates_.at(role); }
  void set(AgentRole role, PromptTemplate t) { templates_[role] = std::move(t); }

 private:
  static std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::map<AgentRole, PromptTemplate> templates_;
};

}  // namespace agentseval
