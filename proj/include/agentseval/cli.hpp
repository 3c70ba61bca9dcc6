#pragma once

// Command implementations behind the `agentseval` executable. Each command
// takes parsed arguments plus output streams and returns a process exit code,
// so the tool's main() only does flag parsing.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "agentseval/agents.hpp"
#include "agentseval/core.hpp"
#include "agentseval/error.hpp"
#include "agentseval/llmclient.hpp"
#include "agentseval/log.hpp"
#include "agentseval/perturb.hpp"
#include "agentseval/pipeline.hpp"
#include "agentseval/prompts.hpp"
#include "agentseval/stats.hpp"
#include "agentseval/textmetrics.hpp"

namespace agentseval::cli {

namespace fs = std::filesystem;

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kConfig = 2;
inline constexpr int kInput = 3;
inline constexpr int kBackend = 4;
inline constexpr int kAllFailed = 5;
inline constexpr int kNotFound = 6;
}  // namespace exit_code

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Template:
    case ErrorKind::EvenWindow:
    case ErrorKind::InvalidArgument:
    case ErrorKind::ZeroTotalWeight:
      return exit_code::kConfig;
    case ErrorKind::Io:
    case ErrorKind::SchemaViolation:
    case ErrorKind::Integrity:
    case ErrorKind::EmptyReport:
    case ErrorKind::EmptyInput:
    case ErrorKind::InvalidErrorCount:
    case ErrorKind::MissingErrorCounts:
    case ErrorKind::LengthMismatch:
      return exit_code::kInput;
    case ErrorKind::Transport:
    case ErrorKind::Auth:
    case ErrorKind::EmptyCompletion:
    case ErrorKind::MissingFixture:
    case ErrorKind::FeatureUnavailable:
      return exit_code::kBackend;
    case ErrorKind::AllSamplesFailed:
      return exit_code::kAllFailed;
    case ErrorKind::SampleNotFound:
      return exit_code::kNotFound;
    default:
      return exit_code::kInternal;
  }
}

inline bool is_backend_kind(ErrorKind k) { return exit_code_for(k) == exit_code::kBackend; }

// ---- configuration --------------------------------------------------------

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

struct AnalysisConfig {
  int window = 15;
  bool invert_errors = true;
  bool smooth_for_spearman = false;
};

/// Everything a command needs, after merging defaults, config file,
/// environment and flags (later sources win).
struct RunConfig {
  PipelineConfig pipeline;
  AnalysisConfig analysis;
  fs::path out_dir = "agentseval-out";
  std::optional<fs::path> mock_fixture;
  std::optional<fs::path> prompts_dir;
  bool metrics_only = false;
  bool baselines = false;
};

/// Flag values; unset fields leave lower-precedence sources in place.
struct Overrides {
  std::optional<std::string> backend_url;
  std::optional<std::string> model;
  std::optional<std::string> embedding_model;
  std::optional<int> max_parallel;
  std::optional<int> K;
  std::optional<int> M;
  std::optional<int> window;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out_dir;
  std::optional<fs::path> mock;
  std::optional<fs::path> prompts_dir;
  std::optional<fs::path> weights_file;
  std::optional<bool> metrics_only;
  std::optional<bool> baselines;
  std::optional<bool> smooth_spearman;
  std::optional<bool> raw_errors;
};

namespace detail {

template <typename T>
T json_get(const Json& obj, const char* section, const char* key) {
  const auto& v = obj[key];
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Config, std::string(section) + "." + key + " has the wrong type: " + v.dump());
  }
}

inline void warn_unknown(const Json& obj, const char* section, std::initializer_list<std::string_view> known) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      log::warn("ignoring unknown config key " + std::string(section) + "." + k);
    }
  }
}

inline int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, what + " must be an integer, got '" + s + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, what + " must be a non-negative integer, got '" + s + "'");
  }
}

inline Json read_json_file(const fs::path& path, ErrorKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(kind, "cannot open " + path.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(kind, path.string() + " is not valid JSON");
  return j;
}

}  // namespace detail

/// Applies a config file of the form
/// {"backend": {...}, "pipeline": {...}, "metrics": {...}, "analysis": {...},
///  "out_dir": "...", "mock_fixture": "...", "prompts_dir": "..."}.
inline void apply_config_json(RunConfig& cfg, const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  detail::warn_unknown(j, "config", {"backend", "pipeline", "metrics", "analysis", "out_dir", "mock_fixture",
                                     "prompts_dir", "metrics_only", "baselines"});
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    if (!b.is_object()) throw Error(ErrorKind::Config, "backend must be an object");
    detail::warn_unknown(b, "backend", {"base_url", "model", "temperature", "max_output_tokens", "request_timeout_s",
                                        "max_retries", "retry_base_delay_ms", "requests_per_minute", "api_key_env",
                                        "embedding_model"});
    auto& be = cfg.pipeline.backend;
    if (b.contains("base_url")) be.base_url = detail::json_get<std::string>(b, "backend", "base_url");
    if (b.contains("model")) be.model_name = detail::json_get<std::string>(b, "backend", "model");
    if (b.contains("temperature")) be.temperature = detail::json_get<double>(b, "backend", "temperature");
    if (b.contains("max_output_tokens")) be.max_output_tokens = detail::json_get<int>(b, "backend", "max_output_tokens");
    if (b.contains("request_timeout_s")) {
      be.request_timeout = std::chrono::milliseconds(
          static_cast<long long>(detail::json_get<double>(b, "backend", "request_timeout_s") * 1000.0));
    }
    if (b.contains("max_retries")) be.max_retries = detail::json_get<int>(b, "backend", "max_retries");
    if (b.contains("retry_base_delay_ms")) {
      be.retry_base_delay = std::chrono::milliseconds(detail::json_get<long long>(b, "backend", "retry_base_delay_ms"));
    }
    if (b.contains("requests_per_minute")) {
      be.requests_per_minute = detail::json_get<double>(b, "backend", "requests_per_minute");
    }
    if (b.contains("api_key_env")) be.api_key_env = detail::json_get<std::string>(b, "backend", "api_key_env");
    if (b.contains("embedding_model")) be.embedding_model = detail::json_get<std::string>(b, "backend", "embedding_model");
  }
  if (j.contains("pipeline")) {
    const auto& p = j["pipeline"];
    if (!p.is_object()) throw Error(ErrorKind::Config, "pipeline must be an object");
    detail::warn_unknown(p, "pipeline", {"K", "M", "max_parallel_samples", "rng_seed", "weights"});
    auto& pc = cfg.pipeline;
    if (p.contains("K")) pc.K = detail::json_get<int>(p, "pipeline", "K");
    if (p.contains("M")) pc.base_pool_sample_size = detail::json_get<int>(p, "pipeline", "M");
    if (p.contains("max_parallel_samples")) pc.max_parallel_samples = detail::json_get<int>(p, "pipeline", "max_parallel_samples");
    if (p.contains("rng_seed")) pc.rng_seed = detail::json_get<std::uint64_t>(p, "pipeline", "rng_seed");
    if (p.contains("weights")) pc.weights = weights_from_json(p["weights"]);
  }
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    if (!m.is_object()) throw Error(ErrorKind::Config, "metrics must be an object");
    detail::warn_unknown(m, "metrics", {"bleu_max_n", "bleu_weights", "smoothing", "smoothing_k", "rouge_beta",
                                        "meteor_recall_weight", "meteor_gamma", "meteor_theta", "chrf_max_n",
                                        "chrf_beta"});
    auto& mp = cfg.pipeline.metric_params;
    if (m.contains("bleu_max_n")) mp.bleu_max_n = detail::json_get<int>(m, "metrics", "bleu_max_n");
    if (m.contains("bleu_weights")) mp.bleu_weights = detail::json_get<std::vector<double>>(m, "metrics", "bleu_weights");
    if (m.contains("smoothing")) {
      const auto s = detail::json_get<std::string>(m, "metrics", "smoothing");
      if (s == "none") {
        mp.smoothing = metrics::Smoothing::none();
      } else if (s == "add_k") {
        mp.smoothing.kind = metrics::Smoothing::Kind::add_k;
      } else {
        throw Error(ErrorKind::Config, "metrics.smoothing must be 'none' or 'add_k'");
      }
    }
    if (m.contains("smoothing_k")) mp.smoothing.k = detail::json_get<double>(m, "metrics", "smoothing_k");
    if (m.contains("rouge_beta")) mp.rouge_beta = detail::json_get<double>(m, "metrics", "rouge_beta");
    if (m.contains("meteor_recall_weight")) mp.meteor_recall_weight = detail::json_get<double>(m, "metrics", "meteor_recall_weight");
    if (m.contains("meteor_gamma")) mp.meteor_gamma = detail::json_get<double>(m, "metrics", "meteor_gamma");
    if (m.contains("meteor_theta")) mp.meteor_theta = detail::json_get<double>(m, "metrics", "meteor_theta");
    if (m.contains("chrf_max_n")) mp.chrf_max_n = detail::json_get<int>(m, "metrics", "chrf_max_n");
    if (m.contains("chrf_beta")) mp.chrf_beta = detail::json_get<double>(m, "metrics", "chrf_beta");
  }
  if (j.contains("analysis")) {
    const auto& a = j["analysis"];
    if (!a.is_object()) throw Error(ErrorKind::Config, "analysis must be an object");
    detail::warn_unknown(a, "analysis", {"window", "invert_errors", "smooth_for_spearman"});
    if (a.contains("window")) cfg.analysis.window = detail::json_get<int>(a, "analysis", "window");
    if (a.contains("invert_errors")) cfg.analysis.invert_errors = detail::json_get<bool>(a, "analysis", "invert_errors");
    if (a.contains("smooth_for_spearman")) {
      cfg.analysis.smooth_for_spearman = detail::json_get<bool>(a, "analysis", "smooth_for_spearman");
    }
  }
  if (j.contains("out_dir")) cfg.out_dir = detail::json_get<std::string>(j, "config", "out_dir");
  if (j.contains("mock_fixture")) cfg.mock_fixture = detail::json_get<std::string>(j, "config", "mock_fixture");
  if (j.contains("prompts_dir")) cfg.prompts_dir = detail::json_get<std::string>(j, "config", "prompts_dir");
  if (j.contains("metrics_only")) cfg.metrics_only = detail::json_get<bool>(j, "config", "metrics_only");
  if (j.contains("baselines")) cfg.baselines = detail::json_get<bool>(j, "config", "baselines");
}

/// Environment variables read by apply_env, all prefixed AGENTSEVAL_.
inline void apply_env(RunConfig& cfg, const EnvLookup& env) {
  auto& be = cfg.pipeline.backend;
  if (auto v = env("AGENTSEVAL_BACKEND_URL")) be.base_url = *v;
  if (auto v = env("AGENTSEVAL_MODEL")) be.model_name = *v;
  if (auto v = env("AGENTSEVAL_EMBEDDING_MODEL")) be.embedding_model = *v;
  if (auto v = env("AGENTSEVAL_MAX_PARALLEL")) {
    cfg.pipeline.max_parallel_samples = detail::parse_int(*v, "AGENTSEVAL_MAX_PARALLEL");
  }
  if (auto v = env("AGENTSEVAL_SEED")) cfg.pipeline.rng_seed = detail::parse_u64(*v, "AGENTSEVAL_SEED");
  if (auto v = env("AGENTSEVAL_K")) cfg.pipeline.K = detail::parse_int(*v, "AGENTSEVAL_K");
  if (auto v = env("AGENTSEVAL_M")) cfg.pipeline.base_pool_sample_size = detail::parse_int(*v, "AGENTSEVAL_M");
  if (auto v = env("AGENTSEVAL_OUT_DIR")) cfg.out_dir = *v;
  if (auto v = env("AGENTSEVAL_MOCK")) cfg.mock_fixture = *v;
}

inline void apply_overrides(RunConfig& cfg, const Overrides& o) {
  auto& be = cfg.pipeline.backend;
  if (o.backend_url) be.base_url = *o.backend_url;
  if (o.model) be.model_name = *o.model;
  if (o.embedding_model) be.embedding_model = *o.embedding_model;
  if (o.max_parallel) cfg.pipeline.max_parallel_samples = *o.max_parallel;
  if (o.K) cfg.pipeline.K = *o.K;
  if (o.M) cfg.pipeline.base_pool_sample_size = *o.M;
  if (o.window) cfg.analysis.window = *o.window;
  if (o.seed) cfg.pipeline.rng_seed = *o.seed;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.mock) cfg.mock_fixture = *o.mock;
  if (o.prompts_dir) cfg.prompts_dir = *o.prompts_dir;
  if (o.weights_file) cfg.pipeline.weights = weights_from_json(detail::read_json_file(*o.weights_file, ErrorKind::Config));
  if (o.metrics_only) cfg.metrics_only = *o.metrics_only;
  if (o.baselines) cfg.baselines = *o.baselines;
  if (o.smooth_spearman) cfg.analysis.smooth_for_spearman = *o.smooth_spearman;
  if (o.raw_errors) cfg.analysis.invert_errors = !*o.raw_errors;
}

inline RunConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& flags,
                                const EnvLookup& env = process_env) {
  RunConfig cfg;
  if (config_file) apply_config_json(cfg, detail::read_json_file(*config_file, ErrorKind::Config));
  apply_env(cfg, env);
  apply_overrides(cfg, flags);
  cfg.pipeline.validate();
  cfg.pipeline.backend.validate();
  if (cfg.analysis.window < 1 || cfg.analysis.window % 2 == 0) {
    throw Error(ErrorKind::Config, "window must be odd and >= 1");
  }
  return cfg;
}

/// Config snapshot for trace headers. Output paths are left out so runs into
/// different directories produce identical traces.
inline Json snapshot_json(const RunConfig& cfg) {
  Json j = config_to_json(cfg.pipeline);
  j["mode"] = cfg.metrics_only ? "metrics_only" : (cfg.mock_fixture ? "mock" : "http");
  j["baselines"] = cfg.baselines;
  Json a = Json::object();
  a["window"] = cfg.analysis.window;
  a["invert_errors"] = cfg.analysis.invert_errors;
  a["smooth_for_spearman"] = cfg.analysis.smooth_for_spearman;
  j["analysis"] = std::move(a);
  return j;
}

inline std::unique_ptr<llm::Backend> make_backend(const RunConfig& cfg) {
  if (cfg.mock_fixture) return std::make_unique<llm::MockBackend>(llm::MockBackend::from_file(cfg.mock_fixture->string()));
  if (cfg.pipeline.backend.base_url.empty()) {
    throw Error(ErrorKind::Config, "no backend configured: pass --backend-url (with --model) or --mock");
  }
  return std::make_unique<llm::HttpBackend>(cfg.pipeline.backend);
}

inline PromptCatalog make_prompts(const RunConfig& cfg) {
  return cfg.prompts_dir ? PromptCatalog::from_directory(*cfg.prompts_dir) : PromptCatalog{};
}

// ---- formatting -----------------------------------------------------------

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline constexpr int kCsvDecimals = 10;

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw Error(ErrorKind::SchemaViolation, "unterminated quoted CSV field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Metric columns in display order: key, CSV header, summary label.
struct ColumnSpec {
  const char* key;
  const char* label;
  std::function<std::optional<double>(const MetricRow&)> get;
};

inline const std::vector<ColumnSpec>& metric_columns() {
  static const std::vector<ColumnSpec> cols = {
      {"bleu", "BLEU", [](const MetricRow& r) { return std::optional(r.classic.bleu); }},
      {"rouge1", "ROUGE-1", [](const MetricRow& r) { return std::optional(r.classic.rouge1); }},
      {"rougeL", "ROUGE-L", [](const MetricRow& r) { return std::optional(r.classic.rouge_l); }},
      {"meteor", "METEOR", [](const MetricRow& r) { return std::optional(r.classic.meteor); }},
      {"chrf", "chrF", [](const MetricRow& r) { return std::optional(r.classic.chrf); }},
      {"bertscore", "BERTScore", [](const MetricRow& r) { return r.classic.bertscore; }},
      {"agent_detailed", "Single agent (detailed)", [](const MetricRow& r) { return r.agent_detailed; }},
      {"agent_simple", "Single agent (simple)", [](const MetricRow& r) { return r.agent_simple; }},
      {"agents_eval", "AgentsEval", [](const MetricRow& r) { return r.agents_eval; }},
  };
  return cols;
}

inline bool always_shown(std::string_view key) {
  return key == "bleu" || key == "rouge1" || key == "rougeL" || key == "meteor" || key == "chrf";
}

/// Columns that carry at least one value (classic metrics always do).
inline std::vector<const ColumnSpec*> present_columns(const std::vector<MetricRow>& rows, bool agents_ran) {
  std::vector<const ColumnSpec*> out;
  for (const auto& c : metric_columns()) {
    bool present = always_shown(c.key) || (agents_ran && std::string_view(c.key) == "agents_eval");
    for (const auto& r : rows) present = present || c.get(r).has_value();
    if (present) out.push_back(&c);
  }
  return out;
}

/// Per-pair metric table with a trailing `mean` row. Section, perturbation
/// and error_count columns appear only when some pair carries them.
inline std::string format_metrics_csv(const std::vector<MetricRow>& rows, bool agents_ran) {
  bool has_section = false, has_level = false, has_errors = false;
  for (const auto& r : rows) {
    has_section = has_section || r.pair.section.has_value();
    has_level = has_level || r.pair.perturbation.has_value();
    has_errors = has_errors || r.pair.error_count.has_value();
  }
  const auto cols = present_columns(rows, agents_ran);
  std::ostringstream out;
  out << "id";
  if (has_section) out << ",section";
  if (has_level) out << ",perturbation";
  if (has_errors) out << ",error_count";
  for (const auto* c : cols) out << "," << c->key;
  out << "\n";
  for (const auto& r : rows) {
    out << csv_escape(r.pair.id);
    if (has_section) out << "," << (r.pair.section ? std::string(to_string(*r.pair.section)) : "");
    if (has_level) out << "," << (r.pair.perturbation ? std::string(to_string(*r.pair.perturbation)) : "");
    if (has_errors) out << "," << (r.pair.error_count ? std::to_string(*r.pair.error_count) : "");
    for (const auto* c : cols) {
      out << ",";
      if (auto v = c->get(r)) out << fixed(*v, kCsvDecimals);
    }
    out << "\n";
  }
  out << "mean";
  if (has_section) out << ",";
  if (has_level) out << ",";
  if (has_errors) out << ",";
  for (const auto* c : cols) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (auto v = c->get(r)) {
        sum += *v;
        ++n;
      }
    }
    out << ",";
    if (n > 0) out << fixed(sum / static_cast<double>(n), kCsvDecimals);
  }
  out << "\n";
  return out.str();
}

/// Summary group of a pair: "F"/"I"/"W" for the section joined with the
/// perturbation level ("F-A1", "B2", "I"), or "all" when neither is set.
inline std::string summary_group(const ReportPair& p) {
  std::string g;
  if (p.section) {
    g = *p.section == Section::findings ? "F" : (*p.section == Section::impression ? "I" : "W");
  }
  if (p.perturbation) g += (g.empty() ? "" : "-") + std::string(to_string(*p.perturbation));
  return g.empty() ? "all" : g;
}

inline std::string format_summary_md(const DatasetResult& result, bool agents_ran, const std::string& fingerprint) {
  const auto cols = present_columns(result.rows, agents_ran);
  std::vector<std::string> groups;
  for (const auto& r : result.rows) {
    const auto g = summary_group(r.pair);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  std::ostringstream out;
  out << "# Evaluation summary\n\n";
  out << "Pairs: " << result.rows.size();
  if (agents_ran) out << " (" << result.per_sample.size() << " evaluated by agents)";
  out << ". Failures: " << result.failures.size() << ".";
  if (!fingerprint.empty()) out << " Backend: `" << fingerprint << "`.";
  out << "\n\nMeans per group, scaled to 0-100.\n\n| Group | n |";
  for (const auto* c : cols) out << " " << c->label << " |";
  out << "\n|---|---:|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|";
  out << "\n";
  for (const auto& g : groups) {
    std::size_t n = 0;
    for (const auto& r : result.rows) n += summary_group(r.pair) == g ? 1 : 0;
    out << "| " << g << " | " << n << " |";
    for (const auto* c : cols) {
      double sum = 0.0;
      std::size_t k = 0;
      for (const auto& r : result.rows) {
        if (summary_group(r.pair) != g) continue;
        if (auto v = c->get(r)) {
          sum += *v;
          ++k;
        }
      }
      out << " " << (k > 0 ? fixed(100.0 * sum / static_cast<double>(k), 1) : std::string("-")) << " |";
    }
    out << "\n";
  }
  if (!result.base_pools.empty()) {
    out << "\n## Base criteria\n";
    for (const auto& [group, pool] : result.base_pools) {
      out << "\n" << group << ": ";
      for (std::size_t i = 0; i < pool.size(); ++i) out << (i ? ", " : "") << pool.names()[i];
      out << "\n";
    }
  }
  if (!result.failures.empty()) {
    out << "\n## Failures\n\n";
    for (const auto& f : result.failures) {
      out << "- `" << f.pair_id << "` at " << f.stage << " (" << to_string(f.kind) << "): " << f.message << "\n";
    }
  }
  return out.str();
}

inline std::string format_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  fs::path manifest;
  std::optional<fs::path> config;
  Overrides overrides;
};

inline int report_error(std::ostream& err, const Error& e) {
  err << "error: " << e.what() << "\n";
  return exit_code_for(e.kind());
}

inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err,
                        const EnvLookup& env = process_env) {
  RunConfig cfg;
  try {
    cfg = resolve_config(args.config, args.overrides, env);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kConfig;
  }
  std::vector<ReportPair> pairs;
  try {
    pairs = read_manifest(args.manifest);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kInput;
  }

  std::unique_ptr<llm::Backend> backend;
  PromptCatalog prompts;
  try {
    if (!cfg.metrics_only || cfg.baselines) backend = make_backend(cfg);
    prompts = make_prompts(cfg);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kConfig;
  }

  RunOptions opts;
  opts.agents = !cfg.metrics_only;
  opts.baselines = cfg.baselines;
  DatasetResult result;
  try {
    result = run_batch(pairs, cfg.pipeline, backend.get(), prompts, opts);
  } catch (const BatchFailed& e) {
    for (const auto& f : e.failures()) err << "failed: " << f.pair_id << " at " << f.stage << ": " << f.message << "\n";
    err << "error: " << e.what() << "\n";
    // Every sample failing on transport problems is a backend outage rather
    // than a data problem.
    const bool backend_only = std::all_of(e.failures().begin(), e.failures().end(),
                                          [](const SampleFailure& f) { return is_backend_kind(f.kind); });
    return backend_only ? exit_code::kBackend : exit_code::kAllFailed;
  } catch (const Error& e) {
    return report_error(err, e);
  }

  const auto fingerprint = backend ? backend->fingerprint() : std::string();
  try {
    fs::create_directories(cfg.out_dir);
    agentseval::detail::write_text_file(cfg.out_dir / "metrics.csv", format_metrics_csv(result.rows, opts.agents));
    agentseval::detail::write_text_file(cfg.out_dir / "summary.md", format_summary_md(result, opts.agents, fingerprint));
    if (opts.agents) write_trace(cfg.out_dir / "trace.jsonl", snapshot_json(cfg), result.per_sample);
    if (!result.exchanges.empty()) {
      std::vector<Json> ex;
      for (const auto& e : result.exchanges) ex.push_back(exchange_to_json(e));
      agentseval::detail::write_text_file(cfg.out_dir / "exchanges.jsonl", format_jsonl(ex));
    }
    std::vector<Json> fails;
    for (const auto& f : result.failures) {
      fails.push_back(Json{{"pair_id", f.pair_id}, {"stage", f.stage}, {"kind", to_string(f.kind)}, {"message", f.message}});
    }
    const auto fail_path = cfg.out_dir / "failures.jsonl";
    if (!fails.empty()) {
      agentseval::detail::write_text_file(fail_path, format_jsonl(fails));
    } else if (fs::exists(fail_path)) {
      fs::remove(fail_path);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kInput;
  }

  out << format_summary_md(result, opts.agents, fingerprint);
  out << "\nWrote " << (cfg.out_dir / "metrics.csv").string();
  if (opts.agents) out << ", " << (cfg.out_dir / "trace.jsonl").string();
  out << "\n";
  return exit_code::kOk;
}

// ---- analyze --------------------------------------------------------------

/// Metric columns aligned with per-sample error counts.
struct MetricTable {
  std::vector<std::string> ids;
  std::vector<double> errors;
  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> columns;
};

inline MetricTable table_from_csv(std::string_view content, const std::string& errors_field = "error_count") {
  const auto rows = parse_csv(content);
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "CSV is empty");
  const auto& header = rows.front();
  auto col_index = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto id_col = col_index("id");
  if (!id_col) throw Error(ErrorKind::SchemaViolation, "CSV has no id column");
  const auto err_col = col_index(errors_field);
  if (!err_col) throw Error(ErrorKind::MissingErrorCounts, "CSV has no '" + errors_field + "' column");

  MetricTable t;
  std::vector<std::size_t> metric_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == *id_col || i == *err_col || header[i] == "section" || header[i] == "perturbation" ||
        header[i] == "error_count") {
      continue;
    }
    metric_cols.push_back(i);
    t.columns.emplace_back(header[i], std::vector<std::optional<double>>{});
  }
  auto parse_num = [](const std::string& s, std::size_t line, const std::string& col) -> std::optional<double> {
    const auto v = text::trim(s);
    if (v.empty()) return std::nullopt;
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size()) {
      throw Error(ErrorKind::SchemaViolation,
                  "line " + std::to_string(line) + ": column '" + col + "' is not numeric: '" + v + "'");
    }
    return d;
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto lineno = r + 1;
    if (row.size() != header.size()) {
      throw Error(ErrorKind::SchemaViolation, "line " + std::to_string(lineno) + ": expected " +
                                                  std::to_string(header.size()) + " fields");
    }
    if (row[*id_col] == "mean") continue;
    const auto err = parse_num(row[*err_col], lineno, errors_field);
    if (!err) throw Error(ErrorKind::MissingErrorCounts, "row '" + row[*id_col] + "' has no " + errors_field);
    t.ids.push_back(row[*id_col]);
    t.errors.push_back(*err);
    for (std::size_t c = 0; c < metric_cols.size(); ++c) {
      t.columns[c].second.push_back(parse_num(row[metric_cols[c]], lineno, header[metric_cols[c]]));
    }
  }
  if (t.ids.empty()) throw Error(ErrorKind::EmptyInput, "CSV has no sample rows");
  return t;
}

/// Trace aggregates joined with manifest error counts; classic metrics are
/// recomputed from the manifest reports.
inline MetricTable table_from_trace(const Trace& trace, const std::vector<ReportPair>& manifest,
                                    const metrics::MetricParams& params = {}) {
  std::map<std::string, const ReportPair*> by_id;
  for (const auto& p : manifest) by_id[p.id] = &p;
  MetricTable t;
  std::vector<MetricRow> rows;
  for (const auto& s : trace.samples) {
    auto it = by_id.find(s.pair_id);
    if (it == by_id.end()) throw Error(ErrorKind::MissingErrorCounts, "trace sample '" + s.pair_id + "' not in manifest");
    const auto& p = *it->second;
    if (!p.error_count) throw Error(ErrorKind::MissingErrorCounts, "pair '" + p.id + "' has no error_count");
    t.ids.push_back(p.id);
    t.errors.push_back(static_cast<double>(*p.error_count));
    MetricRow row;
    row.pair = p;
    row.classic = metrics::classic_scores(p.pred_report, p.gt_report, params);
    row.agents_eval = s.aggregate;
    rows.push_back(std::move(row));
  }
  if (t.ids.empty()) throw Error(ErrorKind::EmptyInput, "trace has no samples");
  for (const auto* c : present_columns(rows, true)) {
    std::vector<std::optional<double>> values;
    for (const auto& r : rows) values.push_back(c->get(r));
    t.columns.emplace_back(c->key, std::move(values));
  }
  return t;
}

struct TrendRow {
  std::string metric;
  std::optional<double> spearman;
  std::optional<double> dtw;
  std::string note;
  std::vector<double> curve;  // empty when the column has missing values
};

struct AnalysisResult {
  std::vector<std::string> sorted_ids;
  std::vector<double> sorted_errors;
  std::vector<double> error_curve;
  std::vector<TrendRow> rows;
};

/// Samples are ordered by ascending error count (ties keep input order), then
/// each metric column is compared against the error target.
inline AnalysisResult analyze_table(const MetricTable& t, const AnalysisConfig& cfg = {}) {
  std::vector<std::size_t> order(t.ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t.errors[a] < t.errors[b]; });

  stats::TrendOptions opts;
  opts.window = cfg.window;
  opts.invert_errors = cfg.invert_errors;
  opts.smooth_for_spearman = cfg.smooth_for_spearman;

  AnalysisResult out;
  for (auto i : order) {
    out.sorted_ids.push_back(t.ids[i]);
    out.sorted_errors.push_back(t.errors[i]);
  }
  const stats::Series all_errors(out.sorted_errors, "errors");
  out.error_curve = stats::moving_average(stats::error_target(all_errors, cfg.invert_errors), cfg.window).values();

  for (const auto& [name, values] : t.columns) {
    TrendRow row;
    row.metric = name;
    std::vector<double> m, e;
    for (auto i : order) {
      if (values[i]) {
        m.push_back(*values[i]);
        e.push_back(t.errors[i]);
      }
    }
    if (m.empty()) {
      row.note = "no values";
      out.rows.push_back(std::move(row));
      continue;
    }
    if (m.size() < values.size()) row.note = std::to_string(values.size() - m.size()) + " missing values skipped";
    const stats::Series ms(m, name), es(e, "errors");
    try {
      auto report = stats::trend_report(ms, es, opts);
      row.spearman = report.spearman;
      row.dtw = report.dtw;
      if (m.size() == values.size()) row.curve = std::move(report.metric_curve);
    } catch (const Error& ex) {
      if (ex.kind() != ErrorKind::DegenerateSeries) throw;
      auto report = stats::trend_curves(ms, es, opts);
      row.dtw = report.dtw;
      if (m.size() == values.size()) row.curve = std::move(report.metric_curve);
      row.note = "DegenerateSeries: " + std::string(ex.what());
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline std::string format_trend_md(const AnalysisResult& a, const AnalysisConfig& cfg) {
  std::ostringstream out;
  out << "# Trend consistency\n\n";
  out << a.sorted_ids.size() << " samples ordered by error count; moving-average window " << cfg.window << "; "
      << (cfg.invert_errors ? "metric compared with 1 - normalized errors" : "metric compared with normalized errors")
      << ".\n\n";
  out << "| Metric | Spearman | DTW | Note |\n|---|---:|---:|---|\n";
  for (const auto& r : a.rows) {
    out << "| " << r.metric << " | " << (r.spearman ? fixed(*r.spearman, 3) : "-") << " | "
        << (r.dtw ? fixed(*r.dtw, 3) : "-") << " | " << r.note << " |\n";
  }
  return out.str();
}

inline std::string format_curves_csv(const AnalysisResult& a) {
  std::ostringstream out;
  out << "index,id,error_count,error_curve";
  std::vector<const TrendRow*> cols;
  for (const auto& r : a.rows) {
    if (!r.curve.empty()) {
      cols.push_back(&r);
      out << "," << csv_escape(r.metric);
    }
  }
  out << "\n";
  for (std::size_t i = 0; i < a.sorted_ids.size(); ++i) {
    out << i << "," << csv_escape(a.sorted_ids[i]) << "," << fixed(a.sorted_errors[i], 0) << ","
        << fixed(a.error_curve[i], 6);
    for (const auto* c : cols) out << "," << fixed(c->curve[i], 6);
    out << "\n";
  }
  return out.str();
}

/// Line plot of every smoothed metric curve with the error target dashed in
/// black. Sample index on x, normalized score on y.
inline std::string format_svg(const AnalysisResult& a) {
  constexpr double W = 800, H = 420, L = 60, R = 170, T = 30, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  const std::size_t n = a.sorted_ids.size();
  auto x = [&](std::size_t i) { return L + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : pw / 2); };
  auto y = [&](double v) { return T + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };
  auto points = [&](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fixed(x(i), 2) + "," + fixed(y(v[i]), 2);
    return s;
  };
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#17becf", "#bcbd22"};
  std::ostringstream out;
  out << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << W << R"(" height=")" << H << R"(" viewBox="0 0 )" << W
      << " " << H << R"(" font-family="sans-serif" font-size="12">)" << "\n";
  out << R"(<rect width="100%" height="100%" fill="white"/>)" << "\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
      << "\" stroke=\"#444\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\" stroke=\"#444\"/>\n";
  for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    out << "<text x=\"" << L - 8 << "\" y=\"" << fixed(y(tick) + 4, 2) << "\" text-anchor=\"end\">" << fixed(tick, 2)
        << "</text>\n";
  }
  out << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">sample index (by error count)</text>\n";
  out << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << T + ph / 2
      << ")\">normalized score</text>\n";
  std::size_t k = 0;
  double ly = T + 10;
  for (const auto& r : a.rows) {
    if (r.curve.empty()) continue;
    const char* color = palette[k++ % (sizeof palette / sizeof *palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points(r.curve)
        << "\"/>\n";
    out << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << L + pw + 38 << "\" y=\"" << ly + 4
        << "\">" << r.metric << "</text>\n";
    ly += 18;
  }
  out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6 4\" points=\""
      << points(a.error_curve) << "\"/>\n";
  out << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/><text x=\"" << L + pw + 38 << "\" y=\""
      << ly + 4 << "\">errors</text>\n";
  out << "</svg>\n";
  return out.str();
}

struct AnalyzeArgs {
  fs::path input;                      // metrics CSV or trace JSONL
  std::optional<fs::path> manifest;    // required for trace input
  std::string errors_field = "error_count";
  bool svg = false;
  std::optional<fs::path> config;
  Overrides overrides;
};

inline bool looks_like_trace(const fs::path& p) {
  std::ifstream in(p);
  std::string first;
  std::getline(in, first);
  const auto j = Json::parse(first, nullptr, false);
  return !j.is_discarded() && j.is_object() && j.contains("schema_version");
}

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err,
                       const EnvLookup& env = process_env) {
  RunConfig cfg;
  try {
    cfg = resolve_config(args.config, args.overrides, env);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kConfig;
  }
  AnalysisResult analysis;
  try {
    if (!fs::exists(args.input)) throw Error(ErrorKind::Io, "input not found: " + args.input.string());
    MetricTable table;
    if (looks_like_trace(args.input)) {
      if (!args.manifest) {
        throw Error(ErrorKind::MissingErrorCounts, "trace input needs --manifest to supply error counts");
      }
      table = table_from_trace(read_trace(args.input), read_manifest(*args.manifest), cfg.pipeline.metric_params);
    } else {
      table = table_from_csv(agentseval::detail::read_text_file(args.input), args.errors_field);
    }
    analysis = analyze_table(table, cfg.analysis);
  } catch (const Error& e) {
    return report_error(err, e);
  }
  const auto md = format_trend_md(analysis, cfg.analysis);
  try {
    fs::create_directories(cfg.out_dir);
    agentseval::detail::write_text_file(cfg.out_dir / "trend.md", md);
    agentseval::detail::write_text_file(cfg.out_dir / "curves.csv", format_curves_csv(analysis));
    if (args.svg) agentseval::detail::write_text_file(cfg.out_dir / "plot.svg", format_svg(analysis));
  } catch (const Error& e) {
    return report_error(err, e);
  }
  out << md;
  return exit_code::kOk;
}

// ---- perturb --------------------------------------------------------------

/// "all" or a comma-separated list such as "A1,B3"; unknown names are a
/// Config error.
inline std::vector<PerturbationLevel> parse_levels(const std::string& spec) {
  if (text::name_key(spec) == "all") return {std::begin(kRewriteLevels), std::end(kRewriteLevels)};
  std::vector<PerturbationLevel> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (text::trim_view(item).empty()) continue;
    auto l = parse_level(item);
    if (!l || *l == PerturbationLevel::none) throw Error(ErrorKind::Config, "unknown perturbation level '" + text::trim(item) + "'");
    if (std::find(out.begin(), out.end(), *l) == out.end()) out.push_back(*l);
  }
  if (out.empty()) throw Error(ErrorKind::Config, "no perturbation levels given");
  return out;
}

struct PerturbArgs {
  fs::path manifest;
  std::string levels = "all";
  std::optional<fs::path> output;  // default: <out_dir>/perturbed.jsonl
  std::optional<fs::path> config;
  Overrides overrides;
};

inline int cmd_perturb(const PerturbArgs& args, std::ostream& out, std::ostream& err,
                       const EnvLookup& env = process_env) {
  RunConfig cfg;
  std::vector<perturb::PerturbationSpec> specs;
  std::unique_ptr<llm::Backend> backend;
  std::optional<PromptTemplate> tmpl;
  try {
    cfg = resolve_config(args.config, args.overrides, env);
    for (auto l : parse_levels(args.levels)) specs.push_back(perturb::PerturbationSpec::for_level(l));
    backend = make_backend(cfg);
    if (cfg.prompts_dir) tmpl = perturb::rewrite_template_from_directory(*cfg.prompts_dir);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kConfig;
  }
  for (auto& s : specs) s.prompt_override = tmpl;

  std::vector<ReportPair> clean;
  try {
    clean = read_manifest(args.manifest, /*require_pred=*/false);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kInput;
  }

  perturb::PerturbedManifest result;
  try {
    result = perturb::build_perturbed_manifest(clean, specs, *backend, cfg.pipeline.max_parallel_samples);
  } catch (const Error& e) {
    return report_error(err, e);
  }
  const auto path = args.output.value_or(cfg.out_dir / "perturbed.jsonl");
  try {
    if (!result.rows.empty()) write_manifest(path, result.rows);
  } catch (const Error& e) {
    return report_error(err, e);
  }

  out << "| Row | Level | Sentences (orig/new) | Jaccard | Unigram overlap | Warnings |\n";
  out << "|---|---|---:|---:|---:|---|\n";
  for (const auto& c : result.cells) {
    std::string warnings;
    for (auto w : c.intensity.warnings) warnings += (warnings.empty() ? "" : ", ") + std::string(perturb::to_string(w));
    out << "| " << c.row_id << " | " << to_string(c.level) << " | " << c.intensity.original_sentences << "/"
        << c.intensity.rewritten_sentences << " | " << fixed(c.intensity.jaccard, 3) << " | "
        << fixed(c.intensity.unigram_overlap, 3) << " | " << warnings << " |\n";
  }
  for (const auto& f : result.failures) {
    out << "failed: " << perturb::perturbed_id(f.pair_id, f.level) << " (" << to_string(f.kind) << "): " << f.message
        << "\n";
  }
  if (result.rows.empty()) {
    const bool backend_only = std::all_of(result.failures.begin(), result.failures.end(),
                                          [](const perturb::PerturbFailure& f) { return is_backend_kind(f.kind); });
    err << "error: every rewrite failed\n";
    return backend_only ? exit_code::kBackend : exit_code::kAllFailed;
  }
  out << "Wrote " << result.rows.size() << " rows to " << path.string() << "\n";
  return exit_code::kOk;
}

// ---- trace ----------------------------------------------------------------

inline std::string score_text(double v) { return fixed(v, 1); }

/// Reasoning chain of one sample in reading order.
inline std::string format_sample_chain(const SampleResult& r) {
  std::ostringstream out;
  out << "Sample " << r.pair_id << "\nBackend: " << r.backend_fingerprint << "\n";
  auto list = [&](const CriteriaSet& c) {
    for (const auto& n : c.names()) out << "  - " << n << "\n";
  };
  out << "\n[1] Base criteria\n";
  list(r.base_criteria);
  out << "\n[2] Report-specific criteria\n";
  list(r.dynamic_criteria);
  out << "\n[3] Ground-truth findings\n";
  for (const auto& [k, v] : r.gt_values.entries()) out << "  " << k << ": " << v << "\n";
  out << "\n[4] Generated-report findings\n";
  for (const auto& [k, v] : r.pred_values.entries()) out << "  " << k << ": " << v << "\n";
  out << "\n[5] Criterion scores\n";
  for (const auto& [k, v] : r.score_details.scores()) out << "  " << k << ": " << score_text(v) << "\n";
  if (!r.score_details.overrides().empty()) {
    out << "\nOverrides\n";
    for (const auto& o : r.score_details.overrides()) {
      const auto score = std::find_if(r.score_details.scores().begin(), r.score_details.scores().end(),
                                      [&](const auto& s) { return s.first == o.criterion; });
      out << "  " << o.criterion << ": " << (o.original_value ? fixed(*o.original_value, 3) : std::string("missing"))
          << " -> " << (score != r.score_details.scores().end() ? score_text(score->second) : "?") << " ("
          << o.reason << ")\n";
    }
  }
  out << "\nAggregate: " << fixed(r.aggregate, 4) << "\n";
  if (!r.timings_ms.empty()) {
    out << "Timings (ms):";
    for (const auto& [stage_name, ms] : r.timings_ms) out << " " << stage_name << "=" << fixed(ms, 1);
    out << "\n";
  }
  if (!r.warnings.empty()) {
    out << "Warnings:\n";
    for (const auto& w : r.warnings) out << "  " << w << "\n";
  }
  return out.str();
}

struct TraceArgs {
  fs::path trace;
  std::string sample_id;
};

inline int cmd_trace(const TraceArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const auto trace = read_trace(args.trace);
    for (const auto& s : trace.samples) {
      if (s.pair_id == args.sample_id) {
        out << format_sample_chain(s);
        return exit_code::kOk;
      }
    }
    throw Error(ErrorKind::SampleNotFound, "no sample '" + args.sample_id + "' in " + args.trace.string());
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

}  // namespace agentseval::cli
