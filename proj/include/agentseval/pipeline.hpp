#pragma once

// Per-sample stage orchestration, weighted aggregation, batch runs and the
// JSONL manifest / trace formats.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "agentseval/agents.hpp"
#include "agentseval/core.hpp"
#include "agentseval/error.hpp"
#include "agentseval/llmclient.hpp"
#include "agentseval/log.hpp"
#include "agentseval/prompts.hpp"
#include "agentseval/textmetrics.hpp"

namespace agentseval {

inline constexpr int kTraceSchemaVersion = 1;

struct PipelineConfig {
  int K = 20;
  int base_pool_sample_size = 50;  // M; clamped to the dataset size
  WeightMap weights;
  int max_parallel_samples = 4;
  llm::BackendConfig backend;
  std::uint64_t rng_seed = 0;
  metrics::MetricParams metric_params;

  void validate() const {
    if (K < 1) throw Error(ErrorKind::Config, "K must be >= 1");
    if (base_pool_sample_size < 1) throw Error(ErrorKind::Config, "base_pool_sample_size must be >= 1");
    if (max_parallel_samples < 1) throw Error(ErrorKind::Config, "max_parallel_samples must be >= 1");
    metric_params.validate();
  }
};

// ---- manifest -------------------------------------------------------------

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

inline std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace detail

inline Json pair_to_json(const ReportPair& p) {
  Json j = Json::object();
  j["id"] = p.id;
  j["gt_report"] = p.gt_report;
  j["pred_report"] = p.pred_report;
  if (p.section) j["section"] = to_string(*p.section);
  if (p.error_count) j["error_count"] = *p.error_count;
  if (p.perturbation) j["perturbation"] = to_string(*p.perturbation);
  return j;
}

/// One manifest row. With `require_pred` false a missing pred_report is
/// allowed (clean manifests fed to the perturbation generator).
inline ReportPair pair_from_json(const Json& j, bool require_pred = true) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "manifest row must be a JSON object");
  auto str_field = [&](const char* name, bool required) -> std::string {
    if (!j.contains(name)) {
      if (required) throw Error(ErrorKind::SchemaViolation, std::string("missing field '") + name + "'");
      return {};
    }
    const auto& v = j[name];
    if (v.is_string()) return v.get<std::string>();
    if (name == std::string_view("id") && v.is_number_integer()) return v.dump();
    throw Error(ErrorKind::SchemaViolation, std::string("field '") + name + "' must be a string");
  };
  ReportPair p;
  p.id = text::trim(str_field("id", true));
  if (p.id.empty()) throw Error(ErrorKind::SchemaViolation, "blank id");
  p.gt_report = str_field("gt_report", true);
  p.pred_report = str_field("pred_report", require_pred);
  if (j.contains("section") && !j["section"].is_null()) {
    if (!j["section"].is_string()) throw Error(ErrorKind::SchemaViolation, "section must be a string");
    p.section = parse_section(j["section"].get<std::string>());
    if (!p.section) throw Error(ErrorKind::SchemaViolation, "unknown section " + j["section"].dump());
  }
  if (j.contains("error_count") && !j["error_count"].is_null()) {
    const auto& e = j["error_count"];
    if (e.is_number_integer()) {
      p.error_count = e.get<std::int64_t>();
    } else if (e.is_number_float() && std::floor(e.get<double>()) == e.get<double>()) {
      p.error_count = static_cast<std::int64_t>(e.get<double>());
    } else {
      throw Error(ErrorKind::InvalidErrorCount, "pair '" + p.id + "' has non-integer error_count " + e.dump());
    }
  }
  if (j.contains("perturbation") && !j["perturbation"].is_null()) {
    if (!j["perturbation"].is_string()) throw Error(ErrorKind::SchemaViolation, "perturbation must be a string");
    p.perturbation = parse_level(j["perturbation"].get<std::string>());
    if (!p.perturbation) throw Error(ErrorKind::SchemaViolation, "unknown perturbation " + j["perturbation"].dump());
  }
  if (require_pred) return validate_pair(std::move(p));
  p.gt_report = text::trim(p.gt_report);
  p.pred_report = text::trim(p.pred_report);
  if (p.gt_report.empty()) throw Error(ErrorKind::EmptyReport, "pair '" + p.id + "' has a blank reference report");
  if (p.error_count && *p.error_count < 0) {
    throw Error(ErrorKind::InvalidErrorCount, "pair '" + p.id + "' has a negative error_count");
  }
  return p;
}

/// Parses JSONL manifest text. Blank lines are skipped; ids must be unique.
/// Errors name the offending line.
inline std::vector<ReportPair> parse_manifest(std::string_view content, bool require_pred = true) {
  std::vector<ReportPair> pairs;
  std::map<std::string, std::size_t> seen;
  const auto lines = text::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim_view(lines[i]).empty()) continue;
    const auto lineno = i + 1;
    auto j = Json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::SchemaViolation, detail::line_prefix(lineno) + "invalid JSON");
    try {
      auto p = pair_from_json(j, require_pred);
      if (auto [it, fresh] = seen.emplace(p.id, lineno); !fresh) {
        throw Error(ErrorKind::SchemaViolation,
                    "duplicate id '" + p.id + "' (first on line " + std::to_string(it->second) + ")");
      }
      pairs.push_back(std::move(p));
    } catch (const Error& e) {
      throw Error(e.kind(), detail::line_prefix(lineno) + e.message());
    }
  }
  if (pairs.empty()) throw Error(ErrorKind::EmptyInput, "manifest has no rows");
  return pairs;
}

inline std::vector<ReportPair> read_manifest(const std::filesystem::path& path, bool require_pred = true) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "manifest not found: " + path.string());
  return parse_manifest(detail::read_text_file(path), require_pred);
}

inline std::string format_manifest(const std::vector<ReportPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) out += pair_to_json(p).dump() + "\n";
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ReportPair>& pairs) {
  detail::write_text_file(path, format_manifest(pairs));
}

// ---- aggregation ----------------------------------------------------------

/// Weighted mean of criterion scores: sum(w*s) / sum(w).
inline double aggregate_score(const ScoreDetail& detail, const WeightMap& weights) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& [name, s] : detail.scores()) {
    const double w = weights.weight_for(name);
    num += w * s;
    den += w;
  }
  if (!(den > 0.0)) throw Error(ErrorKind::ZeroTotalWeight, "every criterion has weight 0");
  return num / den;
}

// ---- base pool ------------------------------------------------------------

namespace detail {

// Uniform integer in [0, bound) by rejection; unlike the standard
// distributions the output is identical on every standard library.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  while (true) {
    const auto x = rng();
    if (x < limit) return x % bound;
  }
}

}  // namespace detail

/// Indices of the reports fed to the base-pool generator: a seeded uniform
/// sample of min(M, n) rows without replacement, returned in manifest order.
inline std::vector<std::size_t> sample_pool_indices(std::size_t n, int m, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const auto take = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(m, 1)));
  if (take < n) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + detail::bounded_draw(rng, n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

inline AgentOutput<CriteriaSet> build_base_pool(const Agents& agents, const std::vector<ReportPair>& dataset,
                                                const PipelineConfig& cfg) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyInput, "dataset is empty");
  std::vector<std::string> reports;
  for (auto i : sample_pool_indices(dataset.size(), cfg.base_pool_sample_size, cfg.rng_seed)) {
    reports.push_back(dataset[i].gt_report);
  }
  return agents.base_pool_generator(reports, cfg.K);
}

// ---- single sample --------------------------------------------------------

namespace stage {
inline constexpr const char* kBasePool = "base_pool";
inline constexpr const char* kCriteria = "criteria";
inline constexpr const char* kGtAnalyzer = "gt_analyzer";
inline constexpr const char* kPredMatcher = "pred_matcher";
inline constexpr const char* kEvaluator = "evaluator";
}  // namespace stage

struct SampleOutcome {
  SampleResult result;
  std::vector<llm::ChatExchange> exchanges;
};

namespace detail {

inline double latency_sum(const std::vector<llm::ChatExchange>& ex) {
  double total = 0.0;
  for (const auto& e : ex) total += e.latency_ms;
  return total;
}

template <typename Fn>
auto run_stage(const char* name, const std::string& sample_id, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(e, name, sample_id);
  }
}

}  // namespace detail

/// Runs the four per-sample stages in order. Stage timings are the summed
/// backend latencies of each stage's calls.
inline SampleOutcome evaluate_sample(const Agents& agents, const ReportPair& pair, const CriteriaSet& base,
                                     const PipelineConfig& cfg, const std::string& fingerprint) {
  if (base.empty()) throw Error(ErrorKind::InvalidArgument, "base pool is empty");
  SampleOutcome out;
  auto& r = out.result;
  r.pair_id = pair.id;
  r.base_criteria = base;
  r.backend_fingerprint = fingerprint;

  auto absorb = [&](const char* name, auto& agent_out) {
    r.timings_ms.emplace_back(name, detail::latency_sum(agent_out.exchanges));
    for (const auto& w : agent_out.warnings) r.warnings.push_back(std::string(name) + ": " + w);
    for (const auto& rep : agent_out.repairs) r.warnings.push_back(std::string(name) + ": repair " + rep);
    for (auto& ex : agent_out.exchanges) out.exchanges.push_back(std::move(ex));
  };

  auto crit = detail::run_stage(stage::kCriteria, pair.id,
                                [&] { return agents.criteria_identifier(pair.gt_report, base, pair.id); });
  absorb(stage::kCriteria, crit);
  r.dynamic_criteria = crit.value;

  auto gt = detail::run_stage(stage::kGtAnalyzer, pair.id,
                              [&] { return agents.gt_analyzer(pair.gt_report, r.dynamic_criteria, pair.id); });
  absorb(stage::kGtAnalyzer, gt);
  r.gt_values = gt.value;

  auto pred = detail::run_stage(stage::kPredMatcher, pair.id, [&] {
    return agents.prediction_matcher(pair.pred_report, r.dynamic_criteria, pair.id);
  });
  absorb(stage::kPredMatcher, pred);
  r.pred_values = pred.value;

  auto eval = detail::run_stage(stage::kEvaluator, pair.id, [&] {
    return agents.evaluation_agent(r.dynamic_criteria, r.gt_values, r.pred_values, pair.id);
  });
  absorb(stage::kEvaluator, eval);
  r.score_details = eval.value;

  r.aggregate = detail::run_stage("aggregate", pair.id, [&] { return aggregate_score(r.score_details, cfg.weights); });
  return out;
}

// ---- batch ----------------------------------------------------------------

struct RunOptions {
  bool agents = true;     // false: classic metrics only, backend never called
  bool baselines = false; // also run the two single-agent raters
  bool bertscore = true;  // only when the backend offers embeddings
};

struct SampleFailure {
  std::string pair_id;
  std::string stage;
  ErrorKind kind = ErrorKind::InvalidArgument;
  std::string message;
};

/// AllSamplesFailed, carrying the individual failures.
class BatchFailed : public Error {
 public:
  explicit BatchFailed(std::vector<SampleFailure> failures)
      : Error(ErrorKind::AllSamplesFailed, "all " + std::to_string(failures.size()) + " samples failed"),
        failures_(std::move(failures)) {}
  const std::vector<SampleFailure>& failures() const noexcept { return failures_; }

 private:
  std::vector<SampleFailure> failures_;
};

/// Every column of the per-sample metric table.
struct MetricRow {
  ReportPair pair;
  metrics::ClassicScores classic;
  std::optional<double> agent_detailed;
  std::optional<double> agent_simple;
  std::optional<double> agents_eval;
};

struct DatasetResult {
  std::vector<SampleResult> per_sample;  // successful samples, manifest order
  std::vector<MetricRow> rows;           // every pair, manifest order
  std::vector<SampleFailure> failures;
  std::vector<llm::ChatExchange> exchanges;
  std::vector<std::pair<std::string, CriteriaSet>> base_pools;  // per section group
  double mean_score = 0.0;
  std::map<std::string, double> metric_means;
};

/// Grouping key for base pools: the section label, or "all".
inline std::string section_group(const ReportPair& p) {
  return p.section ? std::string(to_string(*p.section)) : std::string("all");
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline std::optional<double> try_bertscore(llm::Backend& backend, const ReportPair& p) {
  const auto c = metrics::tokenize(p.pred_report);
  const auto r = metrics::tokenize(p.gt_report);
  if (c.empty() || r.empty()) return std::nullopt;
  try {
    return metrics::bertscore_greedy(backend.embed(c.tokens), backend.embed(r.tokens));
  } catch (const Error& e) {
    log::warn("bertscore unavailable for '" + p.id + "': " + e.what());
    return std::nullopt;
  }
}

inline void add_mean(std::map<std::string, double>& means, const std::string& key,
                     const std::vector<MetricRow>& rows, const std::function<std::optional<double>(const MetricRow&)>& get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n > 0) means[key] = sum / static_cast<double>(n);
}

}  // namespace detail

/// Evaluates a dataset. Rows sharing a section get one base pool; samples run
/// concurrently up to cfg.max_parallel_samples. Failed samples are listed and
/// left out of every mean. Throws AllSamplesFailed when agents were requested
/// and no sample survived.
inline DatasetResult run_batch(const std::vector<ReportPair>& dataset, const PipelineConfig& cfg,
                               llm::Backend* backend, const PromptCatalog& prompts, const RunOptions& opts = {}) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyInput, "dataset is empty");
  cfg.validate();
  if ((opts.agents || opts.baselines) && backend == nullptr) {
    throw Error(ErrorKind::Config, "a backend is required unless running metrics only");
  }

  DatasetResult out;
  const auto n = dataset.size();
  out.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.rows[i].pair = dataset[i];
    out.rows[i].classic = metrics::classic_scores(dataset[i].pred_report, dataset[i].gt_report, cfg.metric_params);
  }
  if (backend && opts.bertscore && backend->has_embeddings()) {
    for (std::size_t i = 0; i < n; ++i) out.rows[i].classic.bertscore = detail::try_bertscore(*backend, dataset[i]);
  }

  std::vector<std::optional<SampleOutcome>> outcomes(n);
  std::vector<std::vector<llm::ChatExchange>> extra_exchanges(n);
  std::vector<std::vector<SampleFailure>> sample_failures(n);
  std::vector<llm::ChatExchange> pool_exchanges;

  if (backend) {
    const Agents agents(*backend, prompts);
    const auto fingerprint = backend->fingerprint();

    std::vector<std::string> groups;
    for (const auto& p : dataset) {
      const auto g = section_group(p);
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }

    for (const auto& group : groups) {
      std::vector<std::size_t> members;
      std::vector<ReportPair> subset;
      for (std::size_t i = 0; i < n; ++i) {
        if (section_group(dataset[i]) == group) {
          members.push_back(i);
          subset.push_back(dataset[i]);
        }
      }

      std::optional<CriteriaSet> base;
      if (opts.agents) {
        try {
          auto pool = build_base_pool(agents, subset, cfg);
          for (auto& ex : pool.exchanges) pool_exchanges.push_back(std::move(ex));
          base = std::move(pool.value);
          out.base_pools.emplace_back(group, *base);
        } catch (const Error& e) {
          log::error("base pool for group '" + group + "' failed: " + e.what());
          for (auto i : members) sample_failures[i].push_back({dataset[i].id, stage::kBasePool, e.kind(), e.message()});
        }
      }

      detail::parallel_for(members.size(), cfg.max_parallel_samples, [&](std::size_t k) {
        const auto i = members[k];
        const auto& pair = dataset[i];
        if (base) {
          try {
            outcomes[i] = evaluate_sample(agents, pair, *base, cfg, fingerprint);
          } catch (const StageError& e) {
            sample_failures[i].push_back({pair.id, e.stage(), e.kind(), e.message()});
          } catch (const Error& e) {
            sample_failures[i].push_back({pair.id, "sample", e.kind(), e.message()});
          }
        }
        if (opts.baselines) {
          for (auto variant : {SingleVariant::detailed, SingleVariant::simple}) {
            const char* name = variant == SingleVariant::detailed ? "single_detailed" : "single_simple";
            try {
              auto s = agents.single_agent(pair.gt_report, pair.pred_report, variant, pair.id);
              (variant == SingleVariant::detailed ? out.rows[i].agent_detailed : out.rows[i].agent_simple) = s.value;
              for (auto& ex : s.exchanges) extra_exchanges[i].push_back(std::move(ex));
            } catch (const Error& e) {
              sample_failures[i].push_back({pair.id, name, e.kind(), e.message()});
            }
          }
        }
      });
    }
  }

  out.exchanges = std::move(pool_exchanges);
  for (std::size_t i = 0; i < n; ++i) {
    if (outcomes[i]) {
      out.rows[i].agents_eval = outcomes[i]->result.aggregate;
      for (auto& ex : outcomes[i]->exchanges) out.exchanges.push_back(std::move(ex));
      out.per_sample.push_back(std::move(outcomes[i]->result));
    }
    for (auto& ex : extra_exchanges[i]) out.exchanges.push_back(std::move(ex));
    for (auto& f : sample_failures[i]) {
      log::warn("sample '" + f.pair_id + "' failed at " + f.stage + ": " + f.message);
      out.failures.push_back(std::move(f));
    }
  }

  if (opts.agents && out.per_sample.empty()) {
    throw BatchFailed(out.failures);
  }

  auto& m = out.metric_means;
  detail::add_mean(m, "bleu", out.rows, [](const MetricRow& r) { return std::optional(r.classic.bleu); });
  detail::add_mean(m, "rouge1", out.rows, [](const MetricRow& r) { return std::optional(r.classic.rouge1); });
  detail::add_mean(m, "rougeL", out.rows, [](const MetricRow& r) { return std::optional(r.classic.rouge_l); });
  detail::add_mean(m, "meteor", out.rows, [](const MetricRow& r) { return std::optional(r.classic.meteor); });
  detail::add_mean(m, "chrf", out.rows, [](const MetricRow& r) { return std::optional(r.classic.chrf); });
  detail::add_mean(m, "bertscore", out.rows, [](const MetricRow& r) { return r.classic.bertscore; });
  detail::add_mean(m, "agent_detailed", out.rows, [](const MetricRow& r) { return r.agent_detailed; });
  detail::add_mean(m, "agent_simple", out.rows, [](const MetricRow& r) { return r.agent_simple; });
  detail::add_mean(m, "agents_eval", out.rows, [](const MetricRow& r) { return r.agents_eval; });
  if (auto it = m.find("agents_eval"); it != m.end()) out.mean_score = it->second;
  return out;
}

// ---- config snapshot ------------------------------------------------------

/// Resolved configuration as recorded in trace headers. The API key itself
/// is never included, only the name of the variable holding it.
inline Json config_to_json(const PipelineConfig& cfg) {
  Json j = Json::object();
  j["K"] = cfg.K;
  j["base_pool_sample_size"] = cfg.base_pool_sample_size;
  j["max_parallel_samples"] = cfg.max_parallel_samples;
  j["rng_seed"] = cfg.rng_seed;
  j["weights"] = weights_to_json(cfg.weights);
  Json b = Json::object();
  b["base_url"] = cfg.backend.base_url;
  b["model_name"] = cfg.backend.model_name;
  b["temperature"] = cfg.backend.temperature;
  b["max_output_tokens"] = cfg.backend.max_output_tokens;
  b["request_timeout_ms"] = cfg.backend.request_timeout.count();
  b["max_retries"] = cfg.backend.max_retries;
  b["retry_base_delay_ms"] = cfg.backend.retry_base_delay.count();
  b["requests_per_minute"] = cfg.backend.requests_per_minute;
  b["api_key_env"] = cfg.backend.api_key_env;
  b["embedding_model"] = cfg.backend.embedding_model;
  j["backend"] = std::move(b);
  const auto& mp = cfg.metric_params;
  Json m = Json::object();
  m["bleu_max_n"] = mp.bleu_max_n;
  m["bleu_weights"] = mp.resolved_bleu_weights();
  m["smoothing"] = mp.smoothing.kind == metrics::Smoothing::Kind::none ? "none" : "add_k";
  m["smoothing_k"] = mp.smoothing.k;
  m["rouge_beta"] = mp.rouge_beta;
  m["meteor_recall_weight"] = mp.meteor_recall_weight;
  m["meteor_gamma"] = mp.meteor_gamma;
  m["meteor_theta"] = mp.meteor_theta;
  m["chrf_max_n"] = mp.chrf_max_n;
  m["chrf_beta"] = mp.chrf_beta;
  j["metrics"] = std::move(m);
  return j;
}

// ---- trace ----------------------------------------------------------------

struct Trace {
  Json config_snapshot;
  std::vector<SampleResult> samples;
};

inline Json sample_to_json(const SampleResult& r) {
  Json j = Json::object();
  j["pair_id"] = r.pair_id;
  j["base_criteria"] = criteria_to_json(r.base_criteria);
  j["dynamic_criteria"] = criteria_to_json(r.dynamic_criteria);
  j["gt_values_dict"] = values_to_json(r.gt_values);
  j["pred_values_dict"] = values_to_json(r.pred_values);
  j["pred_score_details"] = scores_to_json(r.score_details);
  j["overrides"] = overrides_to_json(r.score_details.overrides());
  j["aggregate"] = r.aggregate;
  Json t = Json::object();
  for (const auto& [stage_name, ms] : r.timings_ms) t[stage_name] = ms;
  j["timings_ms"] = std::move(t);
  j["backend_fingerprint"] = r.backend_fingerprint;
  j["warnings"] = r.warnings;
  return j;
}

inline SampleResult sample_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaViolation, "trace line must be a JSON object");
  for (const char* field : {"pair_id", "base_criteria", "dynamic_criteria", "gt_values_dict", "pred_values_dict",
                            "pred_score_details", "overrides", "aggregate", "timings_ms", "backend_fingerprint"}) {
    if (!j.contains(field)) throw Error(ErrorKind::SchemaViolation, std::string("missing field '") + field + "'");
  }
  if (!j["pair_id"].is_string() || !j["aggregate"].is_number() || !j["timings_ms"].is_object() ||
      !j["backend_fingerprint"].is_string()) {
    throw Error(ErrorKind::SchemaViolation, "mistyped pair_id, aggregate, timings_ms or backend_fingerprint");
  }
  SampleResult r;
  try {
    r.pair_id = j["pair_id"].get<std::string>();
    r.base_criteria = criteria_from_json(j["base_criteria"], CriteriaOrigin::base_pool);
    r.dynamic_criteria = criteria_from_json(j["dynamic_criteria"], CriteriaOrigin::dynamic);
    r.gt_values = values_from_json(j["gt_values_dict"], r.dynamic_criteria, Side::gt);
    r.pred_values = values_from_json(j["pred_values_dict"], r.dynamic_criteria, Side::pred);
    r.score_details =
        scores_from_json(j["pred_score_details"], r.dynamic_criteria, overrides_from_json(j["overrides"]));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::SchemaViolation) throw;
    throw Error(ErrorKind::SchemaViolation, e.message());
  }
  r.aggregate = j["aggregate"].get<double>();
  for (const auto& [k, v] : j["timings_ms"].items()) {
    if (!v.is_number()) throw Error(ErrorKind::SchemaViolation, "timing for '" + k + "' must be a number");
    r.timings_ms.emplace_back(k, v.get<double>());
  }
  r.backend_fingerprint = j["backend_fingerprint"].get<std::string>();
  if (j.contains("warnings")) {
    if (!j["warnings"].is_array()) throw Error(ErrorKind::SchemaViolation, "warnings must be an array");
    for (const auto& w : j["warnings"]) {
      if (!w.is_string()) throw Error(ErrorKind::SchemaViolation, "warnings must be strings");
      r.warnings.push_back(w.get<std::string>());
    }
  }
  return r;
}

/// Header line followed by one line per sample, in the given order.
inline std::string format_trace(const Json& config_snapshot, const std::vector<SampleResult>& results) {
  Json header = Json::object();
  header["schema_version"] = kTraceSchemaVersion;
  header["config_snapshot"] = config_snapshot;
  std::string out = header.dump() + "\n";
  for (const auto& r : results) out += sample_to_json(r).dump() + "\n";
  return out;
}

inline void write_trace(const std::filesystem::path& path, const Json& config_snapshot,
                        const std::vector<SampleResult>& results) {
  detail::write_text_file(path, format_trace(config_snapshot, results));
}

/// Inverse of format_trace. Each aggregate is recomputed from its score
/// dictionary with the header's weights and must match exactly.
inline Trace parse_trace(std::string_view content) {
  const auto lines = text::split_lines(content);
  Trace trace;
  std::optional<WeightMap> weights;
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim_view(lines[i]).empty()) continue;
    const auto lineno = i + 1;
    const auto where = detail::line_prefix(lineno);
    auto j = Json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::SchemaViolation, where + "invalid JSON");
    if (!have_header) {
      if (!j.is_object() || !j.contains("schema_version") || !j.contains("config_snapshot")) {
        throw Error(ErrorKind::SchemaViolation, where + "missing trace header");
      }
      if (j["schema_version"] != kTraceSchemaVersion) {
        throw Error(ErrorKind::SchemaViolation, where + "unsupported schema_version " + j["schema_version"].dump());
      }
      trace.config_snapshot = j["config_snapshot"];
      if (trace.config_snapshot.contains("weights")) {
        try {
          weights = weights_from_json(trace.config_snapshot["weights"]);
        } catch (const Error& e) {
          throw Error(ErrorKind::SchemaViolation, where + e.message());
        }
      }
      have_header = true;
      continue;
    }
    SampleResult r;
    try {
      r = sample_from_json(j);
    } catch (const Error& e) {
      throw Error(ErrorKind::SchemaViolation, where + e.message());
    }
    const double expected = aggregate_score(r.score_details, weights.value_or(WeightMap{}));
    if (expected != r.aggregate) {
      std::ostringstream msg;
      msg.precision(17);
      msg << where << "aggregate " << r.aggregate << " for '" << r.pair_id << "' does not match recomputed "
          << expected;
      throw Error(ErrorKind::Integrity, msg.str());
    }
    trace.samples.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorKind::SchemaViolation, "trace is empty");
  return trace;
}

inline Trace read_trace(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "trace not found: " + path.string());
  return parse_trace(detail::read_text_file(path));
}

inline Json exchange_to_json(const llm::ChatExchange& ex) {
  Json j = Json::object();
  j["role"] = ex.role;
  j["sample_id"] = ex.sample_id;
  j["system_prompt"] = ex.system_prompt;
  j["user_prompt"] = ex.user_prompt;
  j["response_text"] = ex.response_text;
  j["latency_ms"] = ex.latency_ms;
  j["model_fingerprint"] = ex.model_fingerprint;
  j["transport_attempts"] = ex.transport_attempts;
  return j;
}

}  // namespace agentseval
