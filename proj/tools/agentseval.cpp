#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "agentseval/cli.hpp"

namespace {

using namespace agentseval;

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> backend_url;
  std::optional<std::string> model;
  std::optional<std::string> embedding_model;
  std::optional<std::string> mock;
  std::optional<std::string> weights;
  std::optional<std::string> out_dir;
  std::optional<std::string> prompts_dir;
  std::optional<int> max_parallel;
  std::optional<int> K;
  std::optional<int> M;
  std::optional<int> window;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON config file");
    app.add_option("--backend-url", backend_url, "OpenAI-compatible base URL, e.g. http://localhost:8000/v1");
    app.add_option("--model", model, "Model name sent to the backend");
    app.add_option("--embedding-model", embedding_model, "Embedding model for BERTScore");
    app.add_option("--mock", mock, "Answer agent calls from a JSON fixture instead of a live backend");
    app.add_option("--weights", weights, "JSON file with per-criterion weights");
    app.add_option("--out-dir", out_dir, "Output directory");
    app.add_option("--prompts-dir", prompts_dir, "Directory with <role>.system.txt / <role>.user.txt overrides");
    app.add_option("--max-parallel", max_parallel, "Samples evaluated concurrently");
    app.add_option("-K,--top-k", K, "Base pool size (default 20)");
    app.add_option("-M,--pool-sample", M, "Reports sampled for the base pool (default 50)");
    app.add_option("--window", window, "Moving-average window, odd (default 15)");
    app.add_option("--seed", seed, "Seed for base-pool report sampling");
    app.add_flag("-v,--verbose", verbose, "Log info messages");
  }

  cli::Overrides overrides() const {
    cli::Overrides o;
    o.backend_url = backend_url;
    o.model = model;
    o.embedding_model = embedding_model;
    o.max_parallel = max_parallel;
    o.K = K;
    o.M = M;
    o.window = window;
    o.seed = seed;
    if (out_dir) o.out_dir = *out_dir;
    if (mock) o.mock = *mock;
    if (prompts_dir) o.prompts_dir = *prompts_dir;
    if (weights) o.weights_file = *weights;
    return o;
  }

  std::optional<std::filesystem::path> config_path() const {
    if (!config) return std::nullopt;
    return std::filesystem::path(*config);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent clinical evaluation of generated medical reports"};
  app.require_subcommand(1);

  CommonFlags eval_flags, analyze_flags, perturb_flags;

  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest of report pairs");
  std::string eval_manifest;
  bool metrics_only = false, baselines = false;
  evaluate->add_option("manifest", eval_manifest, "JSONL manifest")->required();
  evaluate->add_flag("--metrics-only", metrics_only, "Classic metrics only; no backend calls");
  evaluate->add_flag("--baselines", baselines, "Also run the single-agent raters");
  eval_flags.attach(*evaluate);

  auto* analyze = app.add_subcommand("analyze", "Trend consistency of metric columns against error counts");
  std::string analyze_input, errors_field = "error_count";
  std::optional<std::string> analyze_manifest;
  bool svg = false, raw_errors = false, smooth_spearman = false;
  analyze->add_option("input", analyze_input, "metrics.csv or trace.jsonl")->required();
  analyze->add_option("--manifest", analyze_manifest, "Manifest with error counts (for trace input)");
  analyze->add_option("--errors-field", errors_field, "CSV column holding error counts");
  analyze->add_flag("--svg", svg, "Also write plot.svg");
  analyze->add_flag("--raw-errors", raw_errors, "Compare with normalized errors instead of 1 - errors");
  analyze->add_flag("--smooth-spearman", smooth_spearman, "Rank the smoothed metric curve");
  analyze_flags.attach(*analyze);

  auto* perturb = app.add_subcommand("perturb", "Generate A/B rewrite levels from clean reports");
  std::string perturb_manifest, levels = "all";
  std::optional<std::string> perturb_output;
  perturb->add_option("manifest", perturb_manifest, "Clean JSONL manifest")->required();
  perturb->add_option("--levels", levels, "Comma-separated levels (A1..B3) or 'all'");
  perturb->add_option("-o,--output", perturb_output, "Output manifest (default <out-dir>/perturbed.jsonl)");
  perturb_flags.attach(*perturb);

  auto* trace = app.add_subcommand("trace", "Print the reasoning chain of one sample");
  std::string trace_path, sample_id;
  trace->add_option("trace", trace_path, "trace.jsonl")->required();
  trace->add_option("sample_id", sample_id, "Pair id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::exit_code::kConfig;
  }

  auto set_verbosity = [](const CommonFlags& f) {
    if (f.verbose) log::set_threshold(log::Level::info);
  };

  if (evaluate->parsed()) {
    set_verbosity(eval_flags);
    cli::EvaluateArgs args;
    args.manifest = eval_manifest;
    args.config = eval_flags.config_path();
    args.overrides = eval_flags.overrides();
    if (metrics_only) args.overrides.metrics_only = true;
    if (baselines) args.overrides.baselines = true;
    return cli::cmd_evaluate(args, std::cout, std::cerr);
  }
  if (analyze->parsed()) {
    set_verbosity(analyze_flags);
    cli::AnalyzeArgs args;
    args.input = analyze_input;
    if (analyze_manifest) args.manifest = *analyze_manifest;
    args.errors_field = errors_field;
    args.svg = svg;
    args.config = analyze_flags.config_path();
    args.overrides = analyze_flags.overrides();
    if (raw_errors) args.overrides.raw_errors = true;
    if (smooth_spearman) args.overrides.smooth_spearman = true;
    return cli::cmd_analyze(args, std::cout, std::cerr);
  }
  if (perturb->parsed()) {
    set_verbosity(perturb_flags);
    cli::PerturbArgs args;
    args.manifest = perturb_manifest;
    args.levels = levels;
    if (perturb_output) args.output = *perturb_output;
    args.config = perturb_flags.config_path();
    args.overrides = perturb_flags.overrides();
    return cli::cmd_perturb(args, std::cout, std::cerr);
  }
  cli::TraceArgs args{trace_path, sample_id};
  return cli::cmd_trace(args, std::cout, std::cerr);
}
