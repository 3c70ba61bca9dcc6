// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any required criterion fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include "agentseval/agentseval.hpp"
#include "oracles.hpp"

using namespace agentseval;
namespace fs = std::filesystem;

namespace {

const fs::path kData = AGENTSEVAL_TEST_DATA;

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
  void expect(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s: got %.12g want %.12g", what.c_str(), got, want);
      fail(buf);
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("agentseval-acc-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

cli::EnvLookup no_env() {
  return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

metrics::TokenSequence seq(const oracle::Tokens& t) { return metrics::TokenSequence{t}; }

// ---- AC1 ------------------------------------------------------------------

Outcome ac1_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240611);
  metrics::MetricParams smoothed;
  metrics::MetricParams plain;
  plain.smoothing = metrics::Smoothing::none();
  int cases = 0;
  for (int i = 0; i < 60; ++i, ++cases) {
    const auto c = oracle::random_tokens(rng, 1, 8);
    const auto r = oracle::random_tokens(rng, 1, 8);
    const auto tag = " case " + std::to_string(i);
    o.near(metrics::bleu(seq(c), seq(r), smoothed), oracle::bleu(c, r, 4, 1.0), 1e-9, "BLEU smoothed" + tag);
    o.near(metrics::bleu(seq(c), seq(r), plain), oracle::bleu(c, r, 4, 0.0), 1e-9, "BLEU" + tag);
    o.near(metrics::rouge_1(seq(c), seq(r)), oracle::rouge_1(c, r), 1e-9, "ROUGE-1" + tag);
    o.near(metrics::rouge_l(seq(c), seq(r), 1.0), oracle::rouge_l(c, r, 1.0), 1e-9, "ROUGE-L" + tag);
    o.near(metrics::meteor(seq(c), seq(r)), oracle::meteor(c, r), 1e-9, "METEOR" + tag);
    const auto cs = oracle::join(c), rs = oracle::join(r);
    o.near(metrics::chrf(cs, rs), oracle::chrf(cs, rs, 6, 2.0), 1e-9, "chrF" + tag);
  }
  const double secs = seconds_since(t0);
  o.expect(secs < 10.0, "runtime " + std::to_string(secs) + " s");
  if (o.pass) o.detail = std::to_string(cases) + " cases per metric in " + cli::fixed(secs, 2) + " s";
  return o;
}

// ---- AC2 ------------------------------------------------------------------

Outcome ac2_hand_values() {
  Outcome o;
  metrics::MetricParams uni;
  uni.bleu_max_n = 1;
  o.near(metrics::bleu(seq({"the", "the", "the", "the"}), seq({"the", "cat"}), uni), 0.25, 1e-6, "BLEU clipping");
  o.near(metrics::bleu(seq({"the", "cat"}), seq({"the", "cat", "sat"}), uni), std::exp(-0.5), 1e-6, "BLEU brevity");
  o.near(metrics::rouge_l(seq({"a", "b", "c", "d"}), seq({"a", "c", "b", "d"})), 0.75, 1e-6, "ROUGE-L");
  o.near(metrics::meteor(seq({"a", "b", "c"}), seq({"a", "b", "c"})), 0.98148, 1e-5, "METEOR identity");
  o.near(metrics::meteor(seq({"the", "cat", "sat"}), seq({"the", "cat"})), 0.8929, 1e-4, "METEOR partial");
  o.near(metrics::meteor(seq({"the", "cat", "sat"}), seq({"the", "cat"})), 20.0 / 21.0 * 0.9375, 1e-6,
         "METEOR partial exact");
  metrics::MetricParams chr;
  chr.chrf_max_n = 1;
  chr.chrf_beta = 1.0;
  o.near(metrics::chrf("ab", "abc", chr), 0.8, 1e-6, "chrF");
  o.near(stats::spearman(stats::Series({1, 2, 2, 4}), stats::Series({1, 3, 2, 4})), 0.9487, 1e-4, "Spearman");
  o.near(stats::spearman(stats::Series({1, 2, 2, 4}), stats::Series({1, 3, 2, 4})), 0.9 / std::sqrt(0.9), 1e-6,
         "Spearman exact");
  o.near(stats::dtw(stats::Series({0, 1}), stats::Series({0, 1, 1})), 0.0, 1e-6, "DTW warp");
  o.near(stats::dtw(stats::Series({0}), stats::Series({5})), 5.0, 1e-6, "DTW single cell");
  o.near(stats::dtw(stats::Series({0, 1}), stats::Series({0, 1, 1})),
         oracle::dtw_paths({0, 1}, {0, 1, 1}), 1e-6, "DTW path enumeration");
  const auto ma = stats::moving_average(stats::Series({0, 3, 6}), 3).values();
  o.expect(ma.size() == 3, "moving average length");
  if (ma.size() == 3) {
    o.near(ma[0], 1.5, 1e-6, "moving average edge");
    o.near(ma[1], 3.0, 1e-6, "moving average centre");
    o.near(ma[2], 4.5, 1e-6, "moving average edge");
  }
  const CriteriaSet c({"A", "B", "C"}, CriteriaOrigin::dynamic);
  const ScoreDetail d(c, {{"A", 1.0}, {"B", 0.5}, {"C", 0.0}});
  o.near(aggregate_score(d, WeightMap({{"A", 2.0}, {"B", 1.0}, {"C", 1.0}})), 0.625, 1e-6, "aggregate");
  o.near(oracle::weighted_mean({1.0, 0.5, 0.0}, {2, 1, 1}), 0.625, 1e-6, "aggregate oracle");
  if (o.pass) o.detail = "15 reference values";
  return o;
}

// ---- AC3 ------------------------------------------------------------------

Outcome ac3_aggregate_properties() {
  Outcome o;
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> len(1, 12);
  std::uniform_int_distribution<int> grid(0, 2);
  std::uniform_real_distribution<double> weight(0.0, 5.0);
  std::uniform_int_distribution<int> exponent(-20, 20);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  double worst_arbitrary = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<std::string> names;
    std::vector<std::pair<std::string, double>> scores;
    std::vector<std::pair<std::string, double>> weights;
    for (int i = 0; i < n; ++i) {
      names.push_back("c" + std::to_string(i));
      scores.emplace_back(names.back(), grid(rng) * 0.5);
      weights.emplace_back(names.back(), rng() % 5 == 0 ? 0.0 : weight(rng));
    }
    weights[0].second = std::max(weights[0].second, 0.1);
    const CriteriaSet c(names, CriteriaOrigin::dynamic);
    const ScoreDetail d(c, scores);
    const WeightMap w(weights);
    const double agg = aggregate_score(d, w);
    const auto tag = " trial " + std::to_string(trial);

    o.expect(agg >= 0.0 && agg <= 1.0, "bounds" + tag);

    const double pow2 = std::ldexp(1.0, exponent(rng));
    o.expect(aggregate_score(d, w.scaled(pow2)) == agg, "scale invariance (power of two)" + tag);
    const double arbitrary = aggregate_score(d, w.scaled(scale(rng)));
    worst_arbitrary = std::max(worst_arbitrary, std::abs(arbitrary - agg));
    o.expect(std::abs(arbitrary - agg) <= 4 * std::numeric_limits<double>::epsilon(), "scale invariance" + tag);

    const auto idx = static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
    if (scores[idx].second < 1.0) {
      auto raised = scores;
      raised[idx].second += 0.5;
      const double up = aggregate_score(ScoreDetail(c, raised), w);
      o.expect(up >= agg, "monotonicity" + tag);
      if (weights[idx].second > 0.0) o.expect(up > agg, "strict monotonicity" + tag);
    }
  }
  if (o.pass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "1000 pairs; exact under power-of-two scaling, max drift %.3g otherwise",
                  worst_arbitrary);
    o.detail = buf;
  }
  return o;
}

// ---- AC4 ------------------------------------------------------------------

Outcome ac4_determinism() {
  Outcome o;
  std::vector<std::string> traces, csvs;
  for (int run = 0; run < 3; ++run) {
    TempDir dir("ac4-" + std::to_string(run));
    cli::EvaluateArgs args;
    args.manifest = kData / "mock10" / "manifest.jsonl";
    args.overrides.mock = kData / "mock10" / "fixture.json";
    args.overrides.out_dir = dir.path();
    std::ostringstream out, err;
    const int code = cli::cmd_evaluate(args, out, err, no_env());
    if (code != cli::exit_code::kOk) {
      o.fail("run " + std::to_string(run) + " exited " + std::to_string(code) + ": " + err.str());
      return o;
    }
    traces.push_back(detail::read_text_file(dir.path() / "trace.jsonl"));
    csvs.push_back(detail::read_text_file(dir.path() / "metrics.csv"));
  }
  o.expect(traces[0] == traces[1] && traces[1] == traces[2], "trace differs between runs");
  o.expect(csvs[0] == csvs[1] && csvs[1] == csvs[2], "CSV differs between runs");

  const auto trace = parse_trace(traces[0]);
  o.expect(trace.samples.size() == 10, "expected 10 samples in trace");
  const auto weights = weights_from_json(trace.config_snapshot.at("weights"));
  for (const auto& s : trace.samples) {
    o.expect(aggregate_score(s.score_details, weights) == s.aggregate, "aggregate mismatch for " + s.pair_id);
    std::vector<std::string> keys;
    for (const auto& [k, v] : s.score_details.scores()) keys.push_back(k);
    o.expect(keys == s.dynamic_criteria.names(), "score keys differ from criteria for " + s.pair_id);
  }
  if (o.pass) o.detail = "3 runs, 10 samples, byte-identical trace and CSV";
  return o;
}

// ---- AC5 ------------------------------------------------------------------

CriteriaSet criteria_of(const Json& names) {
  return CriteriaSet(names.get<std::vector<std::string>>(), CriteriaOrigin::dynamic);
}

ValueDict values_of(const Json& obj, const CriteriaSet& c, Side side) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [k, v] : obj.items()) entries.emplace_back(k, v.get<std::string>());
  return ValueDict(c, entries, side);
}

Outcome ac5_contracts() {
  Outcome o;
  const auto corpus = Json::parse(detail::read_text_file(kData / "contract_fixtures.json"));
  std::size_t total = 0, applicable = 0, fired = 0;
  for (const auto& fx : corpus.at("cases")) {
    ++total;
    const auto name = fx.at("name").get<std::string>();
    const auto stage = fx.at("stage").get<std::string>();
    const auto raw = fx.at("raw").get<std::string>();
    try {
      std::vector<std::string> repairs;
      if (stage == "base_pool" || stage == "criteria") {
        auto parsed = stage == "base_pool" ? parse_base_pool(raw, fx.at("k").get<int>()) : parse_criteria(raw);
        o.expect(parsed.value.names() == fx.at("expect").get<std::vector<std::string>>(), name + ": names");
        repairs = parsed.repairs;
      } else if (stage == "values") {
        const auto c = criteria_of(fx.at("criteria"));
        auto parsed = parse_values(raw, c, Side::gt);
        o.expect(parsed.value == values_of(fx.at("expect"), c, Side::gt), name + ": values");
        repairs = parsed.repairs;
      } else if (stage == "scores") {
        const auto c = criteria_of(fx.at("criteria"));
        const auto gt = values_of(fx.at("gt"), c, Side::gt);
        const auto pred = values_of(fx.at("pred"), c, Side::pred);
        auto parsed = parse_scores(raw, c, gt, pred);
        const auto& got = parsed.value;
        for (const auto& [k, v] : fx.at("expect").items()) {
          const auto it = std::find_if(got.scores().begin(), got.scores().end(),
                                       [&](const auto& s) { return s.first == k; });
          o.expect(it != got.scores().end() && it->second == v.get<double>(), name + ": score for " + k);
        }
        std::vector<std::pair<std::string, std::string>> want_ov, got_ov;
        for (const auto& e : fx.at("expect_overrides")) want_ov.emplace_back(e[0], e[1]);
        for (const auto& ov : got.overrides()) got_ov.emplace_back(ov.criterion, ov.reason);
        o.expect(want_ov == got_ov, name + ": overrides");
        if (fx.contains("not_mentioned")) {
          for (const auto& crit : fx.at("not_mentioned")) {
            ++applicable;
            const bool hit = std::any_of(got.overrides().begin(), got.overrides().end(), [&](const ScoreOverride& ov) {
              return ov.criterion == crit.get<std::string>() && ov.reason == override_reason::kNotMentioned;
            });
            const auto it = std::find_if(got.scores().begin(), got.scores().end(),
                                         [&](const auto& s) { return s.first == crit.get<std::string>(); });
            if (hit && it != got.scores().end() && it->second == 0.0) ++fired;
          }
        }
        repairs = parsed.repairs;
      } else if (stage == "single") {
        auto parsed = parse_single_score(raw);
        o.expect(std::abs(parsed.value - fx.at("expect").get<double>()) <= 1e-12, name + ": score");
        repairs = parsed.repairs;
      } else {
        o.fail(name + ": unknown stage " + stage);
        continue;
      }
      o.expect(!fx.contains("expect_error"), name + ": expected " + fx.value("expect_error", std::string()));
      if (fx.contains("expect_repairs")) {
        o.expect(repairs == fx.at("expect_repairs").get<std::vector<std::string>>(), name + ": repairs");
      }
    } catch (const Error& e) {
      const bool expected = fx.contains("expect_error") && fx.at("expect_error").get<std::string>() == to_string(e.kind());
      o.expect(expected, name + ": unexpected " + std::string(e.what()));
    }
  }
  o.expect(total == 20, "expected 20 fixtures, found " + std::to_string(total));
  o.expect(applicable > 0 && fired == applicable,
           "Not mentioned override fired " + std::to_string(fired) + "/" + std::to_string(applicable));
  if (o.pass) {
    o.detail = std::to_string(total) + " fixtures; Not mentioned override " + std::to_string(fired) + "/" +
               std::to_string(applicable);
  }
  return o;
}

// ---- AC6 ------------------------------------------------------------------

Outcome ac6_trend() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> err_dist(0, 20);
  std::normal_distribution<double> noise(0.0, 0.05);
  const int n = 100;
  std::vector<int> errors(n);
  for (auto& e : errors) e = err_dist(rng);
  const int lo = *std::min_element(errors.begin(), errors.end());
  const int hi = *std::max_element(errors.begin(), errors.end());
  std::vector<double> metric(n);
  for (int i = 0; i < n; ++i) metric[i] = 1.0 - static_cast<double>(errors[i] - lo) / (hi - lo) + noise(rng);
  auto shuffled = metric;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  TempDir dir("ac6");
  std::string csv = "id,error_count,tracking,shuffled\n";
  for (int i = 0; i < n; ++i) {
    csv += "s" + std::to_string(i) + "," + std::to_string(errors[i]) + "," + cli::fixed(metric[i], 10) + "," +
           cli::fixed(shuffled[i], 10) + "\n";
  }
  detail::write_text_file(dir.path() / "metrics.csv", csv);
  cli::AnalyzeArgs args;
  args.input = dir.path() / "metrics.csv";
  args.overrides.out_dir = dir.path() / "out";
  std::ostringstream out, err;
  const int code = cli::cmd_analyze(args, out, err, no_env());
  if (code != cli::exit_code::kOk) {
    o.fail("analyze exited " + std::to_string(code) + ": " + err.str());
    return o;
  }
  const auto result = cli::analyze_table(cli::table_from_csv(csv), cli::AnalysisConfig{});
  const auto& tracking = result.rows.at(0);
  const auto& random = result.rows.at(1);
  o.expect(tracking.spearman && *tracking.spearman >= 0.95, "Spearman below 0.95");
  o.expect(tracking.dtw && random.dtw && *tracking.dtw < *random.dtw, "DTW not smaller than the shuffled column");
  o.expect(out.str().find("| tracking |") != std::string::npos, "analyze output lacks the metric row");
  const double secs = seconds_since(t0);
  o.expect(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  if (o.pass) {
    o.detail = "Spearman " + cli::fixed(*tracking.spearman, 3) + ", DTW " + cli::fixed(*tracking.dtw, 3) +
               " vs shuffled " + cli::fixed(*random.dtw, 3) + " (Spearman " +
               (random.spearman ? cli::fixed(*random.spearman, 3) : std::string("-")) + ")";
  }
  return o;
}

// ---- AC7 ------------------------------------------------------------------

std::optional<Outcome> ac7_live() {
  const auto url = cli::process_env("AGENTSEVAL_BACKEND_URL");
  const auto model = cli::process_env("AGENTSEVAL_MODEL");
  const auto key = cli::process_env("AGENTSEVAL_API_KEY");
  if (!url || !model || !key) return std::nullopt;
  Outcome o;
  try {
    auto cfg = cli::resolve_config(std::nullopt, {}, cli::process_env);
    auto pairs = read_manifest(kData / "mock10" / "manifest.jsonl");
    pairs.resize(5);
    for (auto& p : pairs) p.pred_report = p.gt_report;
    llm::HttpBackend backend(cfg.pipeline.backend);
    RunOptions opts;
    opts.bertscore = false;
    const auto result = run_batch(pairs, cfg.pipeline, &backend, PromptCatalog{}, opts);
    int high = 0;
    for (const auto& s : result.per_sample) high += s.aggregate >= 0.9 ? 1 : 0;
    o.expect(high >= 4, std::to_string(high) + "/5 identity samples scored >= 0.9");
    if (o.pass) o.detail = std::to_string(high) + "/5 identity samples scored >= 0.9";
  } catch (const std::exception& e) {
    o.fail(e.what());
  }
  return o;
}

template <typename Fn>
Outcome guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    Outcome o;
    o.fail(std::string("exception: ") + e.what());
    return o;
  }
}

}  // namespace

int main() {
  log::set_threshold(log::Level::error);
  struct Row {
    const char* id;
    const char* title;
    Outcome (*fn)();
  };
  const Row rows[] = {
      {"AC1", "metric oracle suite", ac1_oracles},
      {"AC2", "hand-value suite", ac2_hand_values},
      {"AC3", "aggregate property suite", ac3_aggregate_properties},
      {"AC4", "pipeline determinism", ac4_determinism},
      {"AC5", "contract enforcement", ac5_contracts},
      {"AC6", "trend machinery", ac6_trend},
  };
  int failures = 0;
  for (const auto& r : rows) {
    const auto o = guarded(r.fn);
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << r.id << " " << r.title << ": " << o.detail << "\n";
    failures += o.pass ? 0 : 1;
  }
  // The live check depends on an external service and never fails the build.
  if (auto live = ac7_live()) {
    std::cout << (live->pass ? "[PASS] " : "[FAIL] ") << "AC7 live smoke (environment-dependent, not gating): "
              << live->detail << "\n";
  } else {
    std::cout << "[SKIP] AC7 live smoke: set AGENTSEVAL_BACKEND_URL, AGENTSEVAL_MODEL and AGENTSEVAL_API_KEY\n";
  }
  std::cout << (failures == 0 ? "all required criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
