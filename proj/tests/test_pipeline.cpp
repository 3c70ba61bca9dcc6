#include <gtest/gtest.h>

#include <random>
#include <set>

#include "agentseval/pipeline.hpp"
#include "oracles.hpp"

using namespace agentseval;

namespace {

template <typename Fn>
void expect_kind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

ReportPair make_pair(std::string id, std::string gt, std::string pred) {
  ReportPair p;
  p.id = std::move(id);
  p.gt_report = std::move(gt);
  p.pred_report = std::move(pred);
  return p;
}

// Fixture for samples whose criteria are {X, Y} and whose evaluator returns
// the given scores.
nlohmann::json fixture_for(const std::vector<std::pair<std::string, std::string>>& eval_by_id) {
  nlohmann::json j;
  j["base_pool/pool"] = "[\"X\", \"Y\", \"Z\"]";
  for (const auto& [id, scores] : eval_by_id) {
    j["criteria/" + id] = "[\"X\", \"Y\"]";
    j["gt_analyzer/" + id] = "{\"X\": \"small\", \"Y\": \"6 mm\"}";
    j["pred_matcher/" + id] = "{\"X\": \"small\", \"Y\": \"7 mm\"}";
    j["evaluator/" + id] = scores;
  }
  return j;
}

std::vector<std::pair<std::string, double>> score_list(const std::vector<double>& s) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.emplace_back("c" + std::to_string(i), s[i]);
  return out;
}

CriteriaSet names_for(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("c" + std::to_string(i));
  return CriteriaSet(names, CriteriaOrigin::dynamic);
}

}  // namespace

// ---- manifest -------------------------------------------------------------

TEST(Manifest, ParsesOptionalFields) {
  const auto pairs = parse_manifest(
      "{\"id\": \"a\", \"gt_report\": \" G \", \"pred_report\": \"P\", \"section\": \"findings\", "
      "\"error_count\": 2, \"perturbation\": \"B1\"}\n\n{\"id\": 7, \"gt_report\": \"G\", \"pred_report\": \"P\"}\n");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].gt_report, "G");
  EXPECT_EQ(pairs[0].section, Section::findings);
  EXPECT_EQ(pairs[0].error_count, 2);
  EXPECT_EQ(pairs[0].perturbation, PerturbationLevel::B1);
  EXPECT_EQ(pairs[1].id, "7");
  EXPECT_EQ(parse_manifest(format_manifest(pairs)), pairs);
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  try {
    parse_manifest("{\"id\":\"a\",\"gt_report\":\"G\",\"pred_report\":\"P\"}\n{\"id\":\"b\",\"gt_report\":\"\",\"pred_report\":\"P\"}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyReport);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  expect_kind(ErrorKind::SchemaViolation, [] { parse_manifest("not json"); });
  expect_kind(ErrorKind::InvalidErrorCount,
              [] { parse_manifest("{\"id\":\"a\",\"gt_report\":\"G\",\"pred_report\":\"P\",\"error_count\":-1}"); });
  expect_kind(ErrorKind::InvalidErrorCount,
              [] { parse_manifest("{\"id\":\"a\",\"gt_report\":\"G\",\"pred_report\":\"P\",\"error_count\":1.5}"); });
  expect_kind(ErrorKind::SchemaViolation, [] {
    parse_manifest("{\"id\":\"a\",\"gt_report\":\"G\",\"pred_report\":\"P\"}\n{\"id\":\"a\",\"gt_report\":\"G\",\"pred_report\":\"P\"}");
  });
  expect_kind(ErrorKind::Io, [] { read_manifest("/nonexistent/manifest.jsonl"); });
}

// ---- aggregation ----------------------------------------------------------

TEST(Aggregate, Examples) {
  const auto c3 = names_for(3);
  EXPECT_EQ(aggregate_score(ScoreDetail(c3, score_list({1, 1, 1})), WeightMap{}), 1.0);
  const WeightMap w({{"c0", 2.0}, {"c1", 1.0}, {"c2", 1.0}});
  const ScoreDetail d(c3, score_list({1.0, 0.5, 0.0}));
  EXPECT_NEAR(aggregate_score(d, w), 0.625, 1e-12);
  EXPECT_NEAR(aggregate_score(d, w), oracle::weighted_mean({1.0, 0.5, 0.0}, {2, 1, 1}), 1e-15);
  expect_kind(ErrorKind::ZeroTotalWeight, [&] { aggregate_score(d, WeightMap({}, 0.0)); });
}

TEST(Aggregate, Properties) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> grid(0, 2);
  std::uniform_real_distribution<double> weight(0.0, 5.0);
  std::uniform_int_distribution<int> exponent(-20, 20);
  std::uniform_real_distribution<double> any_scale(1e-3, 1e3);
  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<double> s(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = grid(rng) * 0.5;
      w[i] = rng() % 5 == 0 ? 0.0 : weight(rng);
    }
    if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
    const auto names = names_for(n);
    const WeightMap wm(score_list(w), 1.0);
    const ScoreDetail d(names, score_list(s));
    const double a = aggregate_score(d, wm);
    ++checked;

    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_NEAR(a, oracle::weighted_mean(s, w), 1e-12);
    const bool all_ones = [&] {
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] > 0 && s[i] != 1.0) return false;
      }
      return true;
    }();
    EXPECT_EQ(a == 1.0, all_ones);

    EXPECT_EQ(aggregate_score(d, wm.scaled(std::ldexp(1.0, exponent(rng)))), a);
    const double c = any_scale(rng);
    EXPECT_NEAR(aggregate_score(d, wm.scaled(c)), a, 4 * std::numeric_limits<double>::epsilon());

    const std::size_t j = rng() % n;
    if (s[j] > 0.0) {
      auto lower = s;
      lower[j] -= 0.5;
      EXPECT_LE(aggregate_score(ScoreDetail(names, score_list(lower)), wm), a);
    }
  }
  EXPECT_EQ(checked, 1000);
}

// ---- base pool ------------------------------------------------------------

TEST(BasePool, SamplingIsSeededAndClamped) {
  EXPECT_EQ(sample_pool_indices(5, 50, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  const auto a = sample_pool_indices(100, 10, 42);
  EXPECT_EQ(a, sample_pool_indices(100, 10, 42));
  EXPECT_NE(a, sample_pool_indices(100, 10, 43));
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 10u);
}

TEST(BasePool, SamplingIsRoughlyUniform) {
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    for (auto i : sample_pool_indices(20, 5, seed)) ++hits[i];
  }
  for (int h : hits) {
    EXPECT_GT(h, 400);  // expectation 500
    EXPECT_LT(h, 600);
  }
}

TEST(BasePool, UsesSampledReportsAndK) {
  llm::MockBackend mock(nlohmann::json{{"base_pool/pool", "[\"A\", \"B\", \"C\"]"}});
  PromptCatalog prompts;
  Agents agents(mock, prompts);
  std::vector<ReportPair> data{make_pair("1", "first gt", "p"), make_pair("2", "second gt", "p")};
  PipelineConfig cfg;
  cfg.K = 2;
  const auto pool = build_base_pool(agents, data, cfg);
  EXPECT_EQ(pool.value.names(), (std::vector<std::string>{"A", "B"}));
  EXPECT_NE(pool.exchanges[0].user_prompt.find("second gt"), std::string::npos);
}

// ---- single sample --------------------------------------------------------

TEST(EvaluateSample, AssemblesTraceAndAggregate) {
  llm::MockBackend mock(fixture_for({{"s1", "{\"X\": 1.0, \"Y\": 0.5}"}}));
  PromptCatalog prompts;
  Agents agents(mock, prompts);
  const CriteriaSet base({"X", "Y", "Z"}, CriteriaOrigin::base_pool);
  PipelineConfig cfg;
  cfg.weights = WeightMap({{"Y", 3.0}});
  const auto out = evaluate_sample(agents, make_pair("s1", "g", "p"), base, cfg, mock.fingerprint());
  const auto& r = out.result;
  EXPECT_EQ(r.pair_id, "s1");
  EXPECT_EQ(r.base_criteria, base);
  EXPECT_EQ(r.dynamic_criteria.names(), (std::vector<std::string>{"X", "Y"}));
  EXPECT_EQ(r.aggregate, aggregate_score(r.score_details, cfg.weights));
  EXPECT_DOUBLE_EQ(r.aggregate, (1.0 + 3.0 * 0.5) / 4.0);
  ASSERT_EQ(r.timings_ms.size(), 4u);
  EXPECT_EQ(r.timings_ms[0].first, "criteria");
  EXPECT_EQ(r.timings_ms[3].first, "evaluator");
  ASSERT_EQ(out.exchanges.size(), 4u);
  EXPECT_EQ(out.exchanges[0].role, "criteria");
  EXPECT_EQ(out.exchanges[1].role, "gt_analyzer");
  EXPECT_EQ(out.exchanges[2].role, "pred_matcher");
  EXPECT_EQ(out.exchanges[3].role, "evaluator");
}

TEST(EvaluateSample, IdentityReportScoresOne) {
  nlohmann::json fx = fixture_for({{"s1", "{\"X\": 1.0, \"Y\": 1.0}"}});
  fx["pred_matcher/s1"] = fx["gt_analyzer/s1"];
  llm::MockBackend mock(fx);
  PromptCatalog prompts;
  Agents agents(mock, prompts);
  const auto out = evaluate_sample(agents, make_pair("s1", "same", "same"),
                                   CriteriaSet({"X"}, CriteriaOrigin::base_pool), PipelineConfig{}, "fp");
  EXPECT_EQ(out.result.aggregate, 1.0);
}

TEST(EvaluateSample, EvaluatorFailingTwiceIsStageTagged) {
  nlohmann::json fx = fixture_for({{"s1", "I think they match."}});
  llm::MockBackend mock(fx);
  PromptCatalog prompts;
  Agents agents(mock, prompts);
  try {
    evaluate_sample(agents, make_pair("s1", "g", "p"), CriteriaSet({"X"}, CriteriaOrigin::base_pool), PipelineConfig{},
                    "fp");
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnparseableOutput);
    EXPECT_EQ(e.stage(), "evaluator");
    EXPECT_EQ(e.sample_id(), "s1");
  }
}

// ---- batch ----------------------------------------------------------------

TEST(RunBatch, MeanOfTwoSamples) {
  llm::MockBackend mock(fixture_for({{"s1", "{\"X\": 1.0, \"Y\": 1.0}"}, {"s2", "{\"X\": 1.0, \"Y\": 0.0}"}}));
  PromptCatalog prompts;
  const std::vector<ReportPair> data{make_pair("s1", "a b", "a b"), make_pair("s2", "c d", "c e")};
  const auto r = run_batch(data, PipelineConfig{}, &mock, prompts);
  ASSERT_EQ(r.per_sample.size(), 2u);
  EXPECT_DOUBLE_EQ(r.mean_score, (1.0 + 0.5) / 2.0);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.metric_means.count("bleu"), 1u);
  EXPECT_EQ(r.metric_means.count("bertscore"), 0u);
  EXPECT_EQ(r.exchanges.size(), 1u + 2u * 4u);  // pool + four stages per sample
  EXPECT_EQ(r.exchanges.front().role, "base_pool");
}

TEST(RunBatch, FailedSampleExcludedFromMean) {
  auto fx = fixture_for({{"s1", "{\"X\": 1.0, \"Y\": 0.5}"}});
  llm::MockBackend mock(fx);  // s2 has no fixture entries
  PromptCatalog prompts;
  const std::vector<ReportPair> data{make_pair("s1", "a", "a"), make_pair("s2", "b", "b")};
  const auto r = run_batch(data, PipelineConfig{}, &mock, prompts);
  ASSERT_EQ(r.per_sample.size(), 1u);
  EXPECT_DOUBLE_EQ(r.mean_score, 0.75);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].pair_id, "s2");
  EXPECT_EQ(r.failures[0].stage, "criteria");
  EXPECT_EQ(r.failures[0].kind, ErrorKind::MissingFixture);
  EXPECT_FALSE(r.rows[1].agents_eval.has_value());
  EXPECT_EQ(r.rows.size(), 2u);
}

TEST(RunBatch, EmptyAndAllFailed) {
  llm::MockBackend mock(nlohmann::json{{"base_pool/pool", "[\"X\"]"}});
  PromptCatalog prompts;
  expect_kind(ErrorKind::EmptyInput, [&] { run_batch({}, PipelineConfig{}, &mock, prompts); });
  try {
    run_batch({make_pair("s1", "a", "a")}, PipelineConfig{}, &mock, prompts);
    FAIL();
  } catch (const BatchFailed& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllSamplesFailed);
    ASSERT_EQ(e.failures().size(), 1u);
    EXPECT_EQ(e.failures()[0].kind, ErrorKind::MissingFixture);
  }
}

TEST(RunBatch, MetricsOnlyNeverTouchesBackend) {
  PromptCatalog prompts;
  RunOptions opts;
  opts.agents = false;
  const auto r = run_batch({make_pair("s1", "a b c", "a b c")}, PipelineConfig{}, nullptr, prompts, opts);
  EXPECT_TRUE(r.exchanges.empty());
  EXPECT_FALSE(r.rows[0].agents_eval.has_value());
  EXPECT_DOUBLE_EQ(r.metric_means.at("bleu"), 1.0);
  expect_kind(ErrorKind::Config, [&] { run_batch({make_pair("s1", "a", "a")}, PipelineConfig{}, nullptr, prompts); });
}

TEST(RunBatch, SectionsGetTheirOwnBasePool) {
  auto fx = fixture_for({{"f1", "{\"X\": 1, \"Y\": 1}"}, {"i1", "{\"X\": 1, \"Y\": 0}"}});
  llm::MockBackend mock(fx);
  PromptCatalog prompts;
  auto f = make_pair("f1", "a", "a");
  f.section = Section::findings;
  auto i = make_pair("i1", "b", "b");
  i.section = Section::impression;
  const auto r = run_batch({f, i}, PipelineConfig{}, &mock, prompts);
  ASSERT_EQ(r.base_pools.size(), 2u);
  EXPECT_EQ(r.base_pools[0].first, "findings");
  EXPECT_EQ(r.base_pools[1].first, "impression");
}

TEST(RunBatch, ParallelRunMatchesSequential) {
  std::vector<std::pair<std::string, std::string>> evals;
  std::vector<ReportPair> data;
  for (int k = 0; k < 12; ++k) {
    const auto id = "s" + std::to_string(k);
    evals.emplace_back(id, k % 3 == 0 ? "{\"X\": 1, \"Y\": 0.5}" : "{\"X\": 0, \"Y\": 1}");
    data.push_back(make_pair(id, "gt " + id, "pred " + id));
  }
  llm::MockBackend mock(fixture_for(evals));
  PromptCatalog prompts;
  PipelineConfig seq, par;
  seq.max_parallel_samples = 1;
  par.max_parallel_samples = 6;
  const auto a = run_batch(data, seq, &mock, prompts);
  const auto b = run_batch(data, par, &mock, prompts);
  EXPECT_EQ(a.per_sample, b.per_sample);
  EXPECT_EQ(a.mean_score, b.mean_score);
}

TEST(RunBatch, BertscoreFromMockEmbeddings) {
  auto fx = fixture_for({{"s1", "{\"X\": 1, \"Y\": 1}"}});
  fx["__embeddings__"] = {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}};
  llm::MockBackend mock(fx);
  PromptCatalog prompts;
  const auto r = run_batch({make_pair("s1", "a b", "a")}, PipelineConfig{}, &mock, prompts);
  ASSERT_TRUE(r.rows[0].classic.bertscore.has_value());
  EXPECT_DOUBLE_EQ(*r.rows[0].classic.bertscore, 1.0);
}

// ---- trace ----------------------------------------------------------------

class TraceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    llm::MockBackend mock(fixture_for({{"s1", "{\"X\": 1.0, \"Y\": 0.7}"},
                                       {"s2", "{\"X\": 0.5, \"Y\": 0.0}"},
                                       {"s3", "{\"X\": 1.0, \"Y\": 1.0}"}}));
    PromptCatalog prompts;
    cfg.weights = WeightMap({{"X", 0.3}, {"Y", 0.7}});
    result = run_batch({make_pair("s1", "a", "a"), make_pair("s2", "b", "b"), make_pair("s3", "c", "c")}, cfg,
                       &mock, prompts);
    text = format_trace(config_to_json(cfg), result.per_sample);
  }
  PipelineConfig cfg;
  DatasetResult result;
  std::string text;
};

TEST_F(TraceTest, RoundTripIsExact) {
  const auto trace = parse_trace(text);
  EXPECT_EQ(trace.samples, result.per_sample);
  EXPECT_EQ(trace.config_snapshot, config_to_json(cfg));
  EXPECT_EQ(format_trace(trace.config_snapshot, trace.samples), text);
}

TEST_F(TraceTest, ReplayReproducesAggregates) {
  const auto trace = parse_trace(text);
  const auto weights = weights_from_json(trace.config_snapshot["weights"]);
  for (const auto& s : trace.samples) EXPECT_EQ(aggregate_score(s.score_details, weights), s.aggregate);
}

TEST_F(TraceTest, MissingScoreDetailsIsSchemaViolation) {
  auto lines = text::split_lines(text);
  auto j = Json::parse(lines[2]);
  j.erase("pred_score_details");
  lines[2] = j.dump();
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  try {
    parse_trace(broken);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST_F(TraceTest, InconsistentAggregateIsIntegrityError) {
  auto lines = text::split_lines(text);
  auto j = Json::parse(lines[1]);
  j["aggregate"] = j["aggregate"].get<double>() + 1e-12;
  lines[1] = j.dump();
  std::string broken;
  for (const auto& l : lines) broken += l + "\n";
  expect_kind(ErrorKind::Integrity, [&] { parse_trace(broken); });
}

TEST_F(TraceTest, HeaderRequired) {
  const auto lines = text::split_lines(text);
  expect_kind(ErrorKind::SchemaViolation, [&] { parse_trace(lines[1] + "\n"); });
  expect_kind(ErrorKind::SchemaViolation, [&] { parse_trace(""); });
  expect_kind(ErrorKind::Io, [] { read_trace("/nonexistent/trace.jsonl"); });
}

TEST_F(TraceTest, ConfigSnapshotNeverHoldsSecrets) {
  ::setenv("AGENTSEVAL_API_KEY", "sk-secret-value", 1);
  const auto dumped = config_to_json(cfg).dump();
  ::unsetenv("AGENTSEVAL_API_KEY");
  EXPECT_EQ(dumped.find("sk-secret-value"), std::string::npos);
  EXPECT_NE(dumped.find("AGENTSEVAL_API_KEY"), std::string::npos);
}
