#include <gtest/gtest.h>

#include "agentseval/agents.hpp"

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

bool has(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), std::string(s)) != v.end();
}

const CriteriaSet kXY({"X", "Y"}, CriteriaOrigin::dynamic);

ValueDict dict(std::string x, std::string y, Side side) { return ValueDict(kXY, {{"X", x}, {"Y", y}}, side); }

struct Harness {
  llm::MockBackend mock;
  PromptCatalog prompts;
  Agents agents{mock, prompts};
  explicit Harness(const nlohmann::json& fixture) : mock(fixture) {}
};

}  // namespace

// ---- extract_json ---------------------------------------------------------

TEST(ExtractJson, Examples) {
  const auto fenced = extract_json("```json\n[\"a\"]\n```");
  EXPECT_EQ(fenced.value, Json::array({"a"}));
  EXPECT_TRUE(has(fenced.repairs, repair::kFenceStrip));

  const auto prose = extract_json("Here is the result: {\"k\": 1.0} Thanks");
  EXPECT_EQ(prose.value, Json({{"k", 1.0}}));
  EXPECT_TRUE(has(prose.repairs, repair::kPrefixDrop));
  EXPECT_TRUE(has(prose.repairs, repair::kSuffixDrop));

  expect_kind(ErrorKind::UnparseableOutput, [] { extract_json("no json here"); });
}

TEST(ExtractJson, CleanInputNeedsNoRepairs) {
  const auto r = extract_json("  {\"a\": [1, 2]}\n");
  EXPECT_EQ(r.value, Json({{"a", {1, 2}}}));
  EXPECT_TRUE(r.repairs.empty());
}

TEST(ExtractJson, TrailingCommasRepaired) {
  const auto r = extract_json("{\"a\": 1, \"b\": [1, 2,],}");
  EXPECT_EQ(r.value, Json({{"a", 1}, {"b", {1, 2}}}));
  EXPECT_TRUE(has(r.repairs, repair::kTrailingComma));
}

TEST(ExtractJson, BracketsInsideStringsDoNotConfuseTheScanner) {
  const auto r = extract_json("Result: {\"Nodes (Hilar)\": \"size ] or }\"} done");
  EXPECT_EQ(r.value["Nodes (Hilar)"], "size ] or }");
}

TEST(ExtractJson, SkipsUnbalancedPrefixCandidates) {
  const auto r = extract_json("See [1 for details. {\"k\": 0.5}");
  EXPECT_EQ(r.value, Json({{"k", 0.5}}));
}

TEST(ExtractJson, ScalarsAreNotAccepted) {
  expect_kind(ErrorKind::UnparseableOutput, [] { extract_json("42"); });
  expect_kind(ErrorKind::UnparseableOutput, [] { extract_json("{\"a\": }"); });
}

// ---- parsers --------------------------------------------------------------

TEST(BasePool, PassthroughTruncationAndEmpty) {
  const auto five = parse_base_pool("[\"A\",\"B\",\"C\",\"D\",\"E\"]", 5);
  EXPECT_EQ(five.value.names(), (std::vector<std::string>{"A", "B", "C", "D", "E"}));
  EXPECT_TRUE(five.warnings.empty());

  const auto seven = parse_base_pool("[\"A\",\"B\",\"C\",\"D\",\"E\",\"F\",\"G\"]", 5);
  EXPECT_EQ(seven.value.size(), 5u);
  EXPECT_EQ(seven.value.names().back(), "E");
  EXPECT_FALSE(seven.warnings.empty());
  EXPECT_EQ(seven.value.origin(), CriteriaOrigin::base_pool);

  expect_kind(ErrorKind::EmptyPool, [] { parse_base_pool("[]", 5); });
  expect_kind(ErrorKind::EmptyPool, [] { parse_base_pool("[\"\", 3]", 5); });
}

TEST(BasePool, DeduplicatesBeforeTruncating) {
  const auto r = parse_base_pool("[\"A\",\"a\",\"B\",\"C\"]", 3);
  EXPECT_EQ(r.value.names(), (std::vector<std::string>{"A", "B", "C"}));
}

TEST(Criteria, AdditionsDuplicatesAndTypeMismatch) {
  const auto r = parse_criteria("[\"Pleural Effusion\", \"Hiatal Hernia\"]");
  EXPECT_TRUE(r.value.contains("hiatal hernia"));
  EXPECT_EQ(r.value.origin(), CriteriaOrigin::dynamic);

  const auto d = parse_criteria("[\"B\", \"A\", \"b\", \"A\"]");
  EXPECT_EQ(d.value.names(), (std::vector<std::string>{"B", "A"}));

  expect_kind(ErrorKind::UnparseableOutput, [] { parse_criteria("{}"); });
  expect_kind(ErrorKind::EmptyCriteria, [] { parse_criteria("[]"); });
}

TEST(Values, FillDropAndPassthrough) {
  const auto exact = parse_values("{\"X\": \"small\", \"Y\": \"none\"}", kXY, Side::gt);
  EXPECT_EQ(exact.value, dict("small", "none", Side::gt));
  EXPECT_TRUE(exact.warnings.empty());

  const auto missing = parse_values("{\"X\": \"small\"}", kXY, Side::gt);
  EXPECT_EQ(*missing.value.find("Y"), "Not mentioned");

  const auto extra = parse_values("{\"X\": \"a\", \"Y\": \"b\", \"Aorta\": \"c\"}", kXY, Side::pred);
  EXPECT_EQ(extra.value.size(), 2u);
  EXPECT_EQ(extra.value.find("Aorta"), nullptr);
  EXPECT_FALSE(extra.warnings.empty());

  const auto fenced = parse_values("```\n{\"x\": \"a\", \"y\": \"b\"}\n```", kXY, Side::pred);
  EXPECT_EQ(fenced.value, dict("a", "b", Side::pred));

  expect_kind(ErrorKind::UnparseableOutput, [] { parse_values("[\"X\"]", kXY, Side::gt); });
}

TEST(Values, NonStringValuesNormalized) {
  const auto r = parse_values("{\"X\": null, \"Y\": [\"6 mm\", \"RUL\"]}", kXY, Side::gt);
  EXPECT_EQ(*r.value.find("X"), "Not mentioned");
  EXPECT_EQ(*r.value.find("Y"), "6 mm; RUL");
}

TEST(Snap, NearestGridValueTiesToHalf) {
  EXPECT_EQ(snap_to_grid(0.7), 0.5);
  EXPECT_EQ(snap_to_grid(0.8), 1.0);
  EXPECT_EQ(snap_to_grid(0.25), 0.5);
  EXPECT_EQ(snap_to_grid(0.75), 0.5);
  EXPECT_EQ(snap_to_grid(0.1), 0.0);
  EXPECT_EQ(snap_to_grid(-3.0), 0.0);
  EXPECT_EQ(snap_to_grid(7.0), 1.0);
}

TEST(Scores, Examples) {
  const auto gt = dict("small", "6 mm", Side::gt);
  const auto pred = dict("minimal", "6 mm", Side::pred);
  const auto given = parse_scores("{\"X\":1.0,\"Y\":0.5}", kXY, gt, pred);
  EXPECT_EQ(given.value.scores(), (std::vector<std::pair<std::string, double>>{{"X", 1.0}, {"Y", 0.5}}));
  EXPECT_TRUE(given.value.overrides().empty());

  const auto snapped = parse_scores("{\"X\":0.7,\"Y\":1}", kXY, gt, pred);
  EXPECT_EQ(snapped.value.scores()[0].second, 0.5);
  ASSERT_EQ(snapped.value.overrides().size(), 1u);
  EXPECT_EQ(snapped.value.overrides()[0].reason, override_reason::kSnapped);
  EXPECT_EQ(snapped.value.overrides()[0].original_value, 0.7);

  const auto nm = parse_scores("{\"X\":1.0,\"Y\":1.0}", kXY, dict("Not mentioned", "6 mm", Side::gt), pred);
  EXPECT_EQ(nm.value.scores()[0].second, 0.0);
  ASSERT_EQ(nm.value.overrides().size(), 1u);
  EXPECT_EQ(nm.value.overrides()[0].reason, override_reason::kNotMentioned);
}

TEST(Scores, SentinelOnEitherSideAlwaysZero) {
  const auto gt = dict("Not mentioned", "a", Side::gt);
  const auto pred = dict("Not mentioned", "not mentioned.", Side::pred);
  const auto r = parse_scores("{\"X\":1.0,\"Y\":0.5}", kXY, gt, pred);
  EXPECT_EQ(r.value.scores()[0].second, 0.0);
  EXPECT_EQ(r.value.scores()[1].second, 0.0);
  EXPECT_EQ(r.value.overrides().size(), 2u);
  // A model that already scored 0 needs no override.
  const auto zero = parse_scores("{\"X\":0,\"Y\":0}", kXY, gt, pred);
  EXPECT_TRUE(zero.value.overrides().empty());
}

TEST(Scores, MissingKeyScoresZeroAndStringsParse) {
  const auto gt = dict("a", "b", Side::gt);
  const auto pred = dict("a", "b", Side::pred);
  const auto r = parse_scores("{\"X\": \"1.0\"}", kXY, gt, pred);
  EXPECT_EQ(r.value.scores()[0].second, 1.0);
  EXPECT_EQ(r.value.scores()[1].second, 0.0);
  ASSERT_EQ(r.value.overrides().size(), 1u);
  EXPECT_EQ(r.value.overrides()[0].reason, override_reason::kMissing);
  expect_kind(ErrorKind::UnparseableOutput, [&] { parse_scores("{\"X\": \"good\", \"Y\": 1}", kXY, gt, pred); });
}

TEST(SingleScore, Examples) {
  EXPECT_DOUBLE_EQ(parse_single_score("0.85").value, 0.85);
  EXPECT_DOUBLE_EQ(parse_single_score("Score: 85/100").value, 0.85);
  EXPECT_DOUBLE_EQ(parse_single_score("{\"score\": 0.4}").value, 0.4);
  EXPECT_DOUBLE_EQ(parse_single_score("Final score: **0.9**").value, 0.9);
  EXPECT_DOUBLE_EQ(parse_single_score("72").value, 0.72);
  expect_kind(ErrorKind::UnparseableOutput, [] { parse_single_score("good"); });
  expect_kind(ErrorKind::OutOfRange, [] { parse_single_score("Score: 150"); });
  expect_kind(ErrorKind::OutOfRange, [] { parse_single_score("-0.2"); });
}

// ---- agents against the mock ----------------------------------------------

TEST(Agents, PipelineRolesRenderPromptsAndParse) {
  Harness h(nlohmann::json{{"base_pool/pool", "[\"X\", \"Y\", \"Z\"]"},
                           {"criteria/s1", "[\"X\", \"Y\"]"},
                           {"gt_analyzer/s1", "{\"X\": \"small\"}"},
                           {"pred_matcher/s1", "```json\n{\"X\": \"small\", \"Y\": \"6 mm\"}\n```"},
                           {"evaluator/s1", "{\"X\": 1.0, \"Y\": 1.0}"}});
  const auto pool = h.agents.base_pool_generator({"GT one.", "GT two."}, 3);
  EXPECT_EQ(pool.value.size(), 3u);
  ASSERT_EQ(pool.exchanges.size(), 1u);
  EXPECT_NE(pool.exchanges[0].system_prompt.find("3"), std::string::npos);
  EXPECT_NE(pool.exchanges[0].user_prompt.find("GT two."), std::string::npos);

  const auto crit = h.agents.criteria_identifier("GT one.", pool.value, "s1");
  EXPECT_NE(crit.exchanges[0].system_prompt.find("\"Z\""), std::string::npos);
  const auto gt = h.agents.gt_analyzer("GT one.", crit.value, "s1");
  EXPECT_EQ(*gt.value.find("Y"), "Not mentioned");
  EXPECT_FALSE(gt.warnings.empty());
  const auto pred = h.agents.prediction_matcher("Pred one.", crit.value, "s1");
  EXPECT_TRUE(has(pred.repairs, repair::kFenceStrip));
  EXPECT_NE(pred.exchanges[0].user_prompt.find("Pred one."), std::string::npos);

  const auto scores = h.agents.evaluation_agent(crit.value, gt.value, pred.value, "s1");
  EXPECT_EQ(scores.value.scores()[1].second, 0.0);  // GT side says "Not mentioned"
  EXPECT_NE(scores.exchanges[0].user_prompt.find("6 mm"), std::string::npos);
}

TEST(Agents, RepromptsOnceOnUnparseableOutput) {
  Harness h(nlohmann::json{{"criteria/s1", "I cannot answer that."}, {"criteria/s1#2", "[\"X\"]"}});
  const CriteriaSet base({"X"}, CriteriaOrigin::base_pool);
  const auto r = h.agents.criteria_identifier("GT", base, "s1");
  ASSERT_EQ(r.exchanges.size(), 2u);
  EXPECT_EQ(r.exchanges[0].user_prompt + std::string(kJsonReminder), r.exchanges[1].user_prompt);
  EXPECT_EQ(r.value.names(), (std::vector<std::string>{"X"}));
}

TEST(Agents, SecondParseFailureSurfaces) {
  Harness h(nlohmann::json{{"evaluator/s1", "scores: all good"}});
  const auto gt = dict("a", "b", Side::gt);
  const auto pred = dict("a", "b", Side::pred);
  expect_kind(ErrorKind::UnparseableOutput, [&] { h.agents.evaluation_agent(kXY, gt, pred, "s1"); });
}

TEST(Agents, NonParseErrorsAreNotRetried) {
  Harness h(nlohmann::json{{"base_pool/pool", "[]"}, {"base_pool/pool#2", "[\"A\"]"}});
  expect_kind(ErrorKind::EmptyPool, [&] { h.agents.base_pool_generator({"r"}, 5); });
}

TEST(Agents, EvaluatorRejectsMismatchedDictionaries) {
  Harness h(nlohmann::json{{"evaluator/*", "{}"}});
  const CriteriaSet xz({"X", "Z"}, CriteriaOrigin::dynamic);
  const ValueDict other(xz, {{"X", "a"}, {"Z", "b"}}, Side::pred);
  expect_kind(ErrorKind::KeySetMismatch, [&] { h.agents.evaluation_agent(kXY, dict("a", "b", Side::gt), other, "s1"); });
}

TEST(Agents, SingleAgentVariants) {
  Harness h(nlohmann::json{{"single_detailed/s1", "0.85"},
                           {"single_simple/s1", "Score: 85/100"},
                           {"single_simple/s2", "good"},
                           {"single_simple/s2#2", "still good"}});
  EXPECT_DOUBLE_EQ(h.agents.single_agent("g", "p", SingleVariant::detailed, "s1").value, 0.85);
  EXPECT_DOUBLE_EQ(h.agents.single_agent("g", "p", SingleVariant::simple, "s1").value, 0.85);
  expect_kind(ErrorKind::UnparseableOutput, [&] { h.agents.single_agent("g", "p", SingleVariant::simple, "s2"); });
}

TEST(Agents, ReplayReproducesValidatedStructure) {
  Harness h(nlohmann::json{{"gt_analyzer/s1", "Sure! {\"x\": \"small\", \"Y\": \"none\",}"},
                           {"evaluator/s1", "```json\n{\"X\": 0.9, \"Y\": 0.2}\n```"}});
  const auto gt = h.agents.gt_analyzer("GT", kXY, "s1");
  EXPECT_EQ(parse_values(gt.exchanges.back().response_text, kXY, Side::gt).value, gt.value);
  const auto pred = dict("small", "none", Side::pred);
  const auto sc = h.agents.evaluation_agent(kXY, gt.value, pred, "s1");
  EXPECT_EQ(parse_scores(sc.exchanges.back().response_text, kXY, gt.value, pred).value, sc.value);
}

TEST(Prompts, RenderRejectsUnknownPlaceholders) {
  EXPECT_EQ(render("K={{K}}", {{"K", "5"}}), "K=5");
  expect_kind(ErrorKind::Template, [] { render("{{nope}}", {{"K", "5"}}); });
}

TEST(Prompts, DefaultCatalogHasEveryRole) {
  const PromptCatalog c;
  for (auto role : kAllRoles) {
    EXPECT_FALSE(c.get(role).system_text.empty()) << to_string(role);
  }
  EXPECT_NE(c.get(AgentRole::base_pool).system_text.find("You are a medical report knowledge extractor"),
            std::string::npos);
}
