#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eipl/pipeline.hpp"
#include "support/fixtures.hpp"
#include "support/generators.hpp"
#include "support/temp_dir.hpp"

namespace eipl {
namespace {

const Question& q() { return testing::sum_of_positives(); }

const MockBackend& mock() {
  static const auto b = [] {
    auto m = std::make_unique<MockBackend>();
    m->add_exemplars(q());
    return m;
  }();
  return *b;
}

SegmentMapping with_lines(std::vector<std::set<int>> groups) {
  SegmentMapping m;
  for (auto& lines : groups) {
    SegmentGroup g;
    g.resolved_lines = std::move(lines);
    m.groups.push_back(std::move(g));
  }
  m.raw_count = m.count();
  return m;
}

StudentResponse response(const std::string& id, const std::string& text) {
  return {q().id, id, text, std::nullopt};
}

TEST(SignatureRule, DropsSignatureOnlyGroup) {
  auto m = with_lines({{1}, {2}, {3}, {4}, {5}, {8}});
  auto out = remove_signature_only_groups(m, q());
  EXPECT_EQ(out.count(), 5);
  EXPECT_EQ(out.groups.front().resolved_lines, std::set<int>{2});
}

TEST(SignatureRule, KeepsWholeFunctionGroup) {
  auto m = with_lines({{1, 2, 3, 4, 5, 6, 7, 8, 9}});
  EXPECT_EQ(remove_signature_only_groups(m, q()).count(), 1);
}

TEST(SignatureRule, SignaturePlusClosingBraceStillSignatureOnly) {
  // Line 9 is "}" and carries no substance.
  EXPECT_EQ(remove_signature_only_groups(with_lines({{1, 9}}), q()).count(), 0);
}

TEST(SignatureRule, UnresolvedGroupsStay) {
  EXPECT_EQ(remove_signature_only_groups(with_lines({{}, {}}), q()).count(), 2);
  EXPECT_EQ(remove_signature_only_groups(with_lines({}), q()).count(), 0);
}

TEST(DropLinesRule, UsesQuestionList) {
  Question qq = q();
  qq.drop_lines = {8};
  auto m = with_lines({{2}, {8}, {5, 8}});
  EXPECT_EQ(apply_rules(m, {question_drop_lines_rule()}, qq).count(), 2);
  EXPECT_EQ(apply_rules(m, {question_drop_lines_rule()}, q()).count(), 3);
  EXPECT_EQ(apply_rules(m, {drop_lines_rule({2, 5, 8})}, q()).count(), 0);
}

TEST(Rules, ByName) {
  EXPECT_EQ(rules_from_names({"signature", "drop_lines"}).size(), 2u);
  EXPECT_TRUE(rules_from_names({}).empty());
  EXPECT_THROW(rules_from_names({"nope"}), Error);
}

TEST(Classify, StrictlyAboveThreshold) {
  EXPECT_EQ(classify(5, 1), Level::Multistructural);
  EXPECT_EQ(classify(1, 1), Level::Relational);
  EXPECT_EQ(classify(0, 1), Level::Relational);
  EXPECT_EQ(classify(2, 2), Level::Relational);
  EXPECT_EQ(classify(3, 2), Level::Multistructural);
  try {
    classify(3, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadThreshold);
  }
}

TEST(Classify, MonotoneInThreshold) {
  for (int c = 0; c <= 10; ++c) {
    for (int t = 1; t < 4; ++t) {
      if (classify(c, t + 1) == Level::Multistructural) EXPECT_EQ(classify(c, t), Level::Multistructural);
    }
  }
}

TEST(Properties, RandomMappings) {
  std::mt19937 rng(7);
  const auto rules = default_rules();
  for (int trial = 0; trial < 1500; ++trial) {
    auto m = testing::random_mapping(rng, q());
    auto once = apply_rules(m, rules, q());
    ASSERT_LE(once.count(), m.raw_count);
    auto twice = apply_rules(once, rules, q());
    ASSERT_EQ(twice.texts(), once.texts());
    ASSERT_EQ(twice.count(), once.count());

    // Groups touching the signature and some substantive body line survive.
    std::size_t kept = 0;
    for (const auto& g : m.groups) {
      bool sig = g.resolved_lines.count(1) > 0;
      bool body = false;
      for (int l : g.resolved_lines) body = body || (l != 1 && is_substantive(q().snippet.line(l)));
      if (sig && body) {
        bool found = false;
        for (; kept < once.groups.size(); ++kept) {
          if (once.groups[kept].explanation_portion == g.explanation_portion) {
            found = true;
            break;
          }
        }
        ASSERT_TRUE(found) << "trial " << trial;
      }
    }
  }
}

TEST(Grade, ExemplarsThroughMock) {
  auto multi = grade_response(q(), response("m", testing::kLineByLineText), mock(), {});
  EXPECT_EQ(multi.raw_count, 6);
  EXPECT_EQ(multi.post_count, 5);
  EXPECT_EQ(multi.level, Level::Multistructural);
  EXPECT_TRUE(multi.warnings.empty());

  auto rel = grade_response(q(), response("r", testing::kSummaryText), mock(), {});
  EXPECT_EQ(rel.raw_count, 1);
  EXPECT_EQ(rel.post_count, 1);
  EXPECT_EQ(rel.level, Level::Relational);
}

TEST(Grade, RulesOff) {
  GradeOptions opts;
  opts.rules.clear();
  auto r = grade_response(q(), response("m", testing::kLineByLineText), mock(), opts);
  EXPECT_EQ(r.post_count, 6);
  EXPECT_EQ(r.raw_count, 6);
}

TEST(Grade, ThresholdTwo) {
  GradeOptions opts;
  opts.threshold = 2;
  EXPECT_EQ(grade_response(q(), response("m", testing::kLineByLineText), mock(), opts).level,
            Level::Multistructural);
  EXPECT_EQ(grade_response(q(), response("r", testing::kSummaryText), mock(), opts).level, Level::Relational);
}

TEST(Grade, SignatureOnlyWarnsAndIsRelational) {
  MockBackend b;
  b.add(q().id, "takes an array and a size",
        R"({"groups":[{"code":"int sumOfPositives(int arr[], int size) {","explanation_portion":"takes an array and a size"}]})");
  auto r = grade_response(q(), response("s", "takes an array and a size"), b, {});
  EXPECT_EQ(r.raw_count, 1);
  EXPECT_EQ(r.post_count, 0);
  EXPECT_EQ(r.level, Level::Relational);
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Grade, ErrorsNameTheResponse) {
  MockBackend b;
  b.add(q().id, "bad", R"({"groups":[{"code":"x"}]})");
  try {
    grade_response(q(), response("resp-9", "bad"), b, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaViolation);
    EXPECT_EQ(e.where(), "resp-9");
    EXPECT_NE(e.detail().find("$.groups[0]"), std::string::npos);
  }
}

TEST(Grade, BadThresholdBeforeBackend) {
  GradeOptions opts;
  opts.threshold = 0;
  MockBackend empty;
  try {
    grade_response(q(), response("x", "anything"), empty, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadThreshold);
  }
}

TEST(ResultRow, JsonShape) {
  auto r = grade_response(q(), response("r", testing::kSummaryText), mock(), {});
  r.human_label = HumanLabel::RelationalCorrect;
  auto j = to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"response_id", "question_id", "human_label", "raw_count", "post_count",
                                            "threshold", "level", "warnings", "post_mapping"}));
  EXPECT_EQ(j["level"], "relational");
  EXPECT_EQ(j["human_label"], "relational_correct");
}

TEST(ResultRow, JsonlRoundTrip) {
  auto r = grade_response(q(), response("m", testing::kLineByLineText), mock(), {});
  r.human_label = HumanLabel::MultistructuralCorrect;
  std::vector<BatchRow> rows = {r, ErrorRow{"e1", "A-Q4", std::nullopt, "Exhausted", "gave up"}};
  std::ostringstream out;
  write_results_jsonl(out, rows);
  testing::TempDir dir;
  auto back = read_results_jsonl(dir.write("r.jsonl", out.str()));
  ASSERT_EQ(back.size(), 2u);
  const auto& r2 = std::get<ClassificationResult>(back[0]);
  EXPECT_EQ(r2.post_count, 5);
  EXPECT_EQ(r2.raw_count, 6);
  EXPECT_EQ(r2.human_label, HumanLabel::MultistructuralCorrect);
  EXPECT_EQ(r2.post_mapping.count(), 5);
  EXPECT_EQ(std::get<ErrorRow>(back[1]).kind, "Exhausted");
  std::ostringstream again;
  write_results_jsonl(again, back);
  // post_mapping comes back unresolved, so only the count fields are compared.
  EXPECT_EQ(json::parse(again.str().substr(0, again.str().find('\n')))["post_count"], 5);
}

TEST(Batch, OrderAndErrorIsolation) {
  QuestionBank bank{{q().id, q()}};
  std::vector<StudentResponse> rs;
  for (int i = 0; i < 30; ++i) {
    rs.push_back(response("r" + std::to_string(i), i % 3 == 0 ? testing::kLineByLineText
                                                    : i % 3 == 1 ? testing::kSummaryText
                                                                 : "unknown to the mock"));
  }
  BatchOptions opts;
  opts.concurrency = 4;
  auto rows = run_batch(bank, rs, mock(), opts);
  ASSERT_EQ(rows.size(), rs.size());
  for (int i = 0; i < 30; ++i) {
    const std::string id = "r" + std::to_string(i);
    if (i % 3 == 2) {
      const auto& e = std::get<ErrorRow>(rows[i]);
      EXPECT_EQ(e.response_id, id);
      EXPECT_EQ(e.kind, "MockMiss");
    } else {
      const auto& r = std::get<ClassificationResult>(rows[i]);
      EXPECT_EQ(r.response_id, id);
      EXPECT_EQ(r.post_count, i % 3 == 0 ? 5 : 1);
    }
  }
}

TEST(Batch, UnknownQuestionRejectedUpFront) {
  QuestionBank bank{{q().id, q()}};
  std::vector<StudentResponse> rs = {response("a", "x"), {"Z-Q9", "b", "x", std::nullopt}};
  try {
    run_batch(bank, rs, mock(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownQuestion);
    EXPECT_EQ(e.where(), "b");
  }
}

TEST(Batch, Empty) {
  QuestionBank bank{{q().id, q()}};
  EXPECT_TRUE(run_batch(bank, {}, mock(), {}).empty());
}

}  // namespace
}  // namespace eipl
