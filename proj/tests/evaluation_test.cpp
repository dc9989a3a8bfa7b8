#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "eipl/evaluation.hpp"
#include "support/metrics_oracle.hpp"

namespace eipl {
namespace {

constexpr double kTol = 1e-12;

ConfusionMatrix matrix(long long mm, long long mr, long long rm, long long rr) {
  ConfusionMatrix m;
  m.mm = mm;
  m.mr = mr;
  m.rm = rm;
  m.rr = rr;
  return m;
}

ClassificationResult result(const std::string& id, int post, std::optional<HumanLabel> label,
                            const std::string& question = "A-Q4") {
  ClassificationResult r;
  r.response_id = id;
  r.question_id = question;
  r.raw_count = post;
  r.post_count = post;
  r.human_label = label;
  return r;
}

void expect_matches_oracle(const ConfusionMatrix& m) {
  auto o = testing::naive_metrics(m.mm, m.mr, m.rm, m.rr);
  for (Level pos : {Level::Multistructural, Level::Relational}) {
    auto s = compute_metrics(m, pos);
    const int c = pos == Level::Multistructural ? 0 : 1;
    EXPECT_NEAR(s.p_o, o.p_o, kTol);
    EXPECT_NEAR(s.p_e, o.p_e, kTol);
    EXPECT_NEAR(s.kappa, o.kappa, kTol);
    EXPECT_NEAR(s.precision, o.precision[c], kTol);
    EXPECT_NEAR(s.recall, o.recall[c], kTol);
    EXPECT_NEAR(s.f1, o.f1[c], kTol);
    EXPECT_NEAR(s.macro_f1, o.macro_f1, kTol);
  }
}

TEST(Confusion, CountsAndFilter) {
  using HL = HumanLabel;
  using L = Level;
  std::vector<std::pair<HL, L>> pairs = {
      {HL::MultistructuralCorrect, L::Multistructural}, {HL::MultistructuralCorrect, L::Relational},
      {HL::RelationalCorrect, L::Relational},           {HL::RelationalCorrect, L::Relational},
      {HL::Incorrect, L::Multistructural},              {HL::Incorrect, L::Relational}};
  auto ex = build_confusion(pairs);
  EXPECT_EQ(ex, matrix(1, 1, 0, 2));
  auto all = build_confusion(pairs, FilterPolicy::IncludeAll);
  EXPECT_EQ(all.n(), 6);
  EXPECT_EQ(all.im, 1);
  EXPECT_EQ(all.ir, 1);
  EXPECT_EQ(compute_metrics(all).p_o, 3.0 / 6.0);
}

TEST(Confusion, EmptyAfterFilter) {
  try {
    build_confusion({{HumanLabel::Incorrect, Level::Relational}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyAfterFilter);
  }
  EXPECT_THROW(cohen_kappa(ConfusionMatrix{}), Error);
}

TEST(Kappa, WorkedExample) {
  auto k = cohen_kappa(matrix(20, 5, 10, 65));
  EXPECT_NEAR(k.p_o, 0.85, kTol);
  EXPECT_NEAR(k.p_e, 0.25 * 0.30 + 0.75 * 0.70, kTol);
  EXPECT_NEAR(k.kappa, (0.85 - 0.6) / 0.4, kTol);
  EXPECT_TRUE(k.warnings.empty());
}

TEST(Kappa, PerfectAndChance) {
  EXPECT_NEAR(cohen_kappa(matrix(10, 0, 0, 10)).kappa, 1.0, kTol);
  EXPECT_NEAR(cohen_kappa(matrix(5, 5, 5, 5)).kappa, 0.0, kTol);
  EXPECT_LT(cohen_kappa(matrix(0, 10, 10, 0)).kappa, 0.0);
}

TEST(Kappa, DegenerateMarginals) {
  auto all_agree = cohen_kappa(matrix(0, 0, 0, 7));
  EXPECT_EQ(all_agree.kappa, 1.0);
  EXPECT_EQ(all_agree.p_e, 1.0);
  ASSERT_EQ(all_agree.warnings.size(), 1u);
  EXPECT_EQ(cohen_kappa(matrix(4, 0, 0, 0)).kappa, 1.0);
}

TEST(Prf, WorkedExample) {
  auto p = prf(matrix(8, 2, 4, 6), Level::Multistructural);
  EXPECT_NEAR(p.precision, 8.0 / 12.0, kTol);
  EXPECT_NEAR(p.recall, 0.8, kTol);
  EXPECT_NEAR(p.f1, 2 * (2.0 / 3.0) * 0.8 / (2.0 / 3.0 + 0.8), kTol);
  auto r = prf(matrix(8, 2, 4, 6), Level::Relational);
  EXPECT_NEAR(r.precision, 0.75, kTol);
  EXPECT_NEAR(r.recall, 0.6, kTol);
}

TEST(Prf, ZeroDenominatorsWarn) {
  auto p = prf(matrix(0, 3, 0, 4), Level::Multistructural);
  EXPECT_EQ(p.precision, 0.0);
  EXPECT_EQ(p.recall, 0.0);
  EXPECT_EQ(p.f1, 0.0);
  EXPECT_EQ(p.warnings.size(), 1u);
  EXPECT_EQ(prf(matrix(0, 0, 0, 4), Level::Multistructural).warnings.size(), 2u);
}

TEST(Metrics, MatchOracleOnRandomMatrices) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> cell(0, 60);
  std::uniform_int_distribution<int> zero(0, 3);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    auto m = matrix(cell(rng), cell(rng), cell(rng), cell(rng));
    if (zero(rng) == 0) m.mr = m.rm = 0;  // sometimes push towards degenerate marginals
    if (zero(rng) == 0) m.mm = m.mr = 0;
    if (m.n() == 0) continue;
    expect_matches_oracle(m);
    ++checked;
  }
  EXPECT_GE(checked, 200);
  expect_matches_oracle(matrix(0, 0, 0, 9));
  expect_matches_oracle(matrix(9, 0, 0, 0));
  expect_matches_oracle(matrix(0, 9, 0, 0));
  expect_matches_oracle(matrix(0, 0, 9, 0));
}

TEST(Metrics, KappaSymmetricUnderTransposeAndClassSwap) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> cell(0, 30);
  for (int trial = 0; trial < 300; ++trial) {
    auto m = matrix(cell(rng), cell(rng), cell(rng), cell(rng));
    if (m.n() == 0) continue;
    auto k = cohen_kappa(m).kappa;
    EXPECT_NEAR(cohen_kappa(matrix(m.mm, m.rm, m.mr, m.rr)).kappa, k, kTol);
    EXPECT_NEAR(cohen_kappa(matrix(m.rr, m.rm, m.mr, m.mm)).kappa, k, kTol);
    auto s = compute_metrics(m);
    EXPECT_GE(s.kappa, -1.0 - kTol);
    EXPECT_LE(s.kappa, 1.0 + kTol);
    EXPECT_GE(s.p_o, 0.0);
    EXPECT_LE(s.p_o, 1.0);
    // Swapping the positive class swaps per-class precision/recall.
    auto swapped = compute_metrics(matrix(m.rr, m.rm, m.mr, m.mm), Level::Relational);
    EXPECT_NEAR(swapped.precision, s.precision, kTol);
    EXPECT_NEAR(swapped.recall, s.recall, kTol);
    EXPECT_NEAR(swapped.macro_f1, s.macro_f1, kTol);
  }
}

TEST(Sweep, RelationalLabelsAllCountThree) {
  std::vector<BatchRow> rows;
  for (int i = 0; i < 4; ++i) rows.push_back(result("r" + std::to_string(i), 3, HumanLabel::RelationalCorrect));
  auto report = sweep(rows, std::nullopt, {});
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[2].threshold, 3);
  EXPECT_EQ(report.rows[2].metrics.agreement(), 1.0);
  EXPECT_EQ(report.rows[1].metrics.agreement(), 0.0);
  EXPECT_EQ(report.rows[0].matrix, matrix(0, 0, 4, 0));
}

TEST(Sweep, MatrixCellsMonotoneInThreshold) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> count(0, 10);
  std::vector<BatchRow> rows;
  for (int i = 0; i < 100; ++i) {
    rows.push_back(result("r" + std::to_string(i), count(rng),
                          i % 2 ? HumanLabel::RelationalCorrect : HumanLabel::MultistructuralCorrect));
  }
  auto report = sweep(rows, std::nullopt, {});
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    EXPECT_LE(report.rows[i].matrix.mm, report.rows[i - 1].matrix.mm);
    EXPECT_LE(report.rows[i].matrix.rm, report.rows[i - 1].matrix.rm);
    EXPECT_EQ(report.rows[i].matrix.n(), 100);
  }
}

TEST(Sweep, MissingLabelNamesResponse) {
  std::vector<BatchRow> rows = {result("ok", 2, HumanLabel::RelationalCorrect), result("lost", 2, std::nullopt)};
  try {
    sweep(rows, std::nullopt, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingLabel);
    EXPECT_EQ(e.where(), "lost");
  }
  std::map<std::string, HumanLabel> labels = {{"ok", HumanLabel::RelationalCorrect},
                                              {"lost", HumanLabel::MultistructuralCorrect}};
  EXPECT_NO_THROW(sweep(rows, labels, {}));
}

TEST(Sweep, ErrorRowsSkippedWithWarning) {
  std::vector<BatchRow> rows = {result("a", 2, HumanLabel::MultistructuralCorrect),
                                ErrorRow{"b", "A-Q4", HumanLabel::RelationalCorrect, "Exhausted", "x"}};
  auto report = sweep(rows, std::nullopt, {});
  EXPECT_EQ(report.corpus.error_rows_skipped, 1u);
  EXPECT_EQ(report.corpus.used, 1u);
  EXPECT_EQ(report.warnings.size(), 1u);
}

TEST(Sweep, RawCountsIgnorePostProcessing) {
  auto r = result("a", 1, HumanLabel::MultistructuralCorrect);
  r.raw_count = 6;
  SweepOptions opts;
  opts.thresholds = {1};
  EXPECT_EQ(sweep({r}, std::nullopt, opts).rows[0].matrix.mr, 1);
  opts.counts = CountSource::Raw;
  EXPECT_EQ(sweep({r}, std::nullopt, opts).rows[0].matrix.mm, 1);
}

TEST(Sweep, GroupByQuestion) {
  std::vector<BatchRow> rows = {result("a", 5, HumanLabel::MultistructuralCorrect, "A-Q1"),
                                result("b", 1, HumanLabel::RelationalCorrect, "A-Q2"),
                                result("c", 1, HumanLabel::Incorrect, "A-Q3")};
  SweepOptions opts;
  opts.thresholds = {1, 2};
  opts.group_by_question = true;
  auto report = sweep(rows, std::nullopt, opts);
  ASSERT_EQ(report.rows.size(), 6u);  // all x2, A-Q1 x2, A-Q2 x2; A-Q3 has only incorrect labels
  EXPECT_EQ(report.rows[0].group, "all");
  EXPECT_EQ(report.rows[2].group, "A-Q1");
  EXPECT_EQ(report.rows[4].group, "A-Q2");
  EXPECT_EQ(report.warnings.size(), 1u);
  auto csv = report_to_csv(report);
  EXPECT_EQ(csv.rfind("group,threshold,", 0), 0u);
}

TEST(Thresholds, Validation) {
  EXPECT_THROW(check_thresholds({}), Error);
  EXPECT_THROW(check_thresholds({0, 1}), Error);
  EXPECT_THROW(check_thresholds({2, 2}), Error);
  EXPECT_THROW(check_thresholds({3, 1}), Error);
  EXPECT_NO_THROW(check_thresholds({1, 2, 5}));
}

TEST(Report, JsonAndCsvLayout) {
  std::vector<BatchRow> rows = {result("m", 5, HumanLabel::MultistructuralCorrect),
                                result("r", 1, HumanLabel::RelationalCorrect)};
  SweepOptions opts;
  opts.thresholds = {1};
  auto report = sweep(rows, std::nullopt, opts);
  EXPECT_EQ(report_to_json(report),
            "{\n"
            "  \"policy\": \"exclude_incorrect\",\n"
            "  \"positive_class\": \"multistructural\",\n"
            "  \"rows\": [\n"
            "    {\n"
            "      \"threshold\": 1,\n"
            "      \"matrix\": {\n"
            "        \"mm\": 1,\n"
            "        \"mr\": 0,\n"
            "        \"rm\": 0,\n"
            "        \"rr\": 1\n"
            "      },\n"
            "      \"agreement\": 1.0,\n"
            "      \"kappa\": 1.0,\n"
            "      \"p_o\": 1.0,\n"
            "      \"p_e\": 0.5,\n"
            "      \"precision\": 1.0,\n"
            "      \"recall\": 1.0,\n"
            "      \"f1\": 1.0,\n"
            "      \"macro_f1\": 1.0\n"
            "    }\n"
            "  ]\n"
            "}\n");
  EXPECT_EQ(report_to_csv(report),
            "threshold,mm,mr,rm,rr,agreement,kappa,p_o,p_e,precision,recall,f1,macro_f1\n"
            "1,1,0,0,1,1.0,1.0,1.0,0.5,1.0,1.0,1.0,1.0\n");
}

TEST(Report, IncludeAllAddsIncorrectRow) {
  std::vector<BatchRow> rows = {result("m", 5, HumanLabel::MultistructuralCorrect),
                                result("i", 5, HumanLabel::Incorrect)};
  SweepOptions opts;
  opts.thresholds = {1};
  opts.policy = FilterPolicy::IncludeAll;
  auto report = sweep(rows, std::nullopt, opts);
  auto doc = json::parse(report_to_json(report));
  EXPECT_EQ(doc["rows"][0]["matrix"]["im"], 1);
  EXPECT_EQ(report_to_csv(report).rfind("threshold,mm,mr,rm,rr,im,ir,", 0), 0u);
}

}  // namespace
}  // namespace eipl
