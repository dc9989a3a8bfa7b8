#pragma once

// Agreement statistics between predicted levels and human labels.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/pipeline.hpp"

namespace eipl {

enum class FilterPolicy { ExcludeIncorrect, IncludeAll };

inline std::string_view to_string(FilterPolicy p) {
  return p == FilterPolicy::ExcludeIncorrect ? "exclude_incorrect" : "include_all";
}

inline std::optional<FilterPolicy> parse_filter_policy(std::string_view s) {
  if (s == "exclude_incorrect") return FilterPolicy::ExcludeIncorrect;
  if (s == "include_all") return FilterPolicy::IncludeAll;
  return std::nullopt;
}

/// Rows are gold labels, columns predictions. The incorrect row only fills
/// under IncludeAll; no prediction ever matches it.
struct ConfusionMatrix {
  long long mm = 0, mr = 0;
  long long rm = 0, rr = 0;
  long long im = 0, ir = 0;

  long long n() const { return mm + mr + rm + rr + im + ir; }
  long long gold(Level l) const { return l == Level::Multistructural ? mm + mr : rm + rr; }
  long long predicted(Level l) const { return l == Level::Multistructural ? mm + rm + im : mr + rr + ir; }
  long long agree() const { return mm + rr; }

  long long& cell(Level gold_level, Level pred) {
    if (gold_level == Level::Multistructural) return pred == Level::Multistructural ? mm : mr;
    return pred == Level::Multistructural ? rm : rr;
  }
  long long cell(Level gold_level, Level pred) const {
    return const_cast<ConfusionMatrix&>(*this).cell(gold_level, pred);
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix build_confusion(const std::vector<std::pair<HumanLabel, Level>>& pairs,
                                       FilterPolicy policy = FilterPolicy::ExcludeIncorrect) {
  ConfusionMatrix m;
  for (const auto& [label, pred] : pairs) {
    switch (label) {
      case HumanLabel::MultistructuralCorrect: ++m.cell(Level::Multistructural, pred); break;
      case HumanLabel::RelationalCorrect: ++m.cell(Level::Relational, pred); break;
      case HumanLabel::Incorrect:
        if (policy == FilterPolicy::IncludeAll) ++(pred == Level::Multistructural ? m.im : m.ir);
        break;
    }
  }
  if (m.n() == 0) throw Error(ErrorKind::EmptyAfterFilter, "", "no labelled pairs left after filtering");
  return m;
}

struct KappaResult {
  double kappa = 0;
  double p_o = 0;
  double p_e = 0;
  std::vector<std::string> warnings;
};

inline KappaResult cohen_kappa(const ConfusionMatrix& m) {
  const auto n = static_cast<double>(m.n());
  if (m.n() == 0) throw Error(ErrorKind::EmptyMatrix, "", "matrix has no observations");
  KappaResult out;
  out.p_o = static_cast<double>(m.agree()) / n;
  for (Level l : {Level::Multistructural, Level::Relational}) {
    out.p_e += (static_cast<double>(m.gold(l)) / n) * (static_cast<double>(m.predicted(l)) / n);
  }
  if (out.p_e >= 1.0) {
    out.kappa = out.p_o >= 1.0 ? 1.0 : 0.0;
    out.warnings.push_back("DegenerateMarginals: expected agreement is 1");
  } else {
    out.kappa = (out.p_o - out.p_e) / (1.0 - out.p_e);
  }
  return out;
}

struct PrfResult {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::vector<std::string> warnings;
};

inline double f1_score(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

inline PrfResult prf(const ConfusionMatrix& m, Level positive) {
  if (m.n() == 0) throw Error(ErrorKind::EmptyMatrix, "", "matrix has no observations");
  PrfResult out;
  const auto tp = static_cast<double>(m.cell(positive, positive));
  const auto predicted = static_cast<double>(m.predicted(positive));
  const auto actual = static_cast<double>(m.gold(positive));
  const std::string name(to_string(positive));
  if (predicted == 0) {
    out.warnings.push_back("no " + name + " predictions; precision set to 0");
  } else {
    out.precision = tp / predicted;
  }
  if (actual == 0) {
    out.warnings.push_back("no gold " + name + " responses; recall set to 0");
  } else {
    out.recall = tp / actual;
  }
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

struct MetricSet {
  Level positive_class = Level::Multistructural;
  double p_o = 0, p_e = 0, kappa = 0;
  double precision = 0, recall = 0, f1 = 0;
  /// Indexed [0] multistructural, [1] relational.
  std::array<PrfResult, 2> per_class;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  std::vector<std::string> warnings;

  double agreement() const { return p_o; }
};

inline MetricSet compute_metrics(const ConfusionMatrix& m, Level positive = Level::Multistructural) {
  MetricSet s;
  s.positive_class = positive;
  auto k = cohen_kappa(m);
  s.p_o = k.p_o;
  s.p_e = k.p_e;
  s.kappa = k.kappa;
  s.warnings = k.warnings;
  s.per_class[0] = prf(m, Level::Multistructural);
  s.per_class[1] = prf(m, Level::Relational);
  const auto& head = s.per_class[positive == Level::Multistructural ? 0 : 1];
  s.precision = head.precision;
  s.recall = head.recall;
  s.f1 = head.f1;
  s.warnings.insert(s.warnings.end(), head.warnings.begin(), head.warnings.end());
  s.macro_precision = (s.per_class[0].precision + s.per_class[1].precision) / 2.0;
  s.macro_recall = (s.per_class[0].recall + s.per_class[1].recall) / 2.0;
  s.macro_f1 = (s.per_class[0].f1 + s.per_class[1].f1) / 2.0;
  return s;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class CountSource { Post, Raw };

struct ReportRow {
  std::optional<std::string> group;
  int threshold = 1;
  ConfusionMatrix matrix;
  MetricSet metrics;
};

struct CorpusDescriptor {
  std::size_t results = 0;
  std::size_t error_rows_skipped = 0;
  std::size_t used = 0;  // after the label filter
  CountSource counts = CountSource::Post;
};

struct EvalReport {
  FilterPolicy policy = FilterPolicy::ExcludeIncorrect;
  Level positive_class = Level::Multistructural;
  std::vector<ReportRow> rows;
  CorpusDescriptor corpus;
  std::vector<std::string> warnings;
};

struct SweepOptions {
  std::vector<int> thresholds = {1, 2, 3, 4};
  CountSource counts = CountSource::Post;
  FilterPolicy policy = FilterPolicy::ExcludeIncorrect;
  Level positive_class = Level::Multistructural;
  bool group_by_question = false;
};

/// One labelled count per graded response.
struct LabelledCount {
  std::string response_id;
  std::string group;
  int count = 0;
  HumanLabel label = HumanLabel::Incorrect;
};

inline void check_thresholds(const std::vector<int>& thresholds) {
  if (thresholds.empty()) throw Error(ErrorKind::BadThreshold, "thresholds", "at least one threshold is required");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    classify(0, thresholds[i]);
    if (i && thresholds[i] <= thresholds[i - 1]) {
      throw Error(ErrorKind::BadThreshold, "thresholds", "must be strictly increasing");
    }
  }
}

/// Reclassifies stored counts at each threshold; the backend is never called.
/// Labels come from `labels` when given, else from each row's embedded label.
inline EvalReport sweep(const std::vector<BatchRow>& results,
                        const std::optional<std::map<std::string, HumanLabel>>& labels,
                        const SweepOptions& options = {}) {
  check_thresholds(options.thresholds);
  EvalReport report;
  report.policy = options.policy;
  report.positive_class = options.positive_class;
  report.corpus.results = results.size();
  report.corpus.counts = options.counts;

  std::vector<LabelledCount> items;
  for (const auto& row : results) {
    const auto* r = std::get_if<ClassificationResult>(&row);
    if (!r) {
      ++report.corpus.error_rows_skipped;
      continue;
    }
    std::optional<HumanLabel> label;
    if (labels) {
      auto it = labels->find(r->response_id);
      if (it != labels->end()) label = it->second;
    } else {
      label = r->human_label;
    }
    if (!label) throw Error(ErrorKind::MissingLabel, r->response_id, "no human label for this response");
    items.push_back({r->response_id, r->question_id,
                     options.counts == CountSource::Post ? r->post_count : r->raw_count, *label});
  }
  if (report.corpus.error_rows_skipped) {
    report.warnings.push_back(std::to_string(report.corpus.error_rows_skipped) + " error rows skipped");
  }

  auto rows_for = [&](const std::vector<LabelledCount>& subset, std::optional<std::string> group) {
    std::vector<ReportRow> rows;
    for (int t : options.thresholds) {
      std::vector<std::pair<HumanLabel, Level>> pairs;
      pairs.reserve(subset.size());
      for (const auto& it : subset) pairs.emplace_back(it.label, classify(it.count, t));
      ReportRow row;
      row.group = group;
      row.threshold = t;
      row.matrix = build_confusion(pairs, options.policy);
      row.metrics = compute_metrics(row.matrix, options.positive_class);
      rows.push_back(std::move(row));
    }
    return rows;
  };

  report.rows = rows_for(items, options.group_by_question ? std::optional<std::string>("all") : std::nullopt);
  report.corpus.used = static_cast<std::size_t>(report.rows.front().matrix.n());

  if (options.group_by_question) {
    std::map<std::string, std::vector<LabelledCount>> by_group;
    for (const auto& it : items) by_group[it.group].push_back(it);
    for (const auto& [group, subset] : by_group) {
      try {
        auto rows = rows_for(subset, group);
        report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyAfterFilter) throw;
        report.warnings.push_back("group " + group + " has no usable labels");
      }
    }
  }
  return report;
}

inline std::map<std::string, HumanLabel> labels_from_responses(const std::vector<StudentResponse>& responses) {
  std::map<std::string, HumanLabel> out;
  for (const auto& r : responses) {
    if (r.human_label) out[r.response_id] = *r.human_label;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report files

inline ordered_json to_json(const ReportRow& row, FilterPolicy policy) {
  ordered_json j;
  if (row.group) j["group"] = *row.group;
  j["threshold"] = row.threshold;
  j["matrix"]["mm"] = row.matrix.mm;
  j["matrix"]["mr"] = row.matrix.mr;
  j["matrix"]["rm"] = row.matrix.rm;
  j["matrix"]["rr"] = row.matrix.rr;
  if (policy == FilterPolicy::IncludeAll) {
    j["matrix"]["im"] = row.matrix.im;
    j["matrix"]["ir"] = row.matrix.ir;
  }
  j["agreement"] = row.metrics.agreement();
  j["kappa"] = row.metrics.kappa;
  j["p_o"] = row.metrics.p_o;
  j["p_e"] = row.metrics.p_e;
  j["precision"] = row.metrics.precision;
  j["recall"] = row.metrics.recall;
  j["f1"] = row.metrics.f1;
  j["macro_f1"] = row.metrics.macro_f1;
  return j;
}

inline std::string report_to_json(const EvalReport& report) {
  ordered_json doc;
  doc["policy"] = std::string(to_string(report.policy));
  doc["positive_class"] = std::string(to_string(report.positive_class));
  doc["rows"] = ordered_json::array();
  for (const auto& r : report.rows) doc["rows"].push_back(to_json(r, report.policy));
  return doc.dump(2) + "\n";
}

/// Same columns as the JSON rows, matrix cells flattened.
inline std::string report_to_csv(const EvalReport& report) {
  const bool grouped = !report.rows.empty() && report.rows.front().group.has_value();
  const bool include_all = report.policy == FilterPolicy::IncludeAll;
  std::ostringstream out;
  if (grouped) out << "group,";
  out << "threshold,mm,mr,rm,rr,";
  if (include_all) out << "im,ir,";
  out << "agreement,kappa,p_o,p_e,precision,recall,f1,macro_f1\n";
  auto num = [](double v) { return json(v).dump(); };
  for (const auto& r : report.rows) {
    if (grouped) out << r.group.value_or("") << ',';
    out << r.threshold << ',' << r.matrix.mm << ',' << r.matrix.mr << ',' << r.matrix.rm << ','
        << r.matrix.rr << ',';
    if (include_all) out << r.matrix.im << ',' << r.matrix.ir << ',';
    out << num(r.metrics.agreement()) << ',' << num(r.metrics.kappa) << ',' << num(r.metrics.p_o) << ','
        << num(r.metrics.p_e) << ',' << num(r.metrics.precision) << ',' << num(r.metrics.recall) << ','
        << num(r.metrics.f1) << ',' << num(r.metrics.macro_f1) << '\n';
  }
  return out.str();
}

}  // namespace eipl
