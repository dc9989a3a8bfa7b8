#pragma once

// Operator entry point. Exit codes: 0 ok, 2 configuration/input, 3 backend,
// 4 unparseable backend output.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "eipl/backend.hpp"
#include "eipl/backend_factory.hpp"
#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/evaluation.hpp"
#include "eipl/pipeline.hpp"
#include "eipl/service.hpp"

namespace eipl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitParse = 4;

inline int exit_code_for(ErrorKind kind) {
  if (is_backend_error(kind)) return kExitBackend;
  if (kind == ErrorKind::MalformedJson || kind == ErrorKind::SchemaViolation) return kExitParse;
  return kExitConfig;
}

/// "1,2,5" or "1..4" or a mix ("1..3,6").
inline std::vector<int> parse_thresholds(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string part;
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::BadThreshold, "--thresholds", "cannot read '" + s + "'");
    }
  };
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(to_int(part));
    } else {
      int lo = to_int(part.substr(0, dots));
      int hi = to_int(part.substr(dots + 2));
      for (int t = lo; t <= hi; ++t) out.push_back(t);
    }
  }
  check_thresholds(out);
  return out;
}

struct BackendFlags {
  std::string backend = "remote";
  std::string model = "gpt-4o";
  std::string base_url;
  double temperature = 0.0;
  int max_retries = 3;
  double timeout_s = 60.0;
  std::string fixtures;
  int threshold = 1;
  bool no_postprocess = false;
  std::vector<std::string> rules = {"signature"};
  bool infer_signature = false;

  void attach(CLI::App* app) {
    app->add_option("--backend", backend, "remote | mock | rule")->capture_default_str();
    app->add_option("--model", model, "model name for the remote backend")->capture_default_str();
    app->add_option("--base-url", base_url, "overrides EIPL_BASE_URL");
    app->add_option("--temperature", temperature)->capture_default_str();
    app->add_option("--max-retries", max_retries)->capture_default_str();
    app->add_option("--timeout", timeout_s, "seconds per backend call")->capture_default_str();
    app->add_option("--fixtures", fixtures, "extra JSONL fixtures for the mock backend");
    app->add_option("--threshold", threshold, "segments above this count are multistructural")->capture_default_str();
    app->add_flag("--no-postprocess", no_postprocess, "disable every post-processing rule");
    app->add_option("--rules", rules, "post-processing rules: signature, drop_lines")->delimiter(',')->capture_default_str();
    app->add_flag("--infer-signature", infer_signature, "detect the signature line when a question omits it");
  }

  BackendConfig config(int concurrency) const {
    auto kind = parse_backend_kind(backend);
    if (!kind) throw Error(ErrorKind::Config, "--backend", "unknown backend '" + backend + "'");
    BackendConfig c;
    c.kind = *kind;
    c.base_url = base_url;
    c.model_name = model;
    c.temperature = temperature;
    c.max_retries = max_retries;
    c.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));
    c.concurrency_limit = concurrency;
    c = with_environment(std::move(c));
    c.validate();
    return c;
  }

  GradeOptions grade() const {
    GradeOptions g;
    classify(0, threshold);
    g.threshold = threshold;
    g.rules = no_postprocess ? std::vector<PostRule>{} : rules_from_names(rules);
    return g;
  }

  std::unique_ptr<Backend> make(const QuestionBank& bank, int concurrency) const {
    std::optional<std::filesystem::path> fx;
    if (!fixtures.empty()) fx = fixtures;
    return make_backend(config(concurrency), bank, fx);
  }
};

struct EvalFlags {
  std::string results;
  std::string labels;
  std::string thresholds;
  std::string positive = "multistructural";
  std::string policy = "exclude_incorrect";
  std::string counts = "post";
  bool group_by_question = false;
  std::string out;
  std::string csv;

  void attach(CLI::App* app, const std::string& default_thresholds) {
    thresholds = default_thresholds;
    app->add_option("--results", results, "results JSONL from `batch`")->required();
    app->add_option("--labels", labels, "responses file carrying human_label (default: labels embedded in results)");
    app->add_option("--thresholds", thresholds, "e.g. 1..4 or 1,2")->capture_default_str();
    app->add_option("--positive-class", positive, "multistructural | relational")->capture_default_str();
    app->add_option("--policy", policy, "exclude_incorrect | include_all")->capture_default_str();
    app->add_option("--counts", counts, "post | raw (raw = rules off)")->capture_default_str();
    app->add_flag("--group-by-question", group_by_question, "add per-question rows next to the pooled rows");
    app->add_option("--out", out, "report JSON path (default: stdout)");
    app->add_option("--csv", csv, "report CSV path");
  }
};

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, path, "cannot write file");
  f << content;
}

inline std::atomic<bool> g_stop_requested{false};

inline void on_signal(int) { g_stop_requested = true; }

}  // namespace detail

inline int run_evaluate(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  SweepOptions opts;
  opts.thresholds = parse_thresholds(f.thresholds);
  auto pos = parse_level(f.positive);
  if (!pos) throw Error(ErrorKind::Config, "--positive-class", "unknown class '" + f.positive + "'");
  opts.positive_class = *pos;
  auto pol = parse_filter_policy(f.policy);
  if (!pol) throw Error(ErrorKind::Config, "--policy", "unknown policy '" + f.policy + "'");
  opts.policy = *pol;
  if (f.counts != "post" && f.counts != "raw") throw Error(ErrorKind::Config, "--counts", "expected post or raw");
  opts.counts = f.counts == "post" ? CountSource::Post : CountSource::Raw;
  opts.group_by_question = f.group_by_question;

  auto rows = read_results_jsonl(f.results);
  std::optional<std::map<std::string, HumanLabel>> labels;
  if (!f.labels.empty()) labels = labels_from_responses(load_responses(f.labels));
  auto report = sweep(rows, labels, opts);

  const std::string report_json = report_to_json(report);
  if (f.out.empty()) out << report_json;
  else detail::write_file(f.out, report_json);
  if (!f.csv.empty()) detail::write_file(f.csv, report_to_csv(report));

  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  const ReportRow* headline = &report.rows.front();
  for (const auto& r : report.rows) {
    if (r.threshold == 1 && r.group == headline->group) {
      headline = &r;
      break;
    }
  }
  err << "threshold " << headline->threshold << ": agreement " << headline->metrics.agreement() << ", kappa "
      << headline->metrics.kappa << ", precision " << headline->metrics.precision << ", recall "
      << headline->metrics.recall << ", f1 " << headline->metrics.f1 << " (n=" << headline->matrix.n() << ")\n";
  return kExitOk;
}

inline int run_serve(const BackendFlags& bf, const std::string& questions_dir, const std::string& host, int port,
                     const std::string& static_dir, const std::string& state_file, const std::string& cors,
                     int concurrency, std::ostream& err) {
  QuestionLoadOptions qopts{bf.infer_signature};
  auto bank = load_question_bank(questions_dir, qopts);
  std::shared_ptr<const Backend> backend = bf.make(bank, concurrency);
  FeedbackService service(std::move(bank), backend, bf.grade());
  if (!state_file.empty()) service.sessions().load(state_file);

  ServerOptions sopts;
  if (!static_dir.empty()) sopts.static_dir = static_dir;
  sopts.cors_origin = cors;
  auto server = make_http_server(service, sopts);

  detail::g_stop_requested = false;
  std::signal(SIGINT, detail::on_signal);
  std::signal(SIGTERM, detail::on_signal);
  std::thread watcher([&] {
    while (!detail::g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server->stop();
  });

  err << "serving " << service.bank().size() << " questions on http://" << host << ":" << port << '\n';
  const bool ok = server->listen(host, port);
  detail::g_stop_requested = true;
  watcher.join();
  if (!state_file.empty()) service.sessions().save(state_file);
  if (!ok) {
    err << "error: could not listen on " << host << ":" << port << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

/// Runs the CLI with argv-style arguments (args[0] is the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
  CLI::App app{"Segmentation-based comprehension-level grading for explain-in-plain-English answers", "eipl"};
  app.require_subcommand(1);

  BackendFlags seg_b;
  std::string seg_question, seg_text, seg_response_id = "cli";
  bool seg_stdin = false;
  auto* seg = app.add_subcommand("segment", "segment and classify one explanation");
  seg_b.attach(seg);
  seg->add_option("--question", seg_question, "question JSON file")->required();
  auto* text_opt = seg->add_option("--text", seg_text, "explanation text");
  auto* stdin_opt = seg->add_flag("--stdin", seg_stdin, "read the explanation from stdin");
  text_opt->excludes(stdin_opt);
  seg->add_option("--response-id", seg_response_id)->capture_default_str();

  BackendFlags bat_b;
  std::string bat_questions, bat_responses, bat_out;
  int bat_concurrency = 4;
  auto* bat = app.add_subcommand("batch", "grade a responses file");
  bat_b.attach(bat);
  bat->add_option("--questions", bat_questions, "directory of question JSON files")->required();
  bat->add_option("--responses", bat_responses, "responses JSONL or CSV")->required();
  bat->add_option("--out", bat_out, "results JSONL")->required();
  bat->add_option("--concurrency", bat_concurrency)->capture_default_str();

  EvalFlags ev_f;
  auto* ev = app.add_subcommand("evaluate", "agreement metrics against human labels");
  ev_f.attach(ev, "1");
  EvalFlags sw_f;
  auto* sw = app.add_subcommand("sweep", "agreement metrics across thresholds");
  sw_f.attach(sw, "1..4");

  BackendFlags srv_b;
  std::string srv_questions, srv_static, srv_state, srv_host = "127.0.0.1", srv_cors = "http://localhost:5173";
  int srv_port = 8080;
  int srv_concurrency = 4;
  auto* srv = app.add_subcommand("serve", "run the feedback HTTP service");
  srv_b.attach(srv);
  srv->add_option("--questions", srv_questions, "directory of question JSON files")->required();
  srv->add_option("--port", srv_port)->capture_default_str();
  srv->add_option("--host", srv_host)->capture_default_str();
  srv->add_option("--static", srv_static, "directory of built UI assets");
  srv->add_option("--state", srv_state, "attempt-counter snapshot file");
  srv->add_option("--cors-origin", srv_cors)->capture_default_str();
  srv->add_option("--concurrency", srv_concurrency, "backend calls in flight")->capture_default_str();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (seg->parsed()) {
      auto grade = seg_b.grade();
      QuestionLoadOptions qopts{seg_b.infer_signature};
      Question q = load_question(seg_question, qopts);
      std::string text = seg_text;
      if (seg_stdin) text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      QuestionBank bank;
      bank.emplace(q.id, q);
      auto backend = seg_b.make(bank, 1);
      StudentResponse r{q.id, seg_response_id, text, std::nullopt};
      auto result = grade_response(q, r, *backend, grade);
      out << to_json(result).dump(2, ' ', false, json::error_handler_t::replace) << '\n';
      err << to_string(result.level) << ": " << result.post_count << " segment(s) after post-processing ("
          << result.raw_count << " raw), threshold " << result.threshold << '\n';
      for (const auto& w : result.warnings) err << "warning: " << w << '\n';
      return kExitOk;
    }
    if (bat->parsed()) {
      if (bat_concurrency < 1) throw Error(ErrorKind::Config, "--concurrency", "must be >= 1");
      BatchOptions opts;
      opts.grade = bat_b.grade();
      opts.concurrency = bat_concurrency;
      QuestionLoadOptions qopts{bat_b.infer_signature};
      auto bank = load_question_bank(bat_questions, qopts);
      auto responses = load_responses(bat_responses);
      check_resolvable(bank, responses);
      auto backend = bat_b.make(bank, bat_concurrency);
      auto rows = run_batch(bank, responses, *backend, opts);
      std::ostringstream buf;
      write_results_jsonl(buf, rows);
      detail::write_file(bat_out, buf.str());
      std::size_t errors = 0;
      for (const auto& row : rows) errors += std::holds_alternative<ErrorRow>(row) ? 1 : 0;
      err << rows.size() << " responses graded, " << errors << " error rows -> " << bat_out << '\n';
      return kExitOk;
    }
    if (ev->parsed()) return run_evaluate(ev_f, out, err);
    if (sw->parsed()) return run_evaluate(sw_f, out, err);
    if (srv->parsed()) {
      return run_serve(srv_b, srv_questions, srv_host, srv_port, srv_static, srv_state, srv_cors,
                       srv_concurrency, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace eipl::cli
