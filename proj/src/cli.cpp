#include "hlsflow/cli.hpp"

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "hlsflow/agentloop.hpp"
#include "hlsflow/bitwidth.hpp"
#include "hlsflow/paretolab.hpp"
#include "hlsflow/refactor.hpp"
#include "json.hpp"

namespace hlsflow::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config file

void reject_unknown(const YAML::Node& node, const std::string& where, std::initializer_list<std::string_view> known) {
  if (!node.IsMap()) throw ValidationError(fmt::format("config: '{}' must be a mapping", where));
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError(fmt::format("config: unknown key '{}{}'", where.empty() ? "" : where + ".", key));
  }
}

template <class T>
void read_key(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(fmt::format("config: '{}.{}' has the wrong type", where, key));
  }
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

synthrunner::ExecutionTarget parse_target(const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("target must be NAME=PREFIX, got '" + spec + "'");
  return {spec.substr(0, eq), split_words(spec.substr(eq + 1))};
}

} // namespace

GlobalConfig GlobalConfig::parse(std::string_view yaml_text) {
  GlobalConfig c;
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (root.IsNull()) return c;
  reject_unknown(root, "", {"paths", "execution", "retrieval", "stopping", "templates"});
  if (auto p = root["paths"]) {
    reject_unknown(p, "paths", {"run_root", "index_dir"});
    std::string run_root = c.run_root.string(), index_dir = c.index_dir.string();
    read_key(p, "run_root", run_root, "paths");
    read_key(p, "index_dir", index_dir, "paths");
    c.run_root = run_root;
    c.index_dir = index_dir;
  }
  if (auto e = root["execution"]) {
    reject_unknown(e, "execution", {"pool_size", "per_job_timeout_seconds", "max_retries", "targets"});
    read_key(e, "pool_size", c.plan.pool_size, "execution");
    read_key(e, "per_job_timeout_seconds", c.plan.per_job_timeout_seconds, "execution");
    read_key(e, "max_retries", c.plan.max_retries, "execution");
    if (auto t = e["targets"]) {
      if (!t.IsSequence()) throw ValidationError("config: 'execution.targets' must be a list");
      c.plan.targets.clear();
      for (const auto& item : t) {
        reject_unknown(item, "execution.targets[]", {"name", "prefix"});
        synthrunner::ExecutionTarget target;
        read_key(item, "name", target.name, "execution.targets[]");
        if (auto pre = item["prefix"]) {
          if (pre.IsSequence()) target.command_prefix = pre.as<std::vector<std::string>>();
          else target.command_prefix = split_words(pre.as<std::string>());
        }
        c.plan.targets.push_back(std::move(target));
      }
    }
  }
  if (auto r = root["retrieval"]) {
    reject_unknown(r, "retrieval", {"k", "m", "window_bytes", "stride_bytes"});
    read_key(r, "k", c.retrieval.k, "retrieval");
    read_key(r, "m", c.retrieval.m, "retrieval");
    read_key(r, "window_bytes", c.retrieval.window_bytes, "retrieval");
    read_key(r, "stride_bytes", c.retrieval.stride_bytes, "retrieval");
  }
  if (auto s = root["stopping"]) {
    reject_unknown(s, "stopping",
                   {"ci_level", "precision_halfwidth", "success_theta", "success_prob", "futility_theta",
                    "futility_prob", "min_trials", "max_trials"});
    read_key(s, "ci_level", c.stopping.ci_level, "stopping");
    read_key(s, "precision_halfwidth", c.stopping.precision_halfwidth, "stopping");
    read_key(s, "success_theta", c.stopping.success_theta, "stopping");
    read_key(s, "success_prob", c.stopping.success_prob, "stopping");
    read_key(s, "futility_theta", c.stopping.futility_theta, "stopping");
    read_key(s, "futility_prob", c.stopping.futility_prob, "stopping");
    read_key(s, "min_trials", c.stopping.min_trials, "stopping");
    read_key(s, "max_trials", c.stopping.max_trials, "stopping");
  }
  if (auto t = root["templates"]) {
    if (!t.IsMap()) throw ValidationError("config: 'templates' must be a mapping");
    for (const auto& kv : t) {
      auto name = kv.first.as<std::string>();
      auto type = designspace::directive_type_from_string(name);
      if (!type) throw ValidationError("config: unknown key 'templates." + name + "'");
      c.template_overrides[*type] = kv.second.as<std::string>();
    }
  }
  c.plan.validate();
  c.retrieval.validate();
  c.stopping.validate();
  c.templates();
  return c;
}

GlobalConfig GlobalConfig::load(const fs::path& path) { return parse(read_file(path)); }

designspace::DirectiveTemplates GlobalConfig::templates() const {
  auto t = designspace::DirectiveTemplates::defaults();
  for (const auto& [type, line] : template_overrides) t.lines[type] = line;
  t.validate();
  return t;
}

namespace {

// ---------------------------------------------------------------------------
// Subcommand wiring

class UsageError : public Error {
public:
  using Error::Error;
};

struct Output {
  std::ostream& out;
  std::ostream& err;
};

void emit(const std::optional<fs::path>& path, const std::string& text, std::ostream& out) {
  if (path) write_file(*path, text);
  else out << text;
}

std::unique_ptr<synthrunner::SynthesisBackend> make_backend(const std::string& kind, const std::string& profile,
                                                            const std::string& spec_path, const std::string& command) {
  if (kind == "mock") {
    if (profile.empty()) throw UsageError("--backend mock needs --profile");
    if (spec_path.empty()) throw UsageError("--backend mock needs --spec");
    return std::make_unique<synthrunner::MockBackend>(synthrunner::MockKernelProfile::load(profile),
                                                      designspace::load_spec(spec_path));
  }
  if (kind == "command") {
    auto words = split_words(command);
    if (words.empty()) throw UsageError("--backend command needs --command");
    return std::make_unique<synthrunner::CommandBackend>(std::move(words));
  }
  throw UsageError("unknown backend '" + kind + "' (expected mock or command)");
}

std::string front_csv(const std::vector<paretolab::DesignRecord>& records, const paretolab::ParetoFront& front) {
  std::map<std::uint64_t, const paretolab::DesignRecord*> by_index;
  for (const auto& r : records) by_index[r.point_index] = &r;
  std::string out = csv::format_row({"index", "latency_ms", "area"});
  for (auto idx : front.indices) {
    const auto& r = *by_index.at(idx);
    out += csv::format_row({std::to_string(idx), format_number(*r.outcome.latency_ms), format_number(*r.outcome.area)});
  }
  return out;
}

std::shared_ptr<ragkit::Embedder> make_embedder(const std::string& command, std::size_t dimension) {
  if (command.empty()) return std::make_shared<ragkit::HashingEmbedder>(dimension);
  return std::make_shared<ragkit::CommandEmbedder>(command, dimension);
}

std::unique_ptr<ragkit::Reranker> make_reranker(const std::string& kind, const std::string& command) {
  if (kind == "identity") return std::make_unique<ragkit::IdentityReranker>();
  if (kind == "overlap") return std::make_unique<ragkit::TokenOverlapReranker>();
  if (kind == "command") {
    if (command.empty()) throw UsageError("--reranker command needs --reranker-command");
    return std::make_unique<ragkit::CommandReranker>(command);
  }
  throw UsageError("unknown reranker '" + kind + "' (expected identity, overlap or command)");
}

std::vector<agentloop::TaskSpec> load_tasks(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ValidationError(path.string() + ": expected a JSON list of tasks");
  std::vector<agentloop::TaskSpec> tasks;
  for (const auto& t : j) {
    agentloop::TaskSpec s;
    s.phase_id = t.at("phase_id").get<int>();
    s.description = t.value("description", "");
    s.deliverable_contract = t.value("deliverable_contract", "");
    tasks.push_back(std::move(s));
  }
  return tasks;
}

int run_refactor(const std::string& file, bool write, Output io,
                 const std::function<std::string(const std::string&, refactor::EditSet*)>& transform) {
  auto text = read_file(file);
  refactor::EditSet edits;
  std::string out;
  try {
    out = transform(text, &edits);
  } catch (const refactor::RefactorError& e) {
    for (const auto& d : e.diagnostics()) io.err << file << ":" << d.to_string() << "\n";
    return 1;
  } catch (const refactor::ParseError& e) {
    io.err << file << ":" << e.what() << "\n";
    return 1;
  }
  if (write) {
    if (!edits.empty()) write_file(file, out);
    io.err << fmt::format("{}: {} edit(s) applied\n", file, edits.size());
  } else {
    io.out << refactor::unified_diff(text, edits, fs::path(file).generic_string());
  }
  return 0;
}

int run_app(const std::vector<std::string>& args, Output io) {
  CLI::App app{"High-level synthesis design-space exploration and refactoring toolkit", "hlsflow"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all subcommand help");

  std::string config_path;
  app.add_option("--config", config_path, "YAML config file (flags override it)")->check(CLI::ExistingFile);

  std::function<int(GlobalConfig&)> action;
  std::vector<std::function<void(GlobalConfig&)>> overrides;
  auto override_with = [&](CLI::Option* opt, auto apply) {
    overrides.push_back([opt, apply](GlobalConfig& c) {
      if (opt->count() > 0) apply(c);
    });
  };

  // Shared execution flags.
  struct ExecFlags {
    std::size_t pool = 1;
    double timeout = 3600;
    int retries = 2;
    std::vector<std::string> targets;
    std::string backend = "mock";
    std::string profile;
    std::string spec;
    std::string command;
  };
  auto add_exec_flags = [&](CLI::App* sub, ExecFlags& f, bool with_spec) {
    override_with(sub->add_option("-j,--pool", f.pool, "Concurrent synthesis jobs"),
                  [&f](GlobalConfig& c) { c.plan.pool_size = f.pool; });
    override_with(sub->add_option("--timeout", f.timeout, "Per-job timeout in seconds"),
                  [&f](GlobalConfig& c) { c.plan.per_job_timeout_seconds = f.timeout; });
    override_with(sub->add_option("--retries", f.retries, "Retries after transport failures"),
                  [&f](GlobalConfig& c) { c.plan.max_retries = f.retries; });
    override_with(sub->add_option("--target", f.targets, "Execution target NAME=PREFIX (repeatable)"),
                  [&f](GlobalConfig& c) {
                    c.plan.targets.clear();
                    for (const auto& t : f.targets) c.plan.targets.push_back(parse_target(t));
                  });
    sub->add_option("--backend", f.backend, "Synthesis backend: mock or command")
        ->check(CLI::IsMember({"mock", "command"}));
    sub->add_option("--profile", f.profile, "Mock kernel profile JSON")->check(CLI::ExistingFile);
    if (with_spec) sub->add_option("--spec", f.spec, "Design-space spec (mock backend)")->check(CLI::ExistingFile);
    sub->add_option("--command", f.command, "Backend command; the directive path is appended");
  };

  // dse ---------------------------------------------------------------------
  auto* dse = app.add_subcommand("dse", "Design-space generation, execution and reporting");
  dse->require_subcommand(1);

  std::string gen_spec, gen_out = "directives", gen_templates;
  bool gen_baseline = false;
  auto* gen = dse->add_subcommand("gen", "Expand a design-space spec into directive scripts and a manifest");
  gen->add_option("spec", gen_spec, "Design-space spec (YAML)")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "Output directory");
  gen->add_option("--templates", gen_templates, "Directive template overrides (TYPE: line)")->check(CLI::ExistingFile);
  gen->add_flag("--include-baseline", gen_baseline, "Add a row for the unmodified base script");
  gen->callback([&] {
    action = [&](GlobalConfig& c) {
      auto spec = designspace::load_spec(gen_spec);
      auto templates = c.templates();
      if (!gen_templates.empty()) {
        auto file = designspace::DirectiveTemplates::parse(read_file(gen_templates));
        for (const auto& [type, line] : file.lines)
          if (line != designspace::DirectiveTemplates::defaults().lines.at(type)) templates.lines[type] = line;
      }
      designspace::EmitOptions opts{gen_baseline, fs::path(gen_spec).parent_path()};
      auto manifest = designspace::emit_directives(spec, designspace::expand(spec), gen_out, templates, opts);
      io.out << fmt::format("{} directive script(s) written to {}\n", manifest.rows.size(), gen_out);
      return 0;
    };
  });

  std::string run_manifest, run_dir_opt;
  std::string run_root_flag;
  bool run_resume = false;
  ExecFlags run_flags;
  auto* run = dse->add_subcommand("run", "Synthesize every manifest row");
  run->add_option("manifest", run_manifest, "Manifest CSV written by dse gen")->required()->check(CLI::ExistingFile);
  add_exec_flags(run, run_flags, true);
  override_with(run->add_option("--run-root", run_root_flag, "Parent of timestamped run directories"),
                [&](GlobalConfig& c) { c.run_root = run_root_flag; });
  run->add_option("--run-dir", run_dir_opt, "Explicit run directory");
  run->add_flag("--resume", run_resume, "Reuse finished jobs from the run directory's journal");
  run->callback([&] {
    action = [&](GlobalConfig& c) {
      auto manifest = designspace::Manifest::load(run_manifest);
      auto backend = make_backend(run_flags.backend, run_flags.profile, run_flags.spec, run_flags.command);
      synthrunner::RunOptions opts;
      opts.run_root = c.run_root;
      if (!run_dir_opt.empty()) opts.run_dir = run_dir_opt;
      opts.resume = run_resume;
      if (run_resume && run_dir_opt.empty()) throw UsageError("--resume needs --run-dir");
      auto result = synthrunner::run_all(manifest, fs::path(run_manifest).parent_path(), c.plan, *backend, opts);
      result.manifest.save(result.run_dir / designspace::kManifestFile);
      io.out << result.run_dir.generic_string() << "\n";
      for (const auto& [state, n] : result.summary.counts) io.out << fmt::format("{}: {}\n", state, n);
      return 0;
    };
  });

  std::string pareto_manifest, pareto_out;
  auto* pareto = dse->add_subcommand("pareto", "List the latency/area Pareto-optimal designs");
  pareto->add_option("manifest", pareto_manifest, "Manifest CSV with results")->required()->check(CLI::ExistingFile);
  pareto->add_option("-o,--out", pareto_out, "Write CSV here instead of stdout");
  pareto->callback([&] {
    action = [&](GlobalConfig&) {
      auto records = paretolab::records_from_manifest(designspace::Manifest::load(pareto_manifest));
      auto front = paretolab::pareto_front(records);
      emit(pareto_out.empty() ? std::nullopt : std::optional<fs::path>(pareto_out), front_csv(records, front), io.out);
      return 0;
    };
  });

  std::string report_manifest, report_format = "text-table", report_kernel = "kernel", report_out;
  auto* report = dse->add_subcommand("report", "Summary table, full CSV or plot data for a finished run");
  report->add_option("manifest", report_manifest, "Manifest CSV with results")->required()->check(CLI::ExistingFile);
  report->add_option("--format", report_format, "text-table, csv or plot-data")
      ->check(CLI::IsMember({"text-table", "csv", "plot-data"}));
  report->add_option("--kernel", report_kernel, "Kernel name for the table");
  report->add_option("-o,--out", report_out, "Write here instead of stdout");
  report->callback([&] {
    action = [&](GlobalConfig&) {
      auto records = paretolab::records_from_manifest(designspace::Manifest::load(report_manifest));
      auto text = paretolab::emit_report(records, paretolab::pareto_front(records),
                                         paretolab::report_format_from_string(report_format), report_kernel);
      emit(report_out.empty() ? std::nullopt : std::optional<fs::path>(report_out), text, io.out);
      return 0;
    };
  });

  // numerics ----------------------------------------------------------------
  auto* numerics = app.add_subcommand("numerics", "Fixed-point bit-width search");
  numerics->require_subcommand(1);
  std::string num_budgets, num_oracle, num_out;
  int num_floor = 2;
  double num_timeout = 600;
  bool num_json = false;
  auto* search = numerics->add_subcommand("search", "Narrow each candidate type while the oracle passes");
  search->add_option("budgets", num_budgets, "Budget file (JSON list)")->required()->check(CLI::ExistingFile);
  search->add_option("--oracle", num_oracle, "Verification command (JSON assignment on stdin)")->required();
  search->add_option("--floor", num_floor, "Smallest total width considered");
  search->add_option("--timeout", num_timeout, "Oracle timeout in seconds");
  search->add_flag("--json", num_json, "Print the JSON report instead of the table");
  search->add_option("-o,--out", num_out, "Write the report here instead of stdout");
  search->callback([&] {
    action = [&](GlobalConfig&) {
      bitwidth::CommandOracle oracle(num_oracle, num_timeout);
      auto rep = bitwidth::search_widths(bitwidth::load_budgets(num_budgets), oracle, {num_floor});
      emit(num_out.empty() ? std::nullopt : std::optional<fs::path>(num_out), num_json ? rep.to_json() : rep.to_text(),
           io.out);
      return 0;
    };
  });

  // trials ------------------------------------------------------------------
  auto* trials = app.add_subcommand("trials", "Repeated three-stage trials with Bayesian stopping");
  trials->require_subcommand(1);
  betatrials::StageCommands stages;
  std::string tr_work = "trials", tr_ledger;
  std::size_t tr_parallel = 1;
  double tr_stage_timeout = 0;
  betatrials::StoppingConfig tr_stop;
  auto* trun = trials->add_subcommand("run", "Run trials until a stopping rule fires (exit 3 futility, 4 max trials)");
  trun->add_option("--compile", stages.compile, "Compile stage command");
  trun->add_option("--execute", stages.execute, "Execute stage command");
  trun->add_option("--synthesize", stages.synthesize, "Synthesize stage command");
  trun->add_option("--work-dir", tr_work, "Parent directory of per-trial directories");
  trun->add_option("--ledger", tr_ledger, "NDJSON ledger path (default <work-dir>/ledger.ndjson)");
  trun->add_option("-j,--parallel", tr_parallel, "Trials in flight");
  trun->add_option("--stage-timeout", tr_stage_timeout, "Per-stage timeout in seconds (0: none)");
  override_with(trun->add_option("--min-trials", tr_stop.min_trials, "Trials before any rule applies"),
                [&](GlobalConfig& c) { c.stopping.min_trials = tr_stop.min_trials; });
  override_with(trun->add_option("--max-trials", tr_stop.max_trials, "Hard trial limit"),
                [&](GlobalConfig& c) { c.stopping.max_trials = tr_stop.max_trials; });
  override_with(trun->add_option("--precision", tr_stop.precision_halfwidth, "Credible-interval half-width target"),
                [&](GlobalConfig& c) { c.stopping.precision_halfwidth = tr_stop.precision_halfwidth; });
  trun->callback([&] {
    action = [&](GlobalConfig& c) {
      if (stages.compile.empty() && stages.execute.empty() && stages.synthesize.empty())
        throw UsageError("trials run needs at least one stage command");
      betatrials::SequentialOptions opts;
      opts.stopping = c.stopping;
      opts.trial.work_dir = tr_work;
      opts.trial.stage_timeout_seconds = tr_stage_timeout;
      opts.parallelism = tr_parallel;
      opts.ledger_path = tr_ledger.empty() ? fs::path(tr_work) / "ledger.ndjson" : fs::path(tr_ledger);
      auto res = betatrials::run_sequential(stages, opts);
      auto post = betatrials::posterior(res.ledger.n(), res.ledger.k());
      auto [lo, hi] = post.credible_interval(c.stopping.ci_level);
      io.out << fmt::format("stop: {}\nn={} k={} mean={} ci=[{}, {}]\n",
                            res.decision.reason ? betatrials::to_string(*res.decision.reason) : "none",
                            res.ledger.n(), res.ledger.k(), format_fixed(100 * post.mean(), 1),
                            format_fixed(100 * lo, 1), format_fixed(100 * hi, 1));
      return betatrials::exit_code_for(res.decision);
    };
  });

  std::vector<std::string> an_ledgers;
  bool an_json = false;
  auto* analyze = trials->add_subcommand("analyze", "Posterior and cost tables for one or more ledgers");
  analyze->add_option("ledgers", an_ledgers, "Ledger files; NAME=PATH sets the row name")->required();
  analyze->add_flag("--json", an_json, "Print JSON instead of tables");
  analyze->callback([&] {
    action = [&](GlobalConfig& c) {
      std::vector<std::pair<std::string, betatrials::TrialLedger>> ledgers;
      for (const auto& item : an_ledgers) {
        auto eq = item.find('=');
        std::string name = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
        std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
        ledgers.emplace_back(name, betatrials::TrialLedger::load(path));
      }
      if (an_json) {
        io.out << betatrials::analysis_json(ledgers, c.stopping.ci_level);
        return 0;
      }
      std::vector<betatrials::ConfigRow> rows;
      std::vector<std::pair<std::string, betatrials::CostSummary>> costs;
      for (const auto& [name, l] : ledgers) {
        rows.push_back({name, l.n(), l.k()});
        if (l.n() > 0) costs.emplace_back(name, betatrials::cost_summary(l));
      }
      io.out << betatrials::posterior_table(rows, c.stopping.ci_level) << "\n" << betatrials::cost_table(costs);
      return 0;
    };
  });

  // loop --------------------------------------------------------------------
  auto* loop = app.add_subcommand("loop", "Specialist/verifier loops");
  loop->require_subcommand(1);
  std::string lp_tasks, lp_spec_cmd, lp_ver_cmd, lp_trace = "trace.ndjson";
  int lp_rounds = 5;
  bool lp_continue = false;
  auto* lrun = loop->add_subcommand("run", "Run each task through its specialist/verifier loop");
  lrun->add_option("tasks", lp_tasks, "Task list (JSON)")->required()->check(CLI::ExistingFile);
  lrun->add_option("--specialist", lp_spec_cmd, "Specialist command")->required();
  lrun->add_option("--verifier", lp_ver_cmd, "Verifier command")->required();
  lrun->add_option("--max-rounds", lp_rounds, "Rounds before a phase is declared failed");
  lrun->add_option("--trace", lp_trace, "NDJSON trace output");
  lrun->add_flag("--continue-on-failure", lp_continue, "Run later phases after a failure");
  lrun->callback([&] {
    action = [&](GlobalConfig&) {
      agentloop::PipelineOptions opts;
      opts.max_rounds = lp_rounds;
      opts.continue_on_failure = lp_continue;
      opts.trace_path = lp_trace;
      auto res = agentloop::run_pipeline(load_tasks(lp_tasks), [&](const agentloop::TaskSpec&) {
        return agentloop::BackendPair{std::make_shared<agentloop::CommandSpecialist>(lp_spec_cmd),
                                      std::make_shared<agentloop::CommandVerifier>(lp_ver_cmd)};
      }, opts);
      io.out << agentloop::metrics_table(agentloop::compute_metrics(res.episodes));
      if (res.failed_phase) io.err << fmt::format("phase {} was not accepted\n", *res.failed_phase);
      return res.ok() ? 0 : 1;
    };
  });

  std::string lm_trace;
  bool lm_json = false;
  auto* lmetrics = loop->add_subcommand("metrics", "Per-phase round statistics from a trace");
  lmetrics->add_option("trace", lm_trace, "NDJSON trace")->required()->check(CLI::ExistingFile);
  lmetrics->add_flag("--json", lm_json, "Print JSON instead of the table");
  lmetrics->callback([&] {
    action = [&](GlobalConfig&) {
      auto m = agentloop::compute_metrics(agentloop::load_trace(lm_trace));
      io.out << (lm_json ? agentloop::metrics_json(m) : agentloop::metrics_table(m));
      return 0;
    };
  });

  // refactor ----------------------------------------------------------------
  auto* rf = app.add_subcommand("refactor", "HLS-compatibility source rewrites (diff by default)");
  rf->require_subcommand(1);
  std::string rf_file, rf_sizes, rf_type = "double", rf_kernel;
  bool rf_write = false, rf_all = false;
  auto* sm = rf->add_subcommand("static-mem", "Turn sized pointers into fixed arrays and drop new[]/delete[]");
  sm->add_option("file", rf_file, "Source file")->required()->check(CLI::ExistingFile);
  sm->add_option("--sizes", rf_sizes, "Size map (JSON)")->required()->check(CLI::ExistingFile);
  sm->add_flag("--write", rf_write, "Rewrite the file in place");
  sm->callback([&] {
    action = [&](GlobalConfig&) {
      auto sizes = refactor::SizeMap::load(rf_sizes);
      return run_refactor(rf_file, rf_write, io, [&](const std::string& t, refactor::EditSet* e) {
        return refactor::apply_static_mem(t, sizes, e);
      });
    };
  });
  auto* lc = rf->add_subcommand("literal-cast", "Wrap numeric literals in a function-style cast");
  lc->add_option("file", rf_file, "Source file")->required()->check(CLI::ExistingFile);
  lc->add_option("--type", rf_type, "Cast target type");
  lc->add_flag("--all-numeric", rf_all, "Cast integer literals too");
  lc->add_flag("--write", rf_write, "Rewrite the file in place");
  lc->callback([&] {
    action = [&](GlobalConfig&) {
      auto scope = rf_all ? refactor::LiteralScope::AllNumeric : refactor::LiteralScope::FloatingOnly;
      return run_refactor(rf_file, rf_write, io, [&](const std::string& t, refactor::EditSet* e) {
        return refactor::apply_literal_typecast(t, rf_type, scope, e);
      });
    };
  });
  auto* ll = rf->add_subcommand("label-loops", "Label every loop LOOP_<KERNEL>_<letters>");
  ll->add_option("file", rf_file, "Source file")->required()->check(CLI::ExistingFile);
  ll->add_option("--kernel", rf_kernel, "Kernel name used in labels")->required();
  ll->add_flag("--write", rf_write, "Rewrite the file in place");
  ll->callback([&] {
    action = [&](GlobalConfig&) {
      return run_refactor(rf_file, rf_write, io, [&](const std::string& t, refactor::EditSet* e) {
        return refactor::apply_label_loops(t, rf_kernel, e);
      });
    };
  });

  // codeql ------------------------------------------------------------------
  auto* cq = app.add_subcommand("codeql", "CodeQL query generation");
  cq->require_subcommand(1);
  std::string cq_function, cq_file, cq_out;
  auto* cqe = cq->add_subcommand("emit", "Query listing each variable a function reads or writes");
  cqe->add_option("--function", cq_function, "Function name")->required();
  cqe->add_option("--file", cq_file, "Base name of the file defining it")->required();
  cqe->add_option("-o,--out", cq_out, "Write the query here instead of stdout");
  cqe->callback([&] {
    action = [&](GlobalConfig&) {
      emit(cq_out.empty() ? std::nullopt : std::optional<fs::path>(cq_out),
           refactor::emit_ioquery(cq_function, cq_file), io.out);
      return 0;
    };
  });

  // rag ---------------------------------------------------------------------
  auto* rag = app.add_subcommand("rag", "Document index and two-stage retrieval");
  rag->require_subcommand(1);
  std::string rag_index_dir, rag_embedder_cmd;
  std::size_t rag_dim = 256;
  std::string rag_dir;
  ragkit::RetrievalConfig rag_cfg;
  auto add_index_dir = [&](CLI::App* sub) {
    override_with(sub->add_option("--index-dir", rag_index_dir, "Index directory"),
                  [&](GlobalConfig& c) { c.index_dir = rag_index_dir; });
    sub->add_option("--embedder-command", rag_embedder_cmd, "External embedder (default: built-in hashing)");
    sub->add_option("--dimension", rag_dim, "Embedding dimension");
  };
  auto* ridx = rag->add_subcommand("index", "Chunk and embed every file under a directory");
  ridx->add_option("dir", rag_dir, "Document directory")->required()->check(CLI::ExistingDirectory);
  add_index_dir(ridx);
  override_with(ridx->add_option("--window", rag_cfg.window_bytes, "Chunk window in bytes"),
                [&](GlobalConfig& c) { c.retrieval.window_bytes = rag_cfg.window_bytes; });
  override_with(ridx->add_option("--stride", rag_cfg.stride_bytes, "Chunk stride in bytes"),
                [&](GlobalConfig& c) { c.retrieval.stride_bytes = rag_cfg.stride_bytes; });
  ridx->callback([&] {
    action = [&](GlobalConfig& c) {
      auto embedder = make_embedder(rag_embedder_cmd, rag_dim);
      auto index = ragkit::index_directory(rag_dir, *embedder, c.retrieval);
      index.save(c.index_dir / kIndexFile);
      io.out << fmt::format("{} chunk(s) indexed into {}\n", index.size(), (c.index_dir / kIndexFile).generic_string());
      return 0;
    };
  });

  std::string rq_text, rq_reranker = "overlap", rq_reranker_cmd;
  bool rq_json = false;
  auto* rquery = rag->add_subcommand("query", "Retrieve the top-k chunks by cosine, rerank, print the top-m");
  rquery->add_option("text", rq_text, "Query text")->required();
  add_index_dir(rquery);
  override_with(rquery->add_option("-k", rag_cfg.k, "First-stage candidates"),
                [&](GlobalConfig& c) { c.retrieval.k = rag_cfg.k; });
  override_with(rquery->add_option("-m", rag_cfg.m, "Results kept after reranking"),
                [&](GlobalConfig& c) { c.retrieval.m = rag_cfg.m; });
  rquery->add_option("--reranker", rq_reranker, "identity, overlap or command")
      ->check(CLI::IsMember({"identity", "overlap", "command"}));
  rquery->add_option("--reranker-command", rq_reranker_cmd, "External reranker command");
  rquery->add_flag("--json", rq_json, "Print JSON lines instead of text");
  rquery->callback([&] {
    action = [&](GlobalConfig& c) {
      auto index = ragkit::Index::load(c.index_dir / kIndexFile);
      auto embedder = make_embedder(rag_embedder_cmd, index.dimension());
      auto reranker = make_reranker(rq_reranker, rq_reranker_cmd);
      auto hits = ragkit::two_stage_query(index, rq_text, *embedder, *reranker, c.retrieval);
      for (const auto& h : hits) {
        if (rq_json) {
          io.out << json{{"doc_id", h.chunk.doc_id},
                         {"chunk_index", h.chunk.chunk_index},
                         {"offset", h.chunk.byte_offset},
                         {"score", h.score},
                         {"text", h.chunk.text}}
                        .dump()
                 << "\n";
        } else {
          io.out << fmt::format("{:.6f}\t{}#{}\t@{}\n{}\n", h.score, h.chunk.doc_id, h.chunk.chunk_index,
                                h.chunk.byte_offset, h.chunk.text);
        }
      }
      return 0;
    };
  });

  // pipeline ----------------------------------------------------------------
  auto* pipe = app.add_subcommand("pipeline", "Generate, synthesize and report in one invocation");
  pipe->require_subcommand(1);
  std::string pp_spec, pp_out = "pipeline", pp_kernel;
  bool pp_baseline = false;
  ExecFlags pp_flags;
  auto* prun = pipe->add_subcommand("run", "dse gen, dse run and dse report chained; writes pipeline_report.json");
  prun->add_option("spec", pp_spec, "Design-space spec (YAML)")->required()->check(CLI::ExistingFile);
  prun->add_option("-o,--out", pp_out, "Output directory");
  prun->add_option("--kernel", pp_kernel, "Kernel name for reports (default: the spec's)");
  prun->add_flag("--include-baseline", pp_baseline, "Include the unmodified base script");
  add_exec_flags(prun, pp_flags, false);
  prun->callback([&] {
    action = [&](GlobalConfig& c) {
      fs::path out = pp_out;
      auto spec = designspace::load_spec(pp_spec);
      auto directives = out / "directives";
      auto manifest = designspace::emit_directives(spec, designspace::expand(spec), directives, c.templates(),
                                                   {pp_baseline, fs::path(pp_spec).parent_path()});
      auto backend = make_backend(pp_flags.backend, pp_flags.profile, pp_spec, pp_flags.command);
      synthrunner::RunOptions opts;
      opts.run_root = out / "run";
      auto result = synthrunner::run_all(manifest, directives, c.plan, *backend, opts);
      auto results_manifest = out / "results.csv";
      result.manifest.save(results_manifest);
      result.manifest.save(result.run_dir / designspace::kManifestFile);

      auto records = paretolab::records_from_manifest(result.manifest);
      auto front = paretolab::pareto_front(records);
      auto stats = paretolab::summarize(records);
      std::string kernel = pp_kernel.empty() ? spec.kernel_name : pp_kernel;
      struct ReportFile {
        const char* key;
        const char* name;
        paretolab::ReportFormat format;
      };
      const ReportFile reports[] = {{"text_table", "report.txt", paretolab::ReportFormat::TextTable},
                                    {"csv", "report.csv", paretolab::ReportFormat::Csv},
                                    {"plot_data", "plot.tsv", paretolab::ReportFormat::PlotData}};
      json report_files = json::object();
      for (const auto& r : reports) {
        write_file(out / r.name, paretolab::emit_report(records, front, r.format, kernel));
        report_files[r.key] = r.name;
      }
      write_file(out / "pareto.csv", front_csv(records, front));

      json rep{{"kernel", kernel},
               {"spec", fs::absolute(pp_spec).lexically_normal().generic_string()},
               {"directives", {{"dir", "directives"}, {"manifest", "directives/manifest.csv"}, {"count", manifest.rows.size()}}},
               {"run", {{"dir", fs::relative(result.run_dir, out).generic_string()},
                        {"summary", json::parse(result.summary.to_json())}}},
               {"results_manifest", "results.csv"},
               {"reports", report_files},
               {"pareto", {{"file", "pareto.csv"}, {"indices", front.indices}}},
               {"summary",
                {{"total_points", stats.total_points},
                 {"succeeded", stats.succeeded},
                 {"success_rate", stats.success_rate_text()},
                 {"pareto_count", stats.pareto_count}}}};
      write_file(out / kPipelineReport, rep.dump(2) + "\n");
      io.out << (out / kPipelineReport).generic_string() << "\n";
      return 0;
    };
  });

  // -------------------------------------------------------------------------
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream o, er;
    int rc = app.exit(e, o, er);
    io.out << o.str();
    return rc;
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream o, er;
    int rc = app.exit(e, o, er);
    io.out << o.str();
    return rc;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    auto* sub = &app;
    while (!sub->get_subcommands().empty()) sub = sub->get_subcommands().front();
    io.err << sub->help("", CLI::AppFormatMode::Normal);
    return 2;
  }

  try {
    GlobalConfig config = config_path.empty() ? GlobalConfig{} : GlobalConfig::load(config_path);
    for (auto& o : overrides) o(config);
    config.plan.validate();
    config.retrieval.validate();
    config.stopping.validate();
    if (!action) throw UsageError("no command selected");
    return action(config);
  } catch (const UsageError& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace

int dispatch(const std::vector<std::string>& args) { return run_app(args, {std::cout, std::cerr}); }

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

} // namespace hlsflow::cli
