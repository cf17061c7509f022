// restartq - command-line front end.
//
//   restartq analytic <query> [--failure LAW | --mu R] [--beta B] ...
//   restartq simulate --config run.yaml [--seed N] [--horizon T] [--replicas N]
//   restartq transient --config run.yaml [--seed N] [--samples N]
//   restartq experiment <scenario> [--config exp.yaml] [--horizon T] ...
//   restartq tail --input samples.csv [--window 0.9,0.999]
//
// Exit status: 0 ok, 2 bad input, 3 runtime failure, 4 estimation failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "restartq/config.hpp"
#include "restartq/dataset.hpp"

namespace fs = std::filesystem;
using namespace restartq;
using restartq::io::json;

namespace {

struct Options {
  std::string out = "restartq_out";
  unsigned jobs = 1;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> horizon;
  std::optional<std::uint64_t> replicas;
  std::optional<std::uint64_t> samples;
  std::optional<double> trace_stride;
  std::vector<double> grid;
  std::vector<std::string> params;
  std::string window;

  // analytic
  std::string query;
  std::string failure_text, job_text;
  std::optional<double> mu, beta, lambda, size_b, queue_cap, m, i, x, alpha, gamma;
  std::string policy;

  // experiment / tail
  std::string scenario;
  std::string input;
};

DistSpec law_from_text(const std::string& text, const std::string& flag) {
  const std::string doc = "law: " + text + "\n";
  YAML::Node n;
  try {
    n = YAML::Load(doc);
  } catch (const YAML::Exception& e) {
    throw ConfigError(flag + ": cannot parse '" + text + "'");
  }
  return config::detail::Reader(flag).law(n["law"], flag);
}

TailWindow window_from_text(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--window: expected LOWER,UPPER");
  char* end = nullptr;
  const double lo = std::strtod(text.c_str(), &end);
  const double hi = std::strtod(text.c_str() + comma + 1, &end);
  if (!(0.0 < lo && lo < hi && hi < 1.0)) throw ConfigError("--window: need 0 < LOWER < UPPER < 1");
  return {lo, hi};
}

json evaluate(const config::AnalyticRequest& q) {
  auto need = [&](const char* key) {
    auto it = q.values.find(key);
    if (it == q.values.end()) throw ConfigError("analytic " + q.query + ": '" + key + "' required");
    return it->second;
  };
  auto need_failure = [&]() -> const DistSpec& {
    if (!q.failure) throw ConfigError("analytic " + q.query + ": failure law required (--failure or --mu)");
    return *q.failure;
  };
  auto need_count = [&](const char* key) {
    const double v = need(key);
    if (!(v >= 1.0 && v == std::floor(v) && v < 4e9)) throw ConfigError(std::string(key) + " must be a positive integer");
    return static_cast<unsigned>(v);
  };
  json r = {{"query", q.query}};
  if (q.query == "stability") {
    const double beta = need("beta");
    const DistSpec& f = need_failure();
    const double es = expected_service_fixed(f, beta);
    r["expected_restarts"] = expected_restarts(f, beta);
    r["expected_service"] = es;
    r["threshold"] = 1.0 / es;
    if (q.values.count("lambda")) {
      const auto rep = fcfs_stability(q.values.at("lambda"), f, beta);
      r["lambda"] = q.values.at("lambda");
      r["rho"] = rep.rho;
      r["stable"] = rep.stable;
    }
  } else if (q.query == "restarts") {
    const DistSpec& f = need_failure();
    if (q.job) {
      if (q.values.count("beta")) throw ConfigError("analytic restarts: give either beta or a job law");
      const auto e = expected_restarts_random_job(f, *q.job);
      r["finite"] = e.finite;
      r["expected_restarts"] = e.finite ? json(e.value) : json("inf");
      if (!e.diagnostic.empty()) r["diagnostic"] = e.diagnostic;
    } else {
      r["expected_restarts"] = expected_restarts(f, need("beta"));
    }
  } else if (q.query == "service") {
    r["expected_service"] = expected_service_fixed(need_failure(), need("beta"));
  } else if (q.query == "throughput") {
    const double lambda = need("lambda"), mu = need("mu");
    const auto cap = need_count("queue_cap");
    const auto b = throughput_lower_bound(lambda, mu, need("B"), cap);
    r["bound_raw"] = b.raw;
    r["bound"] = b.clamped;
    r["critical_size"] = critical_job_size(lambda, mu, cap);
  } else if (q.query == "order_statistic") {
    if (!q.job) throw ConfigError("analytic order_statistic: job law required (--job)");
    r["ccdf"] = order_statistic_ccdf(*q.job, need_count("m"), need_count("i"), need("x"));
  } else if (q.query == "tail_index") {
    PolicyKind kind;
    if (q.policy == "fcfs") kind = PolicyKind::FCFS;
    else if (q.policy == "ps") kind = PolicyKind::PS;
    else throw ConfigError("analytic tail_index: policy must be fcfs or ps");
    r["index"] = theoretical_tail_index(need("alpha"), need("gamma"), need_count("m"), kind);
  } else {
    throw ConfigError("unknown analytic query '" + q.query + "'");
  }
  return r;
}

config::AnalyticRequest analytic_request(const Options& o) {
  config::AnalyticRequest q;
  if (!o.config.empty()) {
    auto cfg = config::parse_config_file(o.config);
    if (cfg.kind() != config::Kind::Analytic) throw ConfigError(o.config + ": expected kind: analytic");
    q = std::get<config::AnalyticRequest>(cfg.body);
    if (!o.query.empty() && o.query != q.query) throw ConfigError("query on the command line differs from config");
  } else {
    q.query = o.query;
  }
  if (q.query.empty()) throw ConfigError("analytic: query required");
  if (!config::detail::analytic_keys().count(q.query)) throw ConfigError("unknown analytic query '" + q.query + "'");
  if (!o.failure_text.empty() && o.mu) throw ConfigError("give either --failure or --mu");
  if (!o.failure_text.empty()) q.failure = law_from_text(o.failure_text, "--failure");
  if (o.mu) {
    if (q.query == "throughput") q.values["mu"] = *o.mu;
    else q.failure = DistSpec::exponential(*o.mu);
  }
  if (!o.job_text.empty()) q.job = law_from_text(o.job_text, "--job");
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) q.values[key] = *v;
  };
  put("beta", o.beta);
  put("lambda", o.lambda);
  put("B", o.size_b);
  put("queue_cap", o.queue_cap);
  put("m", o.m);
  put("i", o.i);
  put("x", o.x);
  put("alpha", o.alpha);
  put("gamma", o.gamma);
  if (!o.policy.empty()) q.policy = o.policy;
  const auto& allowed = config::detail::analytic_keys().at(q.query);
  for (const auto& [k, v] : q.values)
    if (!allowed.count(k)) throw ConfigError("analytic " + q.query + ": '" + k + "' does not apply");
  if (q.failure && !allowed.count("failure")) throw ConfigError("analytic " + q.query + ": failure law does not apply");
  if (q.job && !allowed.count("job")) throw ConfigError("analytic " + q.query + ": job law does not apply");
  return q;
}

int run_analytic(const Options& o) {
  const auto q = analytic_request(o);
  const std::string yaml = config::emit_yaml({q});
  json result = evaluate(q);
  std::cout << result.dump(2) << "\n";
  io::write_text(fs::path(o.out) / "resolved_config.yaml", yaml);
  io::write_text(fs::path(o.out) / "analytic.json", result.dump(2) + "\n");
  json manifest = io::base_manifest("analytic", yaml);
  manifest["result"] = result;
  io::write_manifest(o.out, manifest);
  return 0;
}

config::RunConfig load(const Options& o, config::Kind expected) {
  if (o.config.empty()) throw ConfigError("--config is required");
  auto cfg = config::parse_config_file(o.config);
  if (cfg.kind() != expected)
    throw ConfigError(o.config + ": expected kind: " + config::kind_name(expected) + ", got " +
                      config::kind_name(cfg.kind()));
  return cfg;
}

int run_simulate(const Options& o) {
  auto cfg = load(o, config::Kind::Simulate);
  auto& req = std::get<config::SimulateRequest>(cfg.body);
  if (o.seed) req.sim.master_seed = *o.seed;
  if (o.horizon) req.sim.horizon = *o.horizon;
  if (o.replicas) req.replicas = *o.replicas;
  if (o.trace_stride) req.sim.trace_stride = *o.trace_stride;
  req.sim.validate();
  const std::string yaml = config::emit_yaml(cfg);
  const fs::path out(o.out);

  const auto rep = replicate_runs(req.sim, req.replicas, {o.jobs, true, req.rule});
  auto summary = io::open_out(out / "summary.jsonl");
  json seeds = json::array();
  for (std::size_t k = 0; k < rep.outputs.size(); ++k) {
    const auto& r = rep.summary.replicas[k];
    const fs::path dir = out / io::replica_dir(k);
    io::write_trajectory_csv(dir / "trajectory.csv", rep.outputs[k].trajectory);
    io::write_jobs_csv(dir / "jobs.csv", rep.outputs[k].jobs);
    json rec = {{"record", "replica"}};
    rec.update(io::replica_json(r));
    io::append_jsonl(summary, rec);
    seeds.push_back(r.seed);
  }
  json merged = {{"record", "merged"}};
  merged.update(io::merged_json(rep.summary));
  io::append_jsonl(summary, merged);
  io::write_text(out / "resolved_config.yaml", yaml);
  json manifest = io::base_manifest("simulate", yaml);
  manifest["master_seed"] = req.sim.master_seed;
  manifest["replica_seeds"] = seeds;
  io::write_manifest(out, manifest);
  std::cout << merged.dump(2) << "\n";
  return 0;
}

int run_transient(const Options& o) {
  auto cfg = load(o, config::Kind::Transient);
  auto& req = std::get<config::TransientRequest>(cfg.body);
  if (o.seed) req.seed = *o.seed;
  if (o.samples) req.samples = *o.samples;
  if (!o.window.empty()) req.window = window_from_text(o.window);
  const std::string yaml = config::emit_yaml(cfg);
  const fs::path out(o.out);

  const auto s = transient_samples(req.tcase, req.samples, req.seed, o.jobs, req.event_cap);
  std::optional<TailEstimate> tail;
  std::string tail_error;
  if (s.theta.size() >= 1000) {
    try {
      tail = estimate_tail_index(s.theta, req.window);
    } catch (const EstimationError& e) {
      tail_error = e.what();
    }
  } else {
    tail_error = "fewer than 1000 samples: no tail estimate";
  }
  io::write_samples_csv(out / "samples.csv", s.theta);
  io::write_ccdf_csv(out / "ccdf.csv", s.theta);
  json rec = {{"record", "transient"}};
  rec.update(io::transient_json(s, tail, tail_error));
  auto summary = io::open_out(out / "summary.jsonl");
  io::append_jsonl(summary, rec);
  io::write_text(out / "resolved_config.yaml", yaml);
  json manifest = io::base_manifest("transient", yaml);
  manifest["master_seed"] = req.seed;
  manifest["sample_seeds"] = "derive_seed(master_seed, k)";
  io::write_manifest(out, manifest);
  std::cout << rec.dump(2) << "\n";
  return 0;
}

int run_experiment(const Options& o, fs::path& manifest_dir) {
  ScenarioSpec spec;
  if (!o.config.empty()) {
    spec = std::get<ScenarioSpec>(load(o, config::Kind::Experiment).body);
    if (!o.scenario.empty() && o.scenario != spec.id)
      throw ConfigError("scenario on the command line differs from config");
  } else {
    spec.id = o.scenario;
  }
  if (spec.id.empty()) throw ConfigError("experiment: scenario id required");
  scenario_defaults(spec.id);  // rejects unknown ids
  manifest_dir = fs::path(o.out) / spec.id;
  if (o.seed) spec.master_seed = *o.seed;
  if (o.horizon) spec.horizon = *o.horizon;
  if (o.replicas) spec.replicas = *o.replicas;
  if (o.samples) spec.samples = *o.samples;
  if (o.trace_stride) spec.trace_stride = *o.trace_stride;
  if (!o.grid.empty()) spec.grid = o.grid;
  if (!o.window.empty()) spec.window = window_from_text(o.window);
  for (const auto& kv : o.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--param expects KEY=VALUE, got '" + kv + "'");
    char* end = nullptr;
    const std::string val = kv.substr(eq + 1);
    const double v = std::strtod(val.c_str(), &end);
    if (val.empty() || *end != '\0') throw ConfigError("--param " + kv + ": value is not a number");
    spec.params[kv.substr(0, eq)] = v;
  }
  const ResolvedScenario rs = resolve_scenario(spec);
  const std::string yaml = config::emit_yaml({rs.spec});
  const ScenarioResult res = execute_scenario(rs, o.jobs, true);
  io::write_scenario_dataset(o.out, rs, res, yaml);

  for (const auto& s : res.sims)
    std::cout << s.series->name << ": saturated " << s.rep.summary.saturated << "/" << s.rep.summary.replicas.size()
              << ", departures " << s.rep.summary.departures.mean << ", throughput "
              << s.rep.summary.throughput.mean << ", utilization " << s.rep.summary.utilization.mean << "\n";
  for (const auto& t : res.transients) {
    std::cout << t.series->name << ": ";
    if (t.tail) std::cout << "slope " << t.tail->slope << " +- " << t.tail->std_error;
    else std::cout << t.tail_error;
    if (t.samples.truncated) std::cout << " (" << t.samples.truncated << " truncated)";
    std::cout << "\n";
  }
  std::cout << "dataset: " << manifest_dir.string() << "\n";
  return 0;
}

int run_tail(const Options& o) {
  const auto samples = io::read_samples_csv(o.input);
  const TailWindow w = o.window.empty() ? TailWindow{} : window_from_text(o.window);
  const auto est = estimate_tail_index(samples, w);
  json rec = io::tail_json(est);
  rec["input"] = o.input;
  std::cout << rec.dump(2) << "\n";
  io::write_text(fs::path(o.out) / "tail.json", rec.dump(2) + "\n");
  json manifest = io::base_manifest("tail", "");
  manifest.erase("config");
  manifest["input"] = o.input;
  manifest["window"] = {w.lower, w.upper};
  io::write_manifest(o.out, manifest);
  return 0;
}

void write_error_manifest(const fs::path& dir, const std::string& kind, const std::string& msg, int code) {
  try {
    json m = io::base_manifest(kind, "");
    m["status"] = "error";
    m["exit_code"] = code;
    m["error"] = msg;
    io::write_manifest(dir, m);
  } catch (...) {
    // the output directory itself is unusable; the diagnostic on stderr stands
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and analysis of queues whose service restarts after channel failures"};
  app.set_version_flag("--version", std::string(RESTARTQ_VERSION));
  app.require_subcommand(1);
  Options o;
  app.add_option("-o,--out", o.out, "Output directory")->capture_default_str();
  app.add_option("-j,--jobs", o.jobs, "Worker threads for replicas and samples (results do not depend on it)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();

  auto* analytic = app.add_subcommand("analytic", "Closed-form quantities");
  analytic->add_option("query", o.query, "stability | restarts | service | throughput | order_statistic | tail_index");
  analytic->add_option("-c,--config", o.config, "YAML file with kind: analytic");
  analytic->add_option("--failure", o.failure_text, "Failure law, e.g. '{family: weibull, scale: 2, shape: 0.5}'");
  analytic->add_option("--mu", o.mu, "Exponential failure rate");
  analytic->add_option("--job", o.job_text, "Job size law");
  analytic->add_option("--beta", o.beta, "Fixed job size");
  analytic->add_option("--lambda", o.lambda, "Arrival rate");
  analytic->add_option("--B", o.size_b, "Job size for the throughput bound");
  analytic->add_option("--queue-cap", o.queue_cap, "Queue capacity");
  analytic->add_option("--m", o.m, "Number of jobs");
  analytic->add_option("--i", o.i, "Order statistic index");
  analytic->add_option("--x", o.x, "Point at which to evaluate");
  analytic->add_option("--alpha", o.alpha, "Hazard proportionality index");
  analytic->add_option("--gamma", o.gamma, "Weibull shape of the job law");
  analytic->add_option("--policy", o.policy, "fcfs | ps");

  auto* simulate_cmd = app.add_subcommand("simulate", "Steady-state simulation with arrivals");
  simulate_cmd->add_option("-c,--config", o.config, "YAML file with kind: simulate")->required();
  simulate_cmd->add_option("--seed", o.seed, "Master seed override");
  simulate_cmd->add_option("--horizon", o.horizon, "Horizon override");
  simulate_cmd->add_option("--replicas", o.replicas, "Replica count override");
  simulate_cmd->add_option("--trace-stride", o.trace_stride, "Minimum time between trace points");

  auto* transient = app.add_subcommand("transient", "Completion time of a batch with no arrivals");
  transient->add_option("-c,--config", o.config, "YAML file with kind: transient")->required();
  transient->add_option("--seed", o.seed, "Master seed override");
  transient->add_option("--samples", o.samples, "Sample count override");
  transient->add_option("--window", o.window, "Tail window LOWER,UPPER as CDF levels");

  auto* experiment = app.add_subcommand("experiment", "Run a catalog scenario and write its dataset");
  experiment->add_option("scenario", o.scenario, "Scenario id");
  experiment->add_option("-c,--config", o.config, "YAML file with kind: experiment");
  experiment->add_option("--seed", o.seed, "Master seed");
  experiment->add_option("--horizon", o.horizon, "Horizon");
  experiment->add_option("--replicas", o.replicas, "Replicas per series");
  experiment->add_option("--samples", o.samples, "Transient samples per series");
  experiment->add_option("--trace-stride", o.trace_stride, "Minimum time between trace points");
  experiment->add_option("--grid", o.grid, "Values of the scenario's swept parameter")->delimiter(',');
  experiment->add_option("--param", o.params, "Scenario parameter KEY=VALUE (repeatable)");
  experiment->add_option("--window", o.window, "Tail window LOWER,UPPER as CDF levels");

  auto* tail = app.add_subcommand("tail", "Fit a power-law tail to samples");
  tail->add_option("-i,--input", o.input, "CSV file; the first column holds the samples")->required();
  tail->add_option("--window", o.window, "Window LOWER,UPPER as CDF levels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string kind = app.get_subcommands().front()->get_name();
  fs::path manifest_dir = o.out;
  auto fail = [&](const std::exception& e, int code) {
    std::cerr << "restartq " << kind << ": " << e.what() << "\n";
    write_error_manifest(manifest_dir, kind, e.what(), code);
    return code;
  };
  try {
    if (kind == "analytic") return run_analytic(o);
    if (kind == "simulate") return run_simulate(o);
    if (kind == "transient") return run_transient(o);
    if (kind == "experiment") return run_experiment(o, manifest_dir);
    return run_tail(o);
  } catch (const ConfigError& e) {
    return fail(e, 2);
  } catch (const EstimationError& e) {
    return fail(e, 4);
  } catch (const RuntimeError& e) {
    return fail(e, 3);
  } catch (const std::out_of_range& e) {
    return fail(e, 3);
  } catch (const std::exception& e) {
    return fail(e, 3);
  }
}
