// config.hpp - YAML run descriptions. Parsing is strict: unknown keys, wrong
// node types and bad values are rejected with the file position. emit_yaml()
// writes the fully resolved form, which parses back to the same run.
//
// Needs yaml-cpp (target restartq::io).

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "restartq/experiments.hpp"

namespace restartq::config {

enum class Kind { Simulate, Transient, Experiment, Analytic };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Simulate: return "simulate";
    case Kind::Transient: return "transient";
    case Kind::Experiment: return "experiment";
    case Kind::Analytic: return "analytic";
  }
  return "?";
}

struct SimulateRequest {
  SimConfig sim;
  std::uint64_t replicas = 1;
  SaturationRule rule;
};

struct TransientRequest {
  TransientCase tcase;
  std::uint64_t samples = 1;
  std::uint64_t seed = 1;
  std::uint64_t event_cap = 10'000'000;
  TailWindow window;
};

struct AnalyticRequest {
  std::string query;
  std::optional<DistSpec> failure;
  std::optional<DistSpec> job;
  std::map<std::string, double> values;
  std::string policy;  // tail_index only
};

struct RunConfig {
  std::variant<SimulateRequest, TransientRequest, ScenarioSpec, AnalyticRequest> body;
  Kind kind() const { return static_cast<Kind>(body.index()); }
};

// Shortest decimal text that reads back to the same double.
inline std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const auto m = n.Mark();
    std::ostringstream os;
    os << origin_;
    if (m.line >= 0) os << ":" << (m.line + 1) << ":" << (m.column + 1);
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void expect_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& what, const std::set<std::string>& allowed) const {
    expect_map(n, what);
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  YAML::Node require(const YAML::Node& n, const std::string& key, const std::string& what) const {
    const YAML::Node v = n[key];
    if (!v) fail(n, what + ": missing required key '" + key + "'");
    return v;
  }

  double real(const YAML::Node& v, const std::string& key) const {
    if (!v.IsScalar()) fail(v, "'" + key + "' must be a number");
    const auto text = v.Scalar();
    double out = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc() || res.ptr != last) {
      if (text == ".inf" || text == "inf") return kInf;
      fail(v, "'" + key + "' must be a number, got '" + text + "'");
    }
    return out;
  }

  std::uint64_t count(const YAML::Node& v, const std::string& key) const {
    if (!v.IsScalar()) fail(v, "'" + key + "' must be a non-negative integer");
    std::uint64_t out = 0;
    const auto& text = v.Scalar();
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec == std::errc() && res.ptr == text.data() + text.size()) return out;
    const double d = real(v, key);  // accept 1e5 and friends
    if (!(d >= 0.0 && d == std::floor(d) && d <= 9007199254740992.0))
      fail(v, "'" + key + "' must be a non-negative integer");
    return static_cast<std::uint64_t>(d);
  }

  std::string text(const YAML::Node& v, const std::string& key) const {
    if (!v.IsScalar()) fail(v, "'" + key + "' must be a string");
    return v.Scalar();
  }

  std::vector<double> reals(const YAML::Node& v, const std::string& key) const {
    if (!v.IsSequence()) fail(v, "'" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(real(e, key));
    return out;
  }

  template <class F>
  auto guarded(const YAML::Node& n, F&& f) const -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(origin_, 0) == 0) throw;
      fail(n, msg);
    }
  }

  DistSpec law(const YAML::Node& n, const std::string& what) const {
    expect_map(n, what);
    const auto family = text(require(n, "family", what), "family");
    auto p = [&](const char* key) { return real(require(n, key, what), key); };
    return guarded(n, [&]() -> DistSpec {
      if (family == "deterministic") {
        check_keys(n, what, {"family", "value"});
        return DistSpec::deterministic(p("value"));
      }
      if (family == "exponential") {
        check_keys(n, what, {"family", "rate"});
        return DistSpec::exponential(p("rate"));
      }
      if (family == "weibull") {
        check_keys(n, what, {"family", "scale", "shape"});
        return DistSpec::weibull(p("scale"), p("shape"));
      }
      if (family == "pareto") {
        check_keys(n, what, {"family", "scale", "index"});
        return DistSpec::pareto(p("scale"), p("index"));
      }
      if (family == "uniform") {
        check_keys(n, what, {"family", "lower", "upper"});
        return DistSpec::uniform(p("lower"), p("upper"));
      }
      fail(n["family"], "unknown distribution family '" + family + "'");
    });
  }

  Policy policy(const YAML::Node& root) const {
    const YAML::Node pn = root["policy"];
    const std::string name = pn ? text(pn, "policy") : "fcfs";
    const YAML::Node wn = root["weights"];
    if (wn && name != "dps") fail(wn, "'weights' is only valid with policy dps");
    if (name == "fcfs") return Policy::fcfs();
    if (name == "fcfs_idle") return Policy::fcfs_idle();
    if (name == "ps") return Policy::ps();
    if (name == "ps_idle") return Policy::ps_idle();
    if (name == "dps") {
      if (!wn) fail(root, "policy dps: missing required key 'weights'");
      return guarded(wn, [&] { return Policy::dps(reals(wn, "weights")); });
    }
    fail(pn, "unknown policy '" + name + "'");
  }

  StartMode start(const YAML::Node& n) const {
    if (!n) return StartMode::Fresh;
    const auto s = text(n, "start");
    if (s == "fresh") return StartMode::Fresh;
    if (s == "stationary") return StartMode::StationaryExcess;
    fail(n, "start must be 'fresh' or 'stationary'");
  }

  TailWindow window(const YAML::Node& n) const {
    if (!n) return {};
    const auto w = reals(n, "window");
    if (w.size() != 2 || !(0.0 < w[0] && w[0] < w[1] && w[1] < 1.0))
      fail(n, "window must be [lower, upper] with 0 < lower < upper < 1");
    return {w[0], w[1]};
  }

 private:
  std::string origin_;
};

inline SimulateRequest parse_simulate(const Reader& rd, const YAML::Node& root) {
  rd.check_keys(root, "simulate config",
                {"kind", "seed", "horizon", "replicas", "policy", "weights", "arrival", "jobs", "failure",
                 "queue_cap", "trace_stride", "event_cap", "saturation"});
  SimulateRequest req;
  SimConfig& c = req.sim;
  if (root["seed"]) c.master_seed = rd.count(root["seed"], "seed");
  c.horizon = rd.real(rd.require(root, "horizon", "simulate config"), "horizon");
  if (root["replicas"]) req.replicas = rd.count(root["replicas"], "replicas");
  if (req.replicas < 1) rd.fail(root["replicas"], "replicas must be >= 1");
  c.policy = rd.policy(root);

  const YAML::Node an = root["arrival"];
  if (!an) rd.fail(root, "arrival rate required: steady-state runs need an 'arrival' section");
  rd.check_keys(an, "arrival", {"process", "rate", "interarrival"});
  const std::string process = an["process"] ? rd.text(an["process"], "process") : "poisson";
  if (process == "poisson") {
    if (an["interarrival"]) rd.fail(an["interarrival"], "'interarrival' is only valid for renewal arrivals");
    if (!an["rate"]) rd.fail(an, "arrival rate required");
    const double rate = rd.real(an["rate"], "rate");
    c.arrival = rd.guarded(an["rate"], [&] { return ArrivalSpec::poisson(rate); });
  } else if (process == "renewal") {
    if (an["rate"]) rd.fail(an["rate"], "renewal arrivals take 'interarrival', not 'rate'");
    c.arrival = ArrivalSpec::renewal(rd.law(rd.require(an, "interarrival", "arrival"), "interarrival"));
  } else {
    rd.fail(an["process"], "process must be 'poisson' or 'renewal'");
  }

  const YAML::Node jn = rd.require(root, "jobs", "simulate config");
  rd.check_keys(jn, "jobs", {"size", "classes", "header", "fragment_payload"});
  c.jobs.size = rd.law(rd.require(jn, "size", "jobs"), "jobs.size");
  if (jn["classes"]) c.jobs.class_probs = rd.reals(jn["classes"], "classes");
  if (jn["header"]) c.jobs.header = rd.real(jn["header"], "header");
  if (jn["fragment_payload"]) c.fragment_payload = rd.real(jn["fragment_payload"], "fragment_payload");

  const YAML::Node fn = rd.require(root, "failure", "simulate config");
  rd.check_keys(fn, "failure", {"law", "start"});
  c.failure = rd.law(rd.require(fn, "law", "failure"), "failure.law");
  c.start_mode = rd.start(fn["start"]);

  if (root["queue_cap"]) c.queue_cap = rd.count(root["queue_cap"], "queue_cap");
  if (root["trace_stride"]) c.trace_stride = rd.real(root["trace_stride"], "trace_stride");
  if (root["event_cap"]) c.event_cap = rd.count(root["event_cap"], "event_cap");
  if (const YAML::Node sn = root["saturation"]) {
    rd.check_keys(sn, "saturation", {"guard", "growth"});
    if (sn["guard"]) req.rule.guard = rd.real(sn["guard"], "guard");
    if (sn["growth"]) req.rule.growth = rd.real(sn["growth"], "growth");
    if (!(req.rule.guard > 0.0 && req.rule.guard < 1.0)) rd.fail(sn, "saturation.guard must be in (0, 1)");
    if (!(req.rule.growth >= 1.0)) rd.fail(sn, "saturation.growth must be >= 1");
  }
  rd.guarded(root, [&] {
    c.validate();
    return 0;
  });
  return req;
}

inline TransientRequest parse_transient(const Reader& rd, const YAML::Node& root) {
  rd.check_keys(root, "transient config",
                {"kind", "seed", "policy", "weights", "failure", "jobs", "samples", "event_cap", "window"});
  TransientRequest req;
  if (root["seed"]) req.seed = rd.count(root["seed"], "seed");
  req.tcase.policy = rd.policy(root);
  if (req.tcase.policy.kind == PolicyKind::DPS) rd.fail(root["policy"], "transient runs support fcfs, fcfs_idle, ps, ps_idle");

  const YAML::Node fn = rd.require(root, "failure", "transient config");
  rd.check_keys(fn, "failure", {"law", "start"});
  req.tcase.failure = rd.law(rd.require(fn, "law", "failure"), "failure.law");
  req.tcase.start_mode = rd.start(fn["start"]);

  const YAML::Node jn = rd.require(root, "jobs", "transient config");
  rd.check_keys(jn, "jobs", {"size", "count", "sizes"});
  if (jn["sizes"]) {
    if (jn["size"] || jn["count"]) rd.fail(jn, "jobs: give either 'sizes' or 'size' with 'count'");
    req.tcase.fixed_sizes = rd.reals(jn["sizes"], "sizes");
    if (req.tcase.fixed_sizes.empty()) rd.fail(jn["sizes"], "jobs.sizes must not be empty");
    for (double s : req.tcase.fixed_sizes)
      if (!(s > 0.0 && std::isfinite(s))) rd.fail(jn["sizes"], "jobs.sizes must be > 0");
    req.tcase.m = static_cast<unsigned>(req.tcase.fixed_sizes.size());
  } else {
    req.tcase.job = rd.law(rd.require(jn, "size", "jobs"), "jobs.size");
    const auto m = rd.count(rd.require(jn, "count", "jobs"), "count");
    if (m < 1 || m > 1'000'000) rd.fail(jn["count"], "jobs.count must be in [1, 1e6]");
    req.tcase.m = static_cast<unsigned>(m);
  }
  if (root["samples"]) req.samples = rd.count(root["samples"], "samples");
  if (req.samples < 1) rd.fail(root["samples"], "samples must be >= 1");
  if (root["event_cap"]) req.event_cap = rd.count(root["event_cap"], "event_cap");
  req.window = rd.window(root["window"]);
  return req;
}

inline ScenarioSpec parse_experiment(const Reader& rd, const YAML::Node& root) {
  rd.check_keys(root, "experiment config",
                {"kind", "scenario", "seed", "horizon", "replicas", "samples", "grid", "trace_stride", "params",
                 "window", "event_cap"});
  ScenarioSpec s;
  s.id = rd.text(rd.require(root, "scenario", "experiment config"), "scenario");
  if (root["seed"]) s.master_seed = rd.count(root["seed"], "seed");
  if (root["horizon"]) s.horizon = rd.real(root["horizon"], "horizon");
  if (root["replicas"]) s.replicas = rd.count(root["replicas"], "replicas");
  if (root["samples"]) s.samples = rd.count(root["samples"], "samples");
  if (root["grid"]) s.grid = rd.reals(root["grid"], "grid");
  if (root["trace_stride"]) s.trace_stride = rd.real(root["trace_stride"], "trace_stride");
  if (root["event_cap"]) s.event_cap = rd.count(root["event_cap"], "event_cap");
  s.window = rd.window(root["window"]);
  if (const YAML::Node pn = root["params"]) {
    rd.expect_map(pn, "params");
    for (const auto& kv : pn) s.params[kv.first.as<std::string>()] = rd.real(kv.second, kv.first.as<std::string>());
  }
  // Resolve once here so that every semantic error carries a position.
  rd.guarded(root, [&] { return resolve_scenario(s).sims.size(); });
  return s;
}

inline const std::map<std::string, std::set<std::string>>& analytic_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"stability", {"failure", "beta", "lambda"}},
      {"restarts", {"failure", "beta", "job"}},
      {"service", {"failure", "beta"}},
      {"throughput", {"lambda", "mu", "B", "queue_cap"}},
      {"order_statistic", {"job", "m", "i", "x"}},
      {"tail_index", {"alpha", "gamma", "m", "policy"}},
  };
  return keys;
}

inline AnalyticRequest parse_analytic(const Reader& rd, const YAML::Node& root) {
  AnalyticRequest req;
  req.query = rd.text(rd.require(root, "query", "analytic config"), "query");
  const auto it = analytic_keys().find(req.query);
  if (it == analytic_keys().end()) rd.fail(root["query"], "unknown analytic query '" + req.query + "'");
  std::set<std::string> allowed = it->second;
  allowed.insert({"kind", "query"});
  rd.check_keys(root, "analytic config", allowed);
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "kind" || key == "query") continue;
    if (key == "failure") req.failure = rd.law(kv.second, "failure");
    else if (key == "job") req.job = rd.law(kv.second, "job");
    else if (key == "policy") req.policy = rd.text(kv.second, "policy");
    else req.values[key] = rd.real(kv.second, key);
  }
  return req;
}

// ---- emission ----

inline void emit_law(YAML::Emitter& e, const DistSpec& d) {
  e << YAML::Flow << YAML::BeginMap << YAML::Key << "family" << YAML::Value << family_name(d.family());
  d.visit([&](const Deterministic& x) { e << YAML::Key << "value" << YAML::Value << num(x.value); },
          [&](const Exponential& x) { e << YAML::Key << "rate" << YAML::Value << num(x.rate); },
          [&](const Weibull& x) {
            e << YAML::Key << "scale" << YAML::Value << num(x.scale) << YAML::Key << "shape" << YAML::Value
              << num(x.shape);
          },
          [&](const Pareto& x) {
            e << YAML::Key << "scale" << YAML::Value << num(x.scale) << YAML::Key << "index" << YAML::Value
              << num(x.index);
          },
          [&](const Uniform& x) {
            e << YAML::Key << "lower" << YAML::Value << num(x.lower) << YAML::Key << "upper" << YAML::Value
              << num(x.upper);
          });
  e << YAML::EndMap;
}

inline void emit_reals(YAML::Emitter& e, const std::vector<double>& xs) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : xs) e << num(x);
  e << YAML::EndSeq;
}

inline void emit_policy(YAML::Emitter& e, const Policy& p) {
  e << YAML::Key << "policy" << YAML::Value << policy_name(p.kind);
  if (p.kind == PolicyKind::DPS) {
    e << YAML::Key << "weights" << YAML::Value;
    emit_reals(e, p.weights);
  }
}

inline void emit_failure(YAML::Emitter& e, const DistSpec& law, StartMode mode) {
  e << YAML::Key << "failure" << YAML::Value << YAML::BeginMap << YAML::Key << "law" << YAML::Value;
  emit_law(e, law);
  e << YAML::Key << "start" << YAML::Value << (mode == StartMode::Fresh ? "fresh" : "stationary") << YAML::EndMap;
}

inline void emit_window(YAML::Emitter& e, const TailWindow& w) {
  e << YAML::Key << "window" << YAML::Value;
  emit_reals(e, {w.lower, w.upper});
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << origin << ":" << (e.mark.line + 1) << ":" << (e.mark.column + 1) << ": parse error: " << e.msg;
    throw ConfigError(os.str());
  }
  const detail::Reader rd(origin);
  if (!root || root.IsNull()) throw ConfigError(origin + ": empty config");
  rd.expect_map(root, "config");
  const auto kind = rd.text(rd.require(root, "kind", "config"), "kind");
  if (kind == "simulate") return {detail::parse_simulate(rd, root)};
  if (kind == "transient") return {detail::parse_transient(rd, root)};
  if (kind == "experiment") return {detail::parse_experiment(rd, root)};
  if (kind == "analytic") return {detail::parse_analytic(rd, root)};
  rd.fail(root["kind"], "kind must be one of simulate, transient, experiment, analytic");
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

// Fully resolved YAML for a run. Experiments are written with the scenario's
// defaults filled in.
inline std::string emit_yaml(const RunConfig& cfg) {
  using namespace detail;
  YAML::Emitter e;
  e << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << kind_name(cfg.kind());
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, SimulateRequest>) {
          const SimConfig& c = body.sim;
          e << YAML::Key << "seed" << YAML::Value << c.master_seed;
          e << YAML::Key << "horizon" << YAML::Value << num(c.horizon);
          e << YAML::Key << "replicas" << YAML::Value << body.replicas;
          emit_policy(e, c.policy);
          e << YAML::Key << "arrival" << YAML::Value << YAML::BeginMap;
          if (c.arrival->is_poisson()) {
            e << YAML::Key << "process" << YAML::Value << "poisson" << YAML::Key << "rate" << YAML::Value
              << num(c.arrival->poisson_rate());
          } else {
            e << YAML::Key << "process" << YAML::Value << "renewal" << YAML::Key << "interarrival" << YAML::Value;
            emit_law(e, c.arrival->interarrival());
          }
          e << YAML::EndMap;
          e << YAML::Key << "jobs" << YAML::Value << YAML::BeginMap << YAML::Key << "size" << YAML::Value;
          emit_law(e, c.jobs.size);
          e << YAML::Key << "classes" << YAML::Value;
          emit_reals(e, c.jobs.class_probs);
          e << YAML::Key << "header" << YAML::Value << num(c.jobs.header);
          if (c.fragment_payload) e << YAML::Key << "fragment_payload" << YAML::Value << num(*c.fragment_payload);
          e << YAML::EndMap;
          emit_failure(e, c.failure, c.start_mode);
          if (c.queue_cap) e << YAML::Key << "queue_cap" << YAML::Value << *c.queue_cap;
          e << YAML::Key << "trace_stride" << YAML::Value << num(c.trace_stride);
          e << YAML::Key << "event_cap" << YAML::Value << c.event_cap;
          e << YAML::Key << "saturation" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "guard"
            << YAML::Value << num(body.rule.guard) << YAML::Key << "growth" << YAML::Value << num(body.rule.growth)
            << YAML::EndMap;
        } else if constexpr (std::is_same_v<T, TransientRequest>) {
          e << YAML::Key << "seed" << YAML::Value << body.seed;
          emit_policy(e, body.tcase.policy);
          emit_failure(e, body.tcase.failure, body.tcase.start_mode);
          e << YAML::Key << "jobs" << YAML::Value << YAML::BeginMap;
          if (!body.tcase.fixed_sizes.empty()) {
            e << YAML::Key << "sizes" << YAML::Value;
            emit_reals(e, body.tcase.fixed_sizes);
          } else {
            e << YAML::Key << "size" << YAML::Value;
            emit_law(e, body.tcase.job);
            e << YAML::Key << "count" << YAML::Value << body.tcase.m;
          }
          e << YAML::EndMap;
          e << YAML::Key << "samples" << YAML::Value << body.samples;
          e << YAML::Key << "event_cap" << YAML::Value << body.event_cap;
          emit_window(e, body.window);
        } else if constexpr (std::is_same_v<T, ScenarioSpec>) {
          const ScenarioSpec s = resolve_scenario(body).spec;
          e << YAML::Key << "scenario" << YAML::Value << s.id;
          e << YAML::Key << "seed" << YAML::Value << s.master_seed;
          if (s.horizon) e << YAML::Key << "horizon" << YAML::Value << num(*s.horizon);
          if (s.replicas) e << YAML::Key << "replicas" << YAML::Value << *s.replicas;
          if (s.trace_stride) e << YAML::Key << "trace_stride" << YAML::Value << num(*s.trace_stride);
          if (s.samples) e << YAML::Key << "samples" << YAML::Value << *s.samples;
          if (s.grid) {
            e << YAML::Key << "grid" << YAML::Value;
            emit_reals(e, *s.grid);
          }
          e << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
          for (const auto& [k, v] : s.params) e << YAML::Key << k << YAML::Value << num(v);
          e << YAML::EndMap;
          emit_window(e, s.window);
          e << YAML::Key << "event_cap" << YAML::Value << s.event_cap;
        } else {
          e << YAML::Key << "query" << YAML::Value << body.query;
          if (body.failure) {
            e << YAML::Key << "failure" << YAML::Value;
            emit_law(e, *body.failure);
          }
          if (body.job) {
            e << YAML::Key << "job" << YAML::Value;
            emit_law(e, *body.job);
          }
          if (!body.policy.empty()) e << YAML::Key << "policy" << YAML::Value << body.policy;
          for (const auto& [k, v] : body.values) e << YAML::Key << k << YAML::Value << num(v);
        }
      },
      cfg.body);
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace restartq::config
