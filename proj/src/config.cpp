#include "clab/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace clab {

namespace {

class Reader {
 public:
  explicit Reader(std::string name) : name_(std::move(name)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    std::ostringstream os;
    os << name_;
    if (n.IsDefined() && n.Mark().line >= 0) os << ":" << n.Mark().line + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  void check_keys(const YAML::Node& map, const std::string& section,
                  const std::set<std::string>& allowed) const {
    if (!map.IsMap()) fail(map, "section '" + section + "' must be a mapping");
    for (auto it = map.begin(); it != map.end(); ++it) {
      const std::string key = it->first.as<std::string>();
      if (!allowed.count(key)) {
        fail(it->first, "unknown key '" + key + "'" +
                            (section.empty() ? std::string() : " in section '" + section + "'"));
      }
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "cannot read " + what + " from '" + n.Scalar() + "'");
    }
  }

  template <class T>
  std::vector<T> list(const YAML::Node& n, const std::string& what) const {
    std::vector<T> out;
    if (n.IsScalar()) {
      out.push_back(scalar<T>(n, what));
    } else if (n.IsSequence()) {
      for (const auto& e : n) out.push_back(scalar<T>(e, what));
    } else {
      fail(n, what + " must be a scalar or a list");
    }
    if (out.empty()) fail(n, what + " must not be empty");
    return out;
  }

 private:
  std::string name_;
};

const std::map<std::string, ExperimentKind>& kinds() {
  static const std::map<std::string, ExperimentKind> k{
      {"correctors", ExperimentKind::Correctors},
      {"moments", ExperimentKind::Moments},
      {"green-decay", ExperimentKind::GreenDecay},
      {"effective", ExperimentKind::Effective},
      {"twoscale-rates", ExperimentKind::TwoscaleRates},
      {"bias-identities", ExperimentKind::BiasIdentities},
      {"sensitivity", ExperimentKind::Sensitivity},
      {"order3", ExperimentKind::Order3}};
  return k;
}

void gate_warnings(ExperimentConfig& c) {
  auto warn = [&](const std::string& s) { c.warnings.push_back("dimension gate: " + s); };
  switch (c.kind) {
    case ExperimentKind::Correctors:
    case ExperimentKind::Moments:
      if (c.order == 1 && c.d < 3) warn("first correctors are stationary only for d >= 3");
      if (c.order == 2 && c.d < 3) warn("grad psi_2 is stationary only for d >= 3");
      if (c.order == 2 && c.d < 5) warn("psi_2 itself is stationary only for d >= 5");
      break;
    case ExperimentKind::TwoscaleRates:
      for (int o : c.orders) {
        if (o == 1 && c.d < 3) warn("the o(eps) first-order rate is claimed for d >= 3");
        if (o == 2 && c.d < 5) warn("the o(eps^2) second-order rate is claimed for d >= 5");
      }
      break;
    case ExperimentKind::Order3:
      if (c.d < 5) warn("third correctors are built without a stationarity guarantee for d < 5");
      break;
    case ExperimentKind::GreenDecay:
      if (c.d < 3) warn("Green-function decay exponents are calibrated for d >= 3");
      break;
    default:
      break;
  }
}

}  // namespace

std::string kind_name(ExperimentKind k) {
  for (const auto& [name, v] : kinds()) {
    if (v == k) return name;
  }
  return "?";
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& name) {
  Reader r(name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(name + ": top level must be a mapping");
  r.check_keys(root, "", {"version", "experiment", "output", "ensemble", "geometry", "solver",
                          "statistics", "macro", "export_fields"});

  ExperimentConfig c;
  c.text = text;
  if (!root["version"]) throw ConfigError(name + ": missing key 'version'");
  c.version = r.scalar<int>(root["version"], "version");
  if (c.version != 1) r.fail(root["version"], "unsupported config version " + std::to_string(c.version));
  if (!root["experiment"]) throw ConfigError(name + ": missing key 'experiment'");
  {
    const std::string k = r.scalar<std::string>(root["experiment"], "experiment");
    auto it = kinds().find(k);
    if (it == kinds().end()) r.fail(root["experiment"], "unknown experiment '" + k + "'");
    c.kind = it->second;
  }
  if (root["output"]) c.output = r.scalar<std::string>(root["output"], "output");
  if (root["export_fields"]) c.export_fields = r.scalar<bool>(root["export_fields"], "export_fields");

  if (const YAML::Node e = root["ensemble"]) {
    r.check_keys(e, "ensemble", {"law", "lo", "hi", "delta", "p1", "p2", "weight", "width",
                                 "alpha", "beta", "value", "seed"});
    ConductanceLaw& law = c.ensemble.law;
    const std::string kind = e["law"] ? r.scalar<std::string>(e["law"], "law") : "uniform";
    auto num = [&](const char* key, double& dst) {
      if (e[key]) dst = r.scalar<double>(e[key], key);
    };
    if (kind == "uniform") {
      law.kind = ConductanceLaw::Kind::Uniform;
    } else if (kind == "two-point") {
      law.kind = ConductanceLaw::Kind::TwoPointSmoothed;
    } else if (kind == "beta") {
      law.kind = ConductanceLaw::Kind::BetaRescaled;
    } else if (kind == "constant") {
      law.kind = ConductanceLaw::Kind::Constant;
      law.delta = 0.0;
    } else {
      r.fail(e["law"], "unknown law '" + kind + "' (uniform, two-point, beta, constant)");
    }
    const std::pair<const char*, double*> fields[] = {
        {"lo", &law.lo},       {"hi", &law.hi},       {"delta", &law.delta},
        {"p1", &law.p1},       {"p2", &law.p2},       {"weight", &law.weight},
        {"width", &law.width}, {"alpha", &law.alpha}, {"beta", &law.beta},
        {"value", &law.value}};
    for (const auto& [key, dst] : fields) num(key, *dst);
    if (e["seed"]) c.ensemble.seeds.master = r.scalar<std::uint64_t>(e["seed"], "seed");
    try {
      law.validate();
    } catch (const std::exception& ex) {
      r.fail(e, ex.what());
    }
  }

  if (const YAML::Node g = root["geometry"]) {
    r.check_keys(g, "geometry", {"d", "L", "side"});
    if (g["d"]) {
      c.d = r.scalar<int>(g["d"], "d");
      if (c.d < 1 || c.d > 5) r.fail(g["d"], "d must lie in [1, 5]");
    }
    if (g["L"]) {
      c.L = r.list<int>(g["L"], "L");
      for (int L : c.L) {
        if (L < 2 || L > 4096) r.fail(g["L"], "L must lie in [2, 4096]");
      }
    }
    if (g["side"]) {
      c.side = r.scalar<double>(g["side"], "side");
      if (!(c.side > 0.0)) r.fail(g["side"], "side must be positive");
    }
  }

  if (const YAML::Node s = root["solver"]) {
    r.check_keys(s, "solver", {"tol", "max_iter", "deterministic", "jacobi", "threads"});
    if (s["tol"]) {
      c.solver.tol = r.scalar<double>(s["tol"], "tol");
      if (!(c.solver.tol > 0.0 && c.solver.tol < 1.0)) r.fail(s["tol"], "tol must lie in (0, 1)");
    }
    if (s["max_iter"]) {
      c.solver.max_iter = r.scalar<int>(s["max_iter"], "max_iter");
      if (c.solver.max_iter < 1) r.fail(s["max_iter"], "max_iter must be positive");
    }
    if (s["deterministic"]) c.solver.deterministic = r.scalar<bool>(s["deterministic"], "deterministic");
    if (s["jacobi"]) c.solver.jacobi = r.scalar<bool>(s["jacobi"], "jacobi");
    if (s["threads"]) {
      c.threads = r.scalar<int>(s["threads"], "threads");
      if (c.threads < 1) r.fail(s["threads"], "threads must be positive");
    }
  }

  if (const YAML::Node st = root["statistics"]) {
    r.check_keys(st, "statistics", {"M", "p", "lambda", "eps", "lags", "radii", "order", "orders",
                                    "pairs", "h"});
    if (st["M"]) {
      c.M = r.scalar<int>(st["M"], "M");
      if (c.M < 1) r.fail(st["M"], "M must be positive");
    }
    if (st["p"]) c.p = r.list<int>(st["p"], "p");
    if (st["lambda"]) {
      c.lambda = r.list<double>(st["lambda"], "lambda");
      for (double l : c.lambda) {
        if (l < 0.0) r.fail(st["lambda"], "lambda must be nonnegative");
      }
    }
    if (st["eps"]) {
      c.eps = r.list<double>(st["eps"], "eps");
      for (double e : c.eps) {
        if (!(e > 0.0)) r.fail(st["eps"], "eps must be positive");
      }
    }
    if (st["lags"]) c.lags = r.list<int>(st["lags"], "lags");
    if (st["radii"]) c.radii = r.list<double>(st["radii"], "radii");
    if (st["order"]) {
      c.order = r.scalar<int>(st["order"], "order");
      if (c.order < 1 || c.order > 3) r.fail(st["order"], "order must be 1, 2 or 3");
    }
    if (st["orders"]) {
      c.orders = r.list<int>(st["orders"], "orders");
      for (int o : c.orders) {
        if (o < 0 || o > 2) r.fail(st["orders"], "orders must be a subset of {0, 1, 2}");
      }
    }
    if (st["pairs"]) c.pairs = r.scalar<int>(st["pairs"], "pairs");
    if (st["h"]) c.h = r.scalar<double>(st["h"], "h");
  }

  if (const YAML::Node m = root["macro"]) {
    r.check_keys(m, "macro", {"alpha", "width", "abar", "prerun_M", "prerun_L"});
    if (m["alpha"]) {
      c.alpha = r.scalar<double>(m["alpha"], "alpha");
      if (!(c.alpha > 0.0)) r.fail(m["alpha"], "alpha must be positive");
    }
    if (m["width"]) c.width = r.scalar<double>(m["width"], "width");
    if (m["abar"]) {
      if (m["abar"].IsScalar() && m["abar"].Scalar() == "auto") {
        c.abar.reset();
      } else {
        c.abar = r.scalar<double>(m["abar"], "abar");
        if (!(*c.abar > 0.0)) r.fail(m["abar"], "abar must be positive or 'auto'");
      }
    }
    if (m["prerun_M"]) c.prerun_M = r.scalar<int>(m["prerun_M"], "prerun_M");
    if (m["prerun_L"]) c.prerun_L = r.scalar<int>(m["prerun_L"], "prerun_L");
  }

  // Cross-field checks.
  const bool needs_many = c.kind != ExperimentKind::Sensitivity && c.kind != ExperimentKind::Order3 &&
                          c.kind != ExperimentKind::Correctors;
  if (needs_many && c.M < 2) throw ConfigError(name + ": statistics.M must be at least 2");
  if (c.kind == ExperimentKind::TwoscaleRates) {
    for (double e : c.eps) {
      const double n = c.side / e;
      if (std::abs(n - std::round(n)) > 1e-9 * n || n < 2) {
        r.fail(root["statistics"]["eps"], "side / eps must be an integer >= 2 for every eps");
      }
    }
  }
  if ((c.kind == ExperimentKind::Correctors || c.kind == ExperimentKind::Moments) && c.order > 2) {
    r.fail(root["statistics"]["order"], "correctors and moments support order 1 or 2");
  }
  if (c.kind == ExperimentKind::GreenDecay && c.radii.empty()) {
    throw ConfigError(name + ": green-decay needs statistics.radii");
  }
  gate_warnings(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace clab
