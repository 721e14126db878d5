#pragma once

// Run configuration: one JSON document, parsed and validated completely
// before any computation. Unknown keys are errors. Every diagnostic names the
// offending path, e.g. "section[2]".

#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsler/catalog.hpp"
#include "finsler/fields.hpp"
#include "finsler/quadrature.hpp"

namespace finsler {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error((path.empty() ? std::string("config") : path) + ": " + msg) {}
};

struct PointSpec {
  std::vector<double> x;
  std::optional<std::vector<double>> y;  // defaults to s(x)
};

struct SliceConfig {
  int axis = 0;
  double first = 0.0;
  double second = 1.0;
  std::vector<std::vector<double>> seeds;  // empty or one per slice
};

struct OutputConfig {
  std::string report;
  std::string summary;
  std::string table;
};

struct RunConfig {
  nlohmann::json source;  // the document as read, echoed into reports
  LagrangianSpec spec;
  expr::Params parameters;
  std::optional<SectionField> section;
  std::optional<FiberVectorField> field;
  std::optional<Box> domain;
  std::vector<int> orders{4, 8, 12};
  std::vector<std::vector<double>> face_seeds;
  std::vector<PointSpec> points;
  std::optional<SliceConfig> slices;
  std::map<std::string, double> tolerances;
  std::vector<std::string> checks;
  int threads = 1;
  int audit_order = 4;
  double seed_scale = 1.0;
  bool force = false;
  OutputConfig output;

  double tol(const std::string& key) const { return tolerances.at(key); }
};

inline const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> t{
      {"homogeneity", 1e-10},          {"trace_identity", 1e-9},  {"metric_compatibility", 1e-9},
      {"connection_difference", 1e-8}, {"corollary", 1e-8},       {"lemma", 1e-8},
      {"oap", 1e-8},                   {"hud", 1e-8},             {"mean_cartan", 1e-8},
      {"landsberg_trace", 1e-8},       {"flat", 1e-12},           {"rund", 1e-7},
      {"finsler", 1e-7},               {"oracle", 1e-9},          {"gate", 1e-7},
      {"audit", 1e-7},                 {"drift", 1e-7},           {"killing", 1e-8},
  };
  return t;
}

inline const std::set<std::string>& known_checks() {
  static const std::set<std::string> c{"homogeneity", "trace_identity", "metric_compatibility",
                                       "connection_difference", "corollary", "lemma", "oap", "hud",
                                       "mean_cartan_zero", "landsberg_trace_zero", "flat"};
  return c;
}

namespace config_detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void require_object(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

inline std::vector<double> numbers(const json& j, const std::string& path, int size = -1) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  if (size >= 0 && static_cast<int>(j.size()) != size)
    throw ConfigError(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], at(path, i)));
  return out;
}

inline std::vector<std::string> texts(const json& j, const std::string& path, int size = -1) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of strings");
  if (size >= 0 && static_cast<int>(j.size()) != size)
    throw ConfigError(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(text(j[i], at(path, i)));
  return out;
}

// Parses each expression on its own so a failure names its entry.
inline void check_expressions(const std::vector<std::string>& t, int dim, const expr::Params& params,
                              const std::string& path, bool allow_y) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    try {
      const auto ast = expr::parse(t[i], dim, detail::param_names(params));
      if (!allow_y && ast.uses_y()) throw ConfigError(at(path, i), "must not depend on y");
    } catch (const expr::ParseError& e) {
      throw ConfigError(at(path, i), e.what());
    }
  }
}

}  // namespace config_detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  require_object(j, "", {"lagrangian", "parameters", "section", "field", "domain", "orders", "face_seeds", "points",
                         "samples", "slices", "tolerances", "checks", "threads", "audit_order", "seed_scale",
                         "force", "output"});
  RunConfig c;
  c.source = j;
  if (!j.contains("lagrangian")) throw ConfigError("lagrangian", "missing");

  json lag = j["lagrangian"];
  std::map<std::string, double> lag_numbers;
  // numbers may carry any names, so they are read before the key check
  if (lag.is_object() && lag.contains("params") && lag["params"].is_object() && lag["params"].contains("numbers")) {
    if (!lag["params"]["numbers"].is_object()) throw ConfigError("lagrangian.params.numbers", "expected an object");
    for (auto it = lag["params"]["numbers"].begin(); it != lag["params"]["numbers"].end(); ++it)
      lag_numbers[it.key()] = number(it.value(), "lagrangian.params.numbers." + it.key());
    lag["params"].erase("numbers");
  }
  {
    require_object(lag, "lagrangian", {"id", "dim", "params"});
    if (!lag.contains("id")) throw ConfigError("lagrangian.id", "missing");
    if (!lag.contains("dim")) throw ConfigError("lagrangian.dim", "missing");
    const std::string id = text(lag["id"], "lagrangian.id");
    const int dim = integer(lag["dim"], "lagrangian.dim");
    LagrangianParams p;
    p.numbers = lag_numbers;
    if (lag.contains("params")) {
      const json& q = lag["params"];
      require_object(q, "lagrangian.params", {"fields", "matrix", "expression", "positive", "nonzero"});
      if (q.contains("fields")) {
        const json& f = q["fields"];
        if (!f.is_object()) throw ConfigError("lagrangian.params.fields", "expected an object");
        for (auto it = f.begin(); it != f.end(); ++it)
          p.fields[it.key()] = text(it.value(), "lagrangian.params.fields." + it.key());
      }
      if (q.contains("matrix")) {
        const json& m = q["matrix"];
        if (!m.is_array()) throw ConfigError("lagrangian.params.matrix", "expected an array of rows");
        for (std::size_t i = 0; i < m.size(); ++i) p.matrix.push_back(texts(m[i], at("lagrangian.params.matrix", i)));
      }
      if (q.contains("expression")) p.expression = text(q["expression"], "lagrangian.params.expression");
      if (q.contains("positive")) p.positive = texts(q["positive"], "lagrangian.params.positive");
      if (q.contains("nonzero")) p.nonzero = texts(q["nonzero"], "lagrangian.params.nonzero");
    }
    try {
      c.spec = build_lagrangian(id, dim, p);
    } catch (const SpecError& e) {
      throw ConfigError("lagrangian", e.what());
    } catch (const expr::ParseError& e) {
      throw ConfigError("lagrangian", e.what());
    }
  }
  const int n = c.spec.dim;

  if (j.contains("parameters")) {
    const json& p = j["parameters"];
    if (!p.is_object()) throw ConfigError("parameters", "expected an object");
    for (auto it = p.begin(); it != p.end(); ++it) c.parameters[it.key()] = number(it.value(), "parameters." + it.key());
  }

  if (j.contains("section")) {
    const auto t = texts(j["section"], "section", n);
    check_expressions(t, n, c.parameters, "section", false);
    c.section = SectionField::parse(t, n, c.parameters);
  }

  if (j.contains("field")) {
    const json& f = j["field"];
    require_object(f, "field", {"components", "potential"});
    if (f.contains("components") == f.contains("potential"))
      throw ConfigError("field", "give exactly one of components or potential");
    if (f.contains("components")) {
      const auto t = texts(f["components"], "field.components", n);
      check_expressions(t, n, c.parameters, "field.components", true);
      c.field = FiberVectorField::from_components(t, n, c.parameters);
    } else {
      const std::string t = text(f["potential"], "field.potential");
      check_expressions({t}, n, c.parameters, "field.potential", true);
      c.field = FiberVectorField::vertical_gradient(t, n, c.parameters);
    }
  }

  if (j.contains("domain")) {
    const json& d = j["domain"];
    require_object(d, "domain", {"lower", "upper"});
    if (!d.contains("lower") || !d.contains("upper")) throw ConfigError("domain", "needs lower and upper");
    Box b{numbers(d["lower"], "domain.lower", n), numbers(d["upper"], "domain.upper", n)};
    for (int i = 0; i < n; ++i)
      if (!(b.lower[i] < b.upper[i])) throw ConfigError(at("domain.upper", i), "must exceed the lower bound");
    c.domain = b;
  }

  if (j.contains("orders")) {
    const json& o = j["orders"];
    if (!o.is_array() || o.empty()) throw ConfigError("orders", "expected a non-empty array of integers");
    c.orders.clear();
    for (std::size_t i = 0; i < o.size(); ++i) {
      const int v = integer(o[i], at("orders", i));
      if (v < 1 || v > 64) throw ConfigError(at("orders", i), "quadrature order must be in [1, 64]");
      c.orders.push_back(v);
    }
  }

  if (j.contains("face_seeds")) {
    const json& s = j["face_seeds"];
    if (!s.is_array() || static_cast<int>(s.size()) != 2 * n)
      throw ConfigError("face_seeds", "expected " + std::to_string(2 * n) + " seed vectors (lower, upper per axis)");
    for (std::size_t i = 0; i < s.size(); ++i) c.face_seeds.push_back(numbers(s[i], at("face_seeds", i), n));
  }

  if (j.contains("points")) {
    const json& p = j["points"];
    if (!p.is_array()) throw ConfigError("points", "expected an array");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::string pp = at("points", i);
      PointSpec ps;
      if (p[i].is_array()) {
        ps.x = numbers(p[i], pp, n);
      } else {
        require_object(p[i], pp, {"x", "y"});
        if (!p[i].contains("x")) throw ConfigError(join(pp, "x"), "missing");
        ps.x = numbers(p[i]["x"], join(pp, "x"), n);
        if (p[i].contains("y")) ps.y = numbers(p[i]["y"], join(pp, "y"), n);
      }
      c.points.push_back(ps);
    }
  }

  if (j.contains("slices")) {
    const json& s = j["slices"];
    require_object(s, "slices", {"axis", "levels", "seeds"});
    SliceConfig sc;
    if (s.contains("axis")) sc.axis = integer(s["axis"], "slices.axis");
    if (sc.axis < 0 || sc.axis >= n) throw ConfigError("slices.axis", "axis out of range");
    if (!s.contains("levels")) throw ConfigError("slices.levels", "missing");
    const auto lv = numbers(s["levels"], "slices.levels", 2);
    if (!(lv[0] < lv[1])) throw ConfigError("slices.levels", "levels must increase");
    sc.first = lv[0];
    sc.second = lv[1];
    if (s.contains("seeds")) {
      const json& sd = s["seeds"];
      if (!sd.is_array() || sd.size() != 2) throw ConfigError("slices.seeds", "expected two seed vectors");
      for (std::size_t i = 0; i < 2; ++i) sc.seeds.push_back(numbers(sd[i], at("slices.seeds", i), n));
    }
    c.slices = sc;
  }

  c.tolerances = default_tolerances();
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) throw ConfigError("tolerances", "expected an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (!c.tolerances.count(it.key())) throw ConfigError("tolerances." + it.key(), "unknown key");
      const double v = number(it.value(), "tolerances." + it.key());
      if (!(v >= 0.0)) throw ConfigError("tolerances." + it.key(), "must be non-negative");
      c.tolerances[it.key()] = v;
    }
  }

  if (j.contains("checks")) {
    c.checks = texts(j["checks"], "checks");
    for (std::size_t i = 0; i < c.checks.size(); ++i)
      if (!known_checks().count(c.checks[i])) throw ConfigError(at("checks", i), "unknown check '" + c.checks[i] + "'");
  }

  if (j.contains("threads")) {
    c.threads = integer(j["threads"], "threads");
    if (c.threads < 1) throw ConfigError("threads", "must be at least 1");
  }
  if (j.contains("audit_order")) {
    c.audit_order = integer(j["audit_order"], "audit_order");
    if (c.audit_order < 1 || c.audit_order > 64) throw ConfigError("audit_order", "must be in [1, 64]");
  }
  if (j.contains("seed_scale")) {
    c.seed_scale = number(j["seed_scale"], "seed_scale");
    if (!(c.seed_scale > 0.0)) throw ConfigError("seed_scale", "must be positive");
  }
  if (j.contains("force")) c.force = boolean(j["force"], "force");

  if (j.contains("output")) {
    const json& o = j["output"];
    require_object(o, "output", {"report", "summary", "table"});
    if (o.contains("report")) c.output.report = text(o["report"], "output.report");
    if (o.contains("summary")) c.output.summary = text(o["summary"], "output.summary");
    if (o.contains("table")) c.output.table = text(o["table"], "output.table");
  }

  // listed points must be admissible
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& p = c.points[i];
    std::vector<double> y;
    if (p.y) {
      y = *p.y;
    } else if (c.section) {
      try {
        y = c.section->value(p.x);
      } catch (const std::exception& e) {
        throw ConfigError(at("points", i), std::string("section cannot be evaluated: ") + e.what());
      }
    } else {
      continue;
    }
    if (!c.spec.admissible(p.x, y)) throw ConfigError(at("points", i), "fiber point is not admissible");
  }

  // reproducible random points: x uniform in a box, y from the section or
  // drawn around a center; inadmissible draws are discarded
  if (j.contains("samples")) {
    const json& sm = j["samples"];
    require_object(sm, "samples", {"count", "seed", "lower", "upper", "y_center", "y_spread"});
    for (const char* k : {"count", "lower", "upper"})
      if (!sm.contains(k)) throw ConfigError(join("samples", k), "missing");
    const int count = integer(sm["count"], "samples.count");
    if (count < 1 || count > 100000) throw ConfigError("samples.count", "must be in [1, 100000]");
    const auto lo = numbers(sm["lower"], "samples.lower", n), hi = numbers(sm["upper"], "samples.upper", n);
    for (int i = 0; i < n; ++i)
      if (!(lo[i] < hi[i])) throw ConfigError(at("samples.upper", i), "must exceed the lower bound");
    std::optional<std::vector<double>> center;
    double spread = 0.0;
    if (sm.contains("y_center")) center = numbers(sm["y_center"], "samples.y_center", n);
    if (sm.contains("y_spread")) spread = number(sm["y_spread"], "samples.y_spread");
    if (!center && !c.section) throw ConfigError("samples", "needs y_center when no section is given");
    if (spread < 0.0) throw ConfigError("samples.y_spread", "must be non-negative");
    std::mt19937_64 rng(sm.contains("seed") ? static_cast<std::uint64_t>(integer(sm["seed"], "samples.seed")) : 1u);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int drawn = 0;
    for (long attempt = 0; drawn < count; ++attempt) {
      if (attempt > 1000L * count) throw ConfigError("samples", "too few admissible draws");
      PointSpec ps;
      for (int i = 0; i < n; ++i) ps.x.push_back(lo[i] + (hi[i] - lo[i]) * unit(rng));
      std::vector<double> y;
      if (center) {
        for (int i = 0; i < n; ++i) y.push_back((*center)[i] + spread * (2.0 * unit(rng) - 1.0));
        ps.y = y;
      } else {
        try {
          y = c.section->value(ps.x);
        } catch (const std::exception&) {
          continue;
        }
      }
      if (!c.spec.admissible(ps.x, y)) continue;
      c.points.push_back(ps);
      ++drawn;
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("'") + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace finsler
