#pragma once

// The four verification commands behind the command-line runner. Each takes
// a validated RunConfig and returns a report document plus an exit status.
// Reports never contain timing or thread counts, so reruns are byte-equal.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "finsler/config.hpp"
#include "finsler/conservation.hpp"
#include "finsler/connections.hpp"
#include "finsler/integration.hpp"
#include "finsler/report.hpp"
#include "finsler/tensors.hpp"

namespace finsler {

enum ExitCode : int { exit_pass = 0, exit_numeric_fail = 1, exit_config = 2, exit_gate = 3 };

struct RunOverrides {
  std::optional<std::vector<int>> orders;
  std::optional<int> threads;
  std::optional<double> seed_scale;
  bool force = false;
};

struct CommandResult {
  report::Json report;
  int exit_code = exit_pass;
  std::string table;  // comma-separated convergence rows, may be empty
};

namespace command_detail {

using report::Json;
using report::tensor_json;
using report::vector_json;

struct Settings {
  std::vector<int> orders;
  int threads = 1;
  double seed_scale = 1.0;
  bool force = false;
};

inline Settings settings(const RunConfig& c, const RunOverrides& o) {
  Settings s;
  s.orders = o.orders ? *o.orders : c.orders;
  s.threads = o.threads ? *o.threads : c.threads;
  s.seed_scale = o.seed_scale ? *o.seed_scale : c.seed_scale;
  s.force = o.force || c.force;
  return s;
}

inline Json header(const std::string& check, const RunConfig& c, const Settings& s) {
  Json j;
  j["check"] = check;
  j["inputs"] = c.source;
  j["options"] = {{"orders", s.orders}, {"seed_scale", s.seed_scale}, {"force", s.force}};
  return j;
}

inline Json verdict(double value, double tol) {
  return {{"max", value}, {"tolerance", tol}, {"passed", value <= tol}};
}

inline std::vector<double> fiber_direction(const RunConfig& c, std::size_t i) {
  const auto& p = c.points[i];
  if (p.y) return *p.y;
  if (c.section) return c.section->value(p.x);
  throw ConfigError("points[" + std::to_string(i) + "]", "needs y or a section");
}

inline void require_points(const RunConfig& c, const char* cmd) {
  if (c.points.empty()) throw ConfigError("points", std::string("required by ") + cmd);
}

inline const SectionField& require_section(const RunConfig& c, const std::string& why) {
  if (!c.section) throw ConfigError("section", "required by " + why);
  return *c.section;
}

inline const FiberVectorField& require_field(const RunConfig& c, const std::string& why) {
  if (!c.field) throw ConfigError("field", "required by " + why);
  return *c.field;
}

inline const Box& require_domain(const RunConfig& c, const std::string& why) {
  if (!c.domain) throw ConfigError("domain", "required by " + why);
  return *c.domain;
}

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace command_detail

// ---------------------------------------------------------------------------

inline CommandResult run_tensors(const RunConfig& c, const RunOverrides& o = {}) {
  using namespace command_detail;
  const Settings st = settings(c, o);
  require_points(c, "tensors");
  static const std::set<std::string> applicable{"mean_cartan_zero", "landsberg_trace_zero", "flat"};
  for (const auto& ch : c.checks)
    if (!applicable.count(ch)) throw ConfigError("checks", "'" + ch + "' does not apply to tensors");

  Json pts = Json::array();
  double worst_i = 0.0, worst_j = 0.0, worst_flat = 0.0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const FiberPoint p{c.points[i].x, fiber_direction(c, i)};
    const FiberContext ctx(c.spec, p, 4);
    const auto sig = ctx.signature();
    Json e;
    e["x"] = vector_json(p.x);
    e["y"] = vector_json(p.y);
    e["lagrangian"] = ctx.lagrangian();
    e["signature"] = {{"negative", sig.negative}, {"positive", sig.positive}};
    e["metric"] = tensor_json(ctx.metric());
    e["inverse_metric"] = tensor_json(ctx.inverse_metric());
    e["cartan"] = tensor_json(ctx.cartan_torsion());
    const auto ic = ctx.mean_cartan_contract();
    const auto il = ctx.mean_cartan_logdet();
    e["mean_cartan"] = {{"contraction", tensor_json(ic)}, {"log_det", tensor_json(il)}};
    e["spray"] = tensor_json(ctx.spray());
    e["nonlinear_connection"] = tensor_json(ctx.nonlinear_connection());
    e["berwald"] = tensor_json(ctx.berwald());
    e["chern_rund"] = tensor_json(ctx.chern_rund());
    e["landsberg"] = tensor_json(ctx.landsberg());
    const auto jt = ctx.landsberg_trace();
    e["landsberg_trace"] = tensor_json(jt);
    pts.push_back(e);
    worst_i = std::max({worst_i, ic.max_abs(), il.max_abs()});
    worst_j = std::max(worst_j, jt.max_abs());
    worst_flat = std::max({worst_flat, ctx.spray().max_abs(), ctx.nonlinear_connection().max_abs(),
                           ctx.berwald().max_abs(), ctx.chern_rund().max_abs()});
  }
  CommandResult r;
  r.report = header("tensors", c, st);
  r.report["points"] = pts;
  Json checks = Json::object();
  bool ok = true;
  for (const auto& ch : c.checks) {
    Json v;
    if (ch == "mean_cartan_zero") v = verdict(worst_i, c.tol("mean_cartan"));
    if (ch == "landsberg_trace_zero") v = verdict(worst_j, c.tol("landsberg_trace"));
    if (ch == "flat") v = verdict(worst_flat, c.tol("flat"));
    ok &= v["passed"].get<bool>();
    checks[ch] = v;
  }
  r.report["checks"] = checks;
  r.report["passed"] = ok;
  r.exit_code = ok ? exit_pass : exit_numeric_fail;
  return r;
}

// ---------------------------------------------------------------------------

inline CommandResult run_identities(const RunConfig& c, const RunOverrides& o = {}) {
  using namespace command_detail;
  const Settings st = settings(c, o);
  require_points(c, "identities");
  const bool has_s = c.section.has_value();
  const bool has_z = c.field.has_value();
  const bool has_f = has_z && c.field->kind == FiberVectorField::Kind::vertical_gradient;

  std::vector<std::string> checks = c.checks;
  if (checks.empty()) {
    checks = {"homogeneity", "trace_identity", "metric_compatibility"};
    if (has_s) checks.insert(checks.end(), {"connection_difference", "corollary"});
    if (has_s && has_z) checks.insert(checks.end(), {"lemma", "oap"});
    if (has_s && has_f) checks.push_back("hud");
  }
  for (const auto& ch : checks) {
    if (ch == "mean_cartan_zero" || ch == "landsberg_trace_zero" || ch == "flat")
      throw ConfigError("checks", "'" + ch + "' belongs to the tensors command");
    if ((ch == "connection_difference" || ch == "corollary") && !has_s) require_section(c, ch);
    if ((ch == "lemma" || ch == "oap") && (!has_s || !has_z)) {
      require_section(c, ch);
      require_field(c, ch);
    }
    if (ch == "hud") {
      require_section(c, ch);
      if (!has_f) throw ConfigError("field", "hud needs a potential (vertical gradient field)");
    }
  }

  std::map<std::string, double> worst;
  std::map<std::string, Json> detail;
  for (const auto& ch : checks) {
    worst[ch] = 0.0;
    detail[ch] = Json::array();
  }
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto& x = c.points[i].x;
    for (const auto& ch : checks) {
      double v = 0.0;
      if (ch == "homogeneity" || ch == "trace_identity" || ch == "metric_compatibility") {
        const FiberPoint p{x, fiber_direction(c, i)};
        if (ch == "homogeneity") {
          const auto a = homogeneity_audit(c.spec, p);
          v = a.worst();
          detail[ch].push_back({{"euler_lagrangian", a.euler_lagrangian},
                                {"euler_cartan", a.euler_cartan},
                                {"euler_spray", a.euler_spray},
                                {"cartan_symmetry", a.cartan_symmetry},
                                {"ladder_metric", a.ladder_metric},
                                {"ladder_cartan", a.ladder_cartan},
                                {"ladder_spray", a.ladder_spray},
                                {"ladder_nonlinear", a.ladder_nonlinear}});
        } else {
          const FiberContext ctx(c.spec, p, 3);
          v = ch == "trace_identity"
                  ? trace_identity_residual(ctx)
                  : metric_compatibility_residual(ctx) / std::max(1.0, ctx.metric().max_abs());
          detail[ch].push_back(v);
        }
      } else if (ch == "connection_difference" || ch == "corollary" || ch == "lemma") {
        const SectionPoint sp(c.spec, *c.section, x);
        const ComposedFrame cf(c.spec, *c.section, x);
        if (ch == "connection_difference") v = connection_difference(sp, cf).residual;
        if (ch == "corollary") v = corollary_residual(sp, cf);
        if (ch == "lemma") v = lemma_chain(sp, cf, *c.field).residual;
        detail[ch].push_back(v);
      } else if (ch == "oap") {
        const auto r = divergence_oap(c.spec, *c.field, *c.section, x);
        v = r.residual;
        detail[ch].push_back({{"lhs", r.lhs},
                              {"rhs", r.rhs},
                              {"residual", r.residual},
                              {"horizontal", r.pieces.horizontal},
                              {"mean_cartan", r.pieces.mean_cartan},
                              {"chain", r.pieces.chain}});
      } else if (ch == "hud") {
        const auto h = hud_residual(c.spec, *c.field, *c.section, x, c.tol("killing"));
        v = h.identity_residual;
        if (h.killing_holds) v = std::max(v, h.killing_step);
        if (h.killing_holds && h.vanishing_applies) v = std::max(v, std::abs(h.value()));
        detail[ch].push_back({{"direct", h.direct},
                              {"split", h.split},
                              {"raised", h.raised},
                              {"after_killing", h.killing},
                              {"identity_residual", h.identity_residual},
                              {"killing_step", h.killing_step},
                              {"killing_residual", h.killing_residual},
                              {"killing_holds", h.killing_holds},
                              {"pregeodesic_defect", h.pregeodesic_defect},
                              {"vanishing_applies", h.vanishing_applies},
                              {"vanishes", h.vanishes}});
      }
      worst[ch] = std::max(worst[ch], v);
    }
  }

  CommandResult r;
  r.report = header("identities", c, st);
  Json where = Json::array();
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    Json e{{"x", vector_json(c.points[i].x)}};
    if (c.points[i].y) e["y"] = vector_json(*c.points[i].y);
    where.push_back(e);
  }
  r.report["points"] = where;
  Json out = Json::object();
  bool ok = true;
  for (const auto& ch : checks) {
    Json v = verdict(worst[ch], c.tol(ch));
    v["points"] = detail[ch];
    ok &= v["passed"].get<bool>();
    out[ch] = v;
  }
  r.report["checks"] = out;
  r.report["passed"] = ok;
  r.exit_code = ok ? exit_pass : exit_numeric_fail;
  return r;
}

// ---------------------------------------------------------------------------

enum class Theorem { rund, finsler };

inline CommandResult run_divergence(const RunConfig& c, Theorem theorem, const RunOverrides& o = {}) {
  using namespace command_detail;
  const Settings st = settings(c, o);
  const auto& s = require_section(c, "divergence");
  const auto& z = require_field(c, "divergence");
  const auto& box = require_domain(c, "divergence");
  CommandResult r;
  std::ostringstream table;

  if (theorem == Theorem::rund) {
    const RundReport rep = verify_divergence_rund(c.spec, z, s, box, st.orders, st.threads);
    r.report = header("divergence_rund", c, st);
    Json rows = Json::array();
    table << "order,volume,boundary,oracle,residual\n";
    for (const auto& row : rep.rows) {
      rows.push_back({{"order", row.order},
                      {"volume", row.volume},
                      {"boundary", row.boundary},
                      {"oracle", row.oracle},
                      {"residual", row.residual},
                      {"face_flux", vector_json(row.face_flux)}});
      table << row.order << ',' << csv_number(row.volume) << ',' << csv_number(row.boundary) << ','
            << csv_number(row.oracle) << ',' << csv_number(row.residual) << '\n';
    }
    const double last = rep.rows.back().residual;
    const double oracle_gap = std::abs(rep.rows.back().boundary - rep.rows.back().oracle);
    r.report["rows"] = rows;
    r.report["monotone"] = rep.monotone;
    r.report["checks"] = {{"residual", verdict(last, c.tol("rund"))},
                          {"boundary_vs_oracle", verdict(oracle_gap, c.tol("oracle"))}};
    const bool ok = last <= c.tol("rund") && oracle_gap <= c.tol("oracle") && rep.monotone;
    r.report["passed"] = ok;
    r.exit_code = ok ? exit_pass : exit_numeric_fail;
    r.table = table.str();
    return r;
  }

  FinslerOptions opt;
  opt.face_seeds = c.face_seeds;
  opt.seed_scale = st.seed_scale;
  opt.force = st.force;
  opt.gate_tolerance = c.tol("gate");
  opt.threads = st.threads;
  r.report = header("divergence_finsler", c, st);
  FinslerReport rep;
  try {
    rep = verify_divergence_finsler(c.spec, z, s, box, st.orders, opt);
  } catch (const GateRefused& e) {
    r.report["gate"] = {{"passed", false}, {"message", e.what()}, {"tolerance", opt.gate_tolerance}};
    r.report["passed"] = false;
    r.exit_code = exit_gate;
    return r;
  }
  r.report["gate"] = {{"passed", rep.gate_passed},
                      {"max_mean_cartan", rep.gate_max_mean_cartan},
                      {"tolerance", opt.gate_tolerance},
                      {"forced", rep.forced && !rep.gate_passed}};
  r.report["det_spread"] = rep.det_spread;
  Json rows = Json::array();
  table << "order,volume,boundary,boundary_newton_scale,oracle,volume_vs_boundary,volume_vs_oracle,boundary_vs_oracle\n";
  for (const auto& row : rep.rows) {
    Json faces = Json::array();
    for (const auto& f : row.faces)
      faces.push_back({{"axis", f.face.axis},
                       {"side", f.face.upper ? "upper" : "lower"},
                       {"skipped", f.skipped},
                       {"normal_flux", f.normal_flux},
                       {"newton_scale_flux", f.newton_scale_flux},
                       {"oracle_flux", f.oracle_flux},
                       {"max_iterations", f.max_iterations},
                       {"max_ker_residual", f.max_ker_residual},
                       {"max_transverse_spread", f.max_transverse_spread},
                       {"normalized", f.any_normalized}});
    rows.push_back({{"order", row.order},
                    {"volume", row.volume},
                    {"boundary", row.boundary},
                    {"boundary_newton_scale", row.boundary_newton_scale},
                    {"oracle", row.oracle},
                    {"volume_vs_boundary", row.volume_vs_boundary},
                    {"volume_vs_oracle", row.volume_vs_oracle},
                    {"boundary_vs_oracle", row.boundary_vs_oracle},
                    {"max_mean_cartan", row.max_mean_cartan},
                    {"faces", faces}});
    table << row.order << ',' << csv_number(row.volume) << ',' << csv_number(row.boundary) << ','
          << csv_number(row.boundary_newton_scale) << ',' << csv_number(row.oracle) << ','
          << csv_number(row.volume_vs_boundary) << ',' << csv_number(row.volume_vs_oracle) << ','
          << csv_number(row.boundary_vs_oracle) << '\n';
  }
  const auto& last = rep.rows.back();
  const double pairwise = std::max({last.volume_vs_boundary, last.volume_vs_oracle});
  r.report["rows"] = rows;
  r.report["monotone"] = rep.monotone;
  r.report["checks"] = {{"volume_vs_boundary", verdict(pairwise, c.tol("finsler"))},
                        {"boundary_vs_oracle", verdict(last.boundary_vs_oracle, c.tol("oracle"))}};
  const bool ok = pairwise <= c.tol("finsler") && last.boundary_vs_oracle <= c.tol("oracle") && rep.monotone;
  r.report["passed"] = ok;
  r.exit_code = ok ? exit_pass : exit_numeric_fail;
  r.table = table.str();
  return r;
}

// ---------------------------------------------------------------------------

inline CommandResult run_energy(const RunConfig& c, const RunOverrides& o = {}) {
  using namespace command_detail;
  const Settings st = settings(c, o);
  const auto& s = require_section(c, "energy");
  const auto& z = require_field(c, "energy");
  const auto& box = require_domain(c, "energy");
  if (!c.slices) throw ConfigError("slices", "required by energy");
  const SliceConfig& sl = *c.slices;
  const SliceSpec first{sl.axis, sl.first, box, sl.seeds.empty() ? std::vector<double>{} : sl.seeds[0]};
  const SliceSpec second{sl.axis, sl.second, box, sl.seeds.empty() ? std::vector<double>{} : sl.seeds[1]};

  EnergyOptions opt;
  opt.finsler.seed_scale = st.seed_scale;
  opt.finsler.force = st.force;
  opt.finsler.threads = st.threads;
  opt.audit_tolerance = c.tol("audit");
  opt.drift_tolerance = c.tol("drift");
  opt.audit_order = c.audit_order;

  CommandResult r;
  r.report = header("energy", c, st);
  const HypothesisAudit audit = audit_hypotheses(c.spec, z, s, [&] {
    Box slab = box;
    slab.lower[sl.axis] = sl.first;
    slab.upper[sl.axis] = sl.second;
    return slab;
  }(), opt.audit_order, opt.audit_tolerance, st.threads);
  Json aj{{"nodes", audit.nodes},
          {"tolerance", audit.tolerance},
          {"max_mean_cartan", audit.max_mean_cartan},
          {"max_horizontal_divergence", audit.max_horizontal_divergence},
          {"max_killing_residual", audit.max_killing_residual},
          {"max_pregeodesic_defect", audit.max_pregeodesic_defect},
          {"failures", audit.failures},
          {"passed", audit.passed},
          {"forced", st.force && !audit.passed}};
  r.report["audit"] = aj;
  if (!audit.passed && !st.force) {
    r.report["passed"] = false;
    r.exit_code = exit_gate;
    return r;
  }
  // audit already evaluated above; the drift routine repeats it cheaply
  opt.finsler.force = true;
  const EnergyReport rep = two_slice_drift(c.spec, z, s, first, second, st.orders, opt);

  std::ostringstream table;
  table << "order,energy_first,energy_second,drift,lateral,corrected_drift,volume,closure\n";
  Json rows = Json::array();
  for (const auto& row : rep.rows) {
    auto ev = [](const EnergyValue& e) {
      return Json{{"value", e.value},
                  {"oracle", e.oracle},
                  {"skipped", e.skipped},
                  {"max_iterations", e.max_iterations},
                  {"max_ker_residual", e.max_ker_residual}};
    };
    rows.push_back({{"order", row.order},
                    {"first", ev(row.first)},
                    {"second", ev(row.second)},
                    {"drift", row.drift},
                    {"lateral", row.lateral},
                    {"corrected_drift", row.corrected_drift},
                    {"volume", row.volume},
                    {"closure", row.closure}});
    table << row.order << ',' << csv_number(row.first.value) << ',' << csv_number(row.second.value) << ','
          << csv_number(row.drift) << ',' << csv_number(row.lateral) << ',' << csv_number(row.corrected_drift) << ','
          << csv_number(row.volume) << ',' << csv_number(row.closure) << '\n';
  }
  const auto& last = rep.rows.back();
  const double oracle_gap =
      std::max(std::abs(last.first.value - last.first.oracle), std::abs(last.second.value - last.second.oracle));
  r.report["rows"] = rows;
  r.report["slices"] = {{"axis", sl.axis}, {"levels", {sl.first, sl.second}}};
  r.report["checks"] = {{"corrected_drift", verdict(std::abs(last.corrected_drift), c.tol("drift"))},
                        {"energy_vs_oracle", verdict(oracle_gap, c.tol("oracle"))}};
  const bool ok = std::abs(last.corrected_drift) <= c.tol("drift") && oracle_gap <= c.tol("oracle");
  r.report["passed"] = ok;
  r.exit_code = ok ? exit_pass : exit_numeric_fail;
  r.table = table.str();
  return r;
}

}  // namespace finsler
