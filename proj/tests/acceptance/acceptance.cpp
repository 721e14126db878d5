// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "finsler/commands.hpp"
#include "support/oracles.hpp"
#include "support/random_fields.hpp"
#include "support/sampling.hpp"

using namespace finsler;
namespace ft = finsler::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

RunConfig config(const std::string& name) { return load_config(std::string(FINSLER_CONFIGS) + "/" + name); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FINSLER_CLI) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Base point where s(x) is admissible with a well-conditioned metric.
std::vector<double> base_point(const LagrangianSpec& spec, const SectionField& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.2);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> x;
    for (int i = 0; i < spec.dim; ++i) x.push_back(u(rng));
    const auto sv = s.value(x);
    if (!spec.admissible(x, sv)) continue;
    if (relative_determinant(FiberContext(spec, FiberPoint{x, sv}, 2).metric_matrix()) < 1e-3) continue;
    return x;
  }
  throw std::runtime_error("no admissible base point");
}

struct Scenario {
  LagrangianSpec spec;
  std::vector<double> center;
  double eps;
};

std::vector<Scenario> catalog_scenarios() {
  return {{build_lagrangian("minkowski", 4), {1.0, 0.2, 0.2, 0.2}, 0.2},
          {ft::friedmann_quadratic("exp(x0)"), {1.0, 0.2, 0.2, 0.2}, 0.2},
          {ft::affine_sphere("exp(x0)"), {1.0, 0.1, -0.1, 0.1}, 0.05},
          {ft::quartic(3), {0.6, 1.0, 1.0}, 0.1},
          {ft::quartic(4), {0.6, 1.0, 1.0, 1.0}, 0.1},
          {ft::warped_quartic(), {0.6, 1.0, 1.0}, 0.1}};
}

// ---------------------------------------------------------------------------

Outcome riemannian_reduction() {
  Outcome o;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (const std::string a : {"exp(x0)", "x0"}) {
    const auto spec = ft::friedmann_quadratic(a);
    for (int k = 0; k < 100; ++k) {
      const FiberPoint p = ft::sample_for(spec, rng);
      const FiberContext ctx(spec, p, 4);
      const double av = a == "x0" ? p.x[0] : std::exp(p.x[0]);
      const double ad = a == "x0" ? 1.0 : std::exp(p.x[0]);
      const auto gam = ft::friedmann_christoffel(av, ad);
      const auto bw = ctx.berwald(), cr = ctx.chern_rund();
      // pullback along a constant section through the same fiber point
      std::vector<std::string> st;
      for (double c : p.y) st.push_back(ft::lit(c));
      const auto pm = pullback_metric_christoffels(spec, SectionField::parse(st, 4), p.x);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          for (int l = 0; l < 4; ++l)
            worst = std::max({worst, std::abs(bw(i, j, l) - gam[i][j][l]), std::abs(cr(i, j, l) - gam[i][j][l]),
                              std::abs(pm(i, j, l) - gam[i][j][l])});
    }
  }
  o.require(worst <= 1e-10, "max deviation " + sci(worst));
  o.detail = o.detail.empty() ? "max deviation " + sci(worst) : o.detail;
  return o;
}

Outcome homogeneity_suite() {
  Outcome o;
  std::mt19937_64 rng(202);
  const std::vector<LagrangianSpec> specs{build_lagrangian("minkowski", 4), ft::friedmann_quadratic("exp(x0)"),
                                          ft::friedmann_quadratic("x0"),    ft::affine_sphere("exp(x0)"),
                                          ft::quartic(3),                   ft::quartic(4),
                                          ft::warped_quartic()};
  double worst = 0.0;
  for (const auto& spec : specs)
    for (int k = 0; k < 100; ++k) {
      const double w = homogeneity_audit(spec, ft::sample_for(spec, rng)).worst();
      if (w > 1e-10) o.require(false, spec.id + " residual " + sci(w));
      worst = std::max(worst, w);
    }
  if (o.ok) o.detail = "worst residual " + sci(worst) + " over " + std::to_string(specs.size()) + " entries";
  return o;
}

Outcome affine_sphere_audit() {
  Outcome o;
  std::mt19937_64 rng(303);
  const auto spec = ft::affine_sphere("exp(x0)");
  double wi = 0.0, wj = 0.0, gap = 0.0, wc = 0.0;
  for (int k = 0; k < 100; ++k) {
    const FiberContext ctx(spec, ft::sample_for(spec, rng), 4);
    const auto ic = ctx.mean_cartan_contract(), il = ctx.mean_cartan_logdet();
    wi = std::max({wi, ic.max_abs(), il.max_abs()});
    wj = std::max(wj, ctx.landsberg_trace().max_abs());
    wc = std::max(wc, ctx.cartan_torsion().max_abs());
    for (std::size_t i = 0; i < ic.data().size(); ++i) gap = std::max(gap, std::abs(ic.data()[i] - il.data()[i]));
  }
  o.require(wi <= 1e-8, "mean Cartan " + sci(wi));
  o.require(wj <= 1e-8, "Landsberg trace " + sci(wj));
  o.require(gap <= 1e-9, "method gap " + sci(gap));
  o.require(wc > 1e-3, "Cartan torsion unexpectedly small");
  if (o.ok) o.detail = "max|I| " + sci(wi) + ", max|J| " + sci(wj) + ", method gap " + sci(gap);
  return o;
}

Outcome connection_difference_quartic() {
  Outcome o;
  std::mt19937_64 rng(404);
  const auto spec = ft::quartic(3);
  double worst = 0.0, size = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto s = ft::random_section(rng, {0.6, 1.0, 1.0}, 0.1);
    const auto r = connection_difference(spec, s, base_point(spec, s, rng));
    worst = std::max(worst, r.residual);
    size = std::max(size, r.rhs.max_abs());
  }
  o.require(worst <= 1e-8, "residual " + sci(worst));
  o.require(size > 1e-3, "difference tensor trivially small");
  if (o.ok) o.detail = "max residual " + sci(worst) + ", largest difference " + sci(size);
  return o;
}

Outcome divergence_identity() {
  Outcome o;
  std::mt19937_64 rng(505);
  double worst = 0.0, ablation = 0.0, biggest_i = 0.0;
  for (const auto& sc : catalog_scenarios()) {
    for (int k = 0; k < 50; ++k) {
      const auto s = ft::random_section(rng, sc.center, sc.eps);
      const auto z = k % 2 ? ft::random_field(rng, sc.spec.dim) : ft::random_potential(rng, sc.spec.dim);
      const auto r = divergence_oap(sc.spec, z, s, base_point(sc.spec, s, rng));
      if (r.residual > 1e-8) o.require(false, sc.spec.id + " residual " + sci(r.residual));
      worst = std::max(worst, r.residual);
      if (sc.spec.id == "quartic") {
        // dropping the mean Cartan term must miss by exactly that term
        const double missed = r.lhs - (r.rhs - r.pieces.mean_cartan);
        ablation = std::max(ablation, std::abs(missed - r.pieces.mean_cartan));
        biggest_i = std::max(biggest_i, std::abs(r.pieces.mean_cartan));
      }
    }
  }
  o.require(ablation <= 1e-9, "ablation gap " + sci(ablation));
  o.require(biggest_i > 1e-3, "ablation witness too weak");
  if (o.ok)
    o.detail = "max residual " + sci(worst) + ", ablation gap " + sci(ablation) + ", witness term " + sci(biggest_i);
  return o;
}

Outcome rund_theorem() {
  Outcome o;
  std::string d;
  for (const char* name : {"rund_quadratic_metric.json", "rund_quartic.json"}) {
    const auto r = run_divergence(config(name), Theorem::rund);
    const double last = r.report["rows"].back()["residual"].get<double>();
    o.require(r.exit_code == exit_pass, std::string(name) + " exit " + std::to_string(r.exit_code));
    o.require(r.report["rows"].back()["order"].get<int>() == 12, "finest order is not 12");
    o.require(r.report["monotone"].get<bool>(), std::string(name) + " not monotone");
    d += (d.empty() ? "" : ", ") + std::string(name) + " residual@12 " + sci(last);
  }
  if (o.ok) o.detail = d;
  return o;
}

double slab_boundary_gap(const CommandResult& a, const CommandResult& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.report["rows"].size(); ++i) {
    const double x = a.report["rows"][i]["boundary"], y = b.report["rows"][i]["boundary"];
    worst = std::max(worst, std::abs(x - y) / std::abs(x));
  }
  return worst;
}

CommandResult slab_run;  // shared by criteria 7 and 8

Outcome finsler_theorem() {
  Outcome o;
  slab_run = run_divergence(config("finsler_affine_slab.json"), Theorem::finsler);
  const auto& last = slab_run.report["rows"].back();
  const double vb = last["volume_vs_boundary"], vo = last["volume_vs_oracle"], bo = last["boundary_vs_oracle"];
  o.require(last["order"].get<int>() == 12, "finest order is not 12");
  o.require(std::max({vb, vo, bo}) <= 1e-7, "pairwise gap " + sci(std::max({vb, vo, bo})));
  o.require(slab_run.exit_code == exit_pass, "slab exit " + std::to_string(slab_run.exit_code));
  const int gate =
      run_cli("divergence --theorem finsler --config " + std::string(FINSLER_CONFIGS) + "/finsler_quartic_gate.json" +
              " --out /dev/null");
  o.require(gate == exit_gate, "quartic exit " + std::to_string(gate));
  if (o.ok)
    o.detail = "order 12 gaps " + sci(vb) + " / " + sci(vo) + " / " + sci(bo) + ", quartic exit " +
               std::to_string(gate);
  return o;
}

Outcome seed_scale_invariance() {
  Outcome o;
  RunOverrides ov;
  ov.seed_scale = 5.0;
  const auto scaled = run_divergence(config("finsler_affine_slab.json"), Theorem::finsler, ov);
  const double gap = slab_boundary_gap(slab_run, scaled);
  o.require(gap <= 1e-10, "relative change " + sci(gap));
  if (o.ok) o.detail = "relative boundary change " + sci(gap);
  return o;
}

Outcome conservation() {
  Outcome o;
  std::string d;
  for (const char* name : {"energy_minkowski.json", "energy_affine_static.json"}) {
    const auto r = run_energy(config(name));
    const double drift = r.report["rows"].back()["corrected_drift"];
    o.require(r.exit_code == exit_pass && r.report["audit"]["passed"].get<bool>(),
              std::string(name) + " exit " + std::to_string(r.exit_code));
    o.require(std::abs(drift) <= 1e-7, std::string(name) + " drift " + sci(drift));
    d += (d.empty() ? "" : ", ") + std::string(name) + " drift " + sci(std::abs(drift));
  }
  for (const char* name :
       {"energy_control_not_killing.json", "energy_control_divergence.json", "energy_control_not_pregeodesic.json"}) {
    const RunConfig c = config(name);
    const auto refused = run_energy(c);
    o.require(refused.exit_code == exit_gate, std::string(name) + " was not refused");
    RunOverrides ov;
    ov.force = true;
    const auto r = run_energy(c, ov);
    const double drift = r.report["rows"].back()["corrected_drift"];
    o.require(r.report["audit"]["failures"].size() == 1, std::string(name) + " breaks more than one hypothesis");
    o.require(std::abs(drift) >= 1e-6, std::string(name) + " drift " + sci(drift));
    d += ", " + std::string(name) + " drift " + sci(std::abs(drift));
  }
  if (o.ok) o.detail = d;
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("finsler_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string cfg = std::string(FINSLER_CONFIGS) + "/";
  const std::vector<std::pair<std::string, std::string>> runs{
      {"tensors", "tensors --config " + cfg + "tensors_affine_sphere.json"},
      {"identities", "identities --config " + cfg + "identities_affine_potential.json"},
      {"rund", "divergence --theorem rund --config " + cfg + "rund_quartic.json"},
      {"finsler", "divergence --theorem finsler --orders 4,8 --config " + cfg + "finsler_affine_slab.json"},
      {"energy", "energy --orders 4,8 --config " + cfg + "energy_affine_static.json"}};
  for (const auto& [name, args] : runs) {
    const fs::path a = dir / (name + "_1.json"), b = dir / (name + "_8.json");
    const int ea = run_cli(args + " --threads 1 --out " + a.string());
    const int eb = run_cli(args + " --threads 8 --out " + b.string());
    o.require(ea == eb, name + " exit codes differ");
    const std::string ta = slurp(a), tb = slurp(b);
    o.require(!ta.empty() && ta == tb, name + " reports differ");
  }
  fs::remove_all(dir);
  if (o.ok) o.detail = std::to_string(runs.size()) + " commands byte-identical";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // zero means no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "Riemannian reduction", 10, riemannian_reduction},
      {2, "homogeneity and symmetry", 10, homogeneity_suite},
      {3, "affine sphere mean torsion audit", 10, affine_sphere_audit},
      {4, "connection difference on quartic", 20, connection_difference_quartic},
      {5, "pointwise divergence identity", 30, divergence_identity},
      {6, "Rund integral theorem", 60, rund_theorem},
      {7, "Finslerian integral theorem", 120, finsler_theorem},
      {8, "normal scale invariance", 120, seed_scale_invariance},
      {9, "conserved energy", 120, conservation},
      {10, "thread determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.ok = false;
      o.detail += " (over the " + std::to_string(static_cast<int>(c.limit_seconds)) + " s budget)";
    }
    std::printf("%s criterion %d: %s (%.1f s) %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.ok;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
