// Command-line runner for the verification commands.
//
//   finsler tensors    --config c.json
//   finsler identities --config c.json
//   finsler divergence --theorem rund|finsler --config c.json
//   finsler energy     --config c.json
//
// Exit status: 0 pass, 1 numeric failure, 2 bad config or arguments,
// 3 the hypothesis gate refused the run.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "finsler/commands.hpp"

namespace {

using namespace finsler;

std::vector<int> parse_orders(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) throw ConfigError("--orders", "bad order '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--orders", "empty list");
  return out;
}

bool write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return true;
  std::ofstream f(path, std::ios::binary);
  if (!f) return false;
  f << text;
  return static_cast<bool>(f);
}

// Minimal report for a run that stopped on a numerical error.
report::Json error_report(const std::string& check, const RunConfig& c, const char* kind, const char* what) {
  report::Json j;
  j["check"] = check;
  j["inputs"] = c.source;
  j["error"] = {{"kind", kind}, {"message", what}};
  j["passed"] = false;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical verification of divergence identities for pseudo-Finsler Lagrangians"};
  app.require_subcommand(1);

  std::string config_path, out_path, orders_text, theorem;
  int threads = 0;
  double seed_scale = 0.0;
  bool force = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_path, "report path (stdout when absent)");
    sub->add_option("--orders", orders_text, "comma-separated quadrature orders, e.g. 4,8,12");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
    sub->add_flag("--force", force, "run even when the hypothesis gate fails");
    sub->add_option("--seed-scale", seed_scale, "scale applied to Newton seeds")->check(CLI::PositiveNumber);
  };
  auto* tensors = app.add_subcommand("tensors", "dump geometric tensors at listed points");
  auto* identities = app.add_subcommand("identities", "pointwise identity checks");
  auto* divergence = app.add_subcommand("divergence", "integral divergence theorem on a box");
  auto* energy = app.add_subcommand("energy", "two-slice conserved energy");
  for (auto* s : {tensors, identities, divergence, energy}) common(s);
  divergence->add_option("--theorem", theorem, "rund or finsler")
      ->required()
      ->check(CLI::IsMember({"rund", "finsler"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  const auto started = std::chrono::steady_clock::now();
  std::string check = tensors->parsed()      ? "tensors"
                      : identities->parsed() ? "identities"
                      : divergence->parsed() ? "divergence_" + theorem
                                             : "energy";
  RunConfig cfg;
  RunOverrides ov;
  try {
    cfg = load_config(config_path);
    if (!orders_text.empty()) ov.orders = parse_orders(orders_text);
    if (threads > 0) ov.threads = threads;
    if (seed_scale > 0.0) ov.seed_scale = seed_scale;
    ov.force = force;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  }
  if (out_path.empty()) out_path = cfg.output.report;

  CommandResult result;
  try {
    if (tensors->parsed())
      result = run_tensors(cfg, ov);
    else if (identities->parsed())
      result = run_identities(cfg, ov);
    else if (divergence->parsed())
      result = run_divergence(cfg, theorem == "rund" ? Theorem::rund : Theorem::finsler, ov);
    else
      result = run_energy(cfg, ov);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const PreconditionError& e) {
    result = {error_report(check, cfg, "precondition", e.what()), exit_numeric_fail, {}};
  } catch (const LegendreError& e) {
    result = {error_report(check, cfg, "legendre", e.what()), exit_numeric_fail, {}};
  } catch (const DegenerateMetric& e) {
    result = {error_report(check, cfg, "degenerate_metric", e.what()), exit_numeric_fail, {}};
  } catch (const InadmissiblePoint& e) {
    result = {error_report(check, cfg, "inadmissible_point", e.what()), exit_numeric_fail, {}};
  } catch (const jets::DomainError& e) {
    result = {error_report(check, cfg, "domain", e.what()), exit_numeric_fail, {}};
  } catch (const expr::EvalError& e) {
    result = {error_report(check, cfg, "evaluation", e.what()), exit_numeric_fail, {}};
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    result = {error_report(check, cfg, "numeric", e.what()), exit_numeric_fail, {}};
  }

  const std::string text = report::serialize(result.report);
  if (out_path.empty()) {
    std::cout << text;
  } else if (!write_text(out_path, text)) {
    std::cerr << "cannot write report to '" << out_path << "'\n";
    return exit_config;
  }
  write_text(cfg.output.table, result.table);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const char* status = result.exit_code == exit_pass          ? "PASS"
                       : result.exit_code == exit_gate        ? "REFUSED"
                                                              : "FAIL";
  std::ostringstream summary;
  summary << check << ": " << status << " (exit " << result.exit_code << ", " << seconds << " s)";
  if (result.report.contains("error")) summary << " " << result.report["error"]["message"].get<std::string>();
  summary << '\n';
  std::cerr << summary.str();
  write_text(cfg.output.summary, summary.str());
  return result.exit_code;
}
