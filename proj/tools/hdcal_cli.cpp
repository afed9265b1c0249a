// hdcal: drive hierarchical-forecaster runs, certificates and experiments.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hdcal/hdcal.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

int run(const std::string& config, std::uint64_t seed, const std::string& out, std::optional<std::uint64_t> max_days) {
  auto cfg = hdcal::load_run_config(config);
  if (max_days) {
    cfg.max_days = *max_days;
    cfg.validate();
  }
  const auto res = hdcal::cmd_run(cfg, seed, out);
  std::cout << res.metrics_csv;
  return kExitOk;
}

int certify(const std::string& dir) {
  const auto report = hdcal::cmd_certify(dir);
  const auto& c = report.chain;
  std::cout << "run " << report.run_id << ": " << report.checks.size() << " checks, " << report.failures() << " failed\n"
            << "A0=" << c.A0 << " A1=" << c.A1 << " A2=" << c.A2 << " A3=" << c.A3 << " K_bar=" << c.K_bar
            << " telescope_residual=" << c.telescope_residual << '\n';
  for (const auto& r : report.checks) {
    if (!r.pass) std::cout << "FAIL " << r.name << " [" << r.scope << "] measured=" << r.measured << " bound=" << r.bound << '\n';
  }
  return report.all_passed() ? kExitOk : kExitCheckFailed;
}

int lowerbound(std::int64_t R, std::int64_t K, const std::string& forecaster, std::size_t trials, std::uint64_t seed) {
  const auto rep = hdcal::cmd_lowerbound(R, K, hdcal::parse_lowerbound_forecaster(forecaster), trials, seed);
  std::cout << rep.to_json().dump(2) << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

int oracle(const hdcal::OracleOptions& opt) {
  const auto sum = hdcal::cmd_oracle(opt);
  std::cout << "dce vs brute force: " << sum.dce_cases << " transcripts, " << sum.dce_failures << " failures, max diff "
            << sum.max_dce_diff << '\n';
  for (const auto& c : sum.ece) {
    std::cout << "ece T=" << c.T << " exact=" << c.exact << " estimate=" << c.mean << " +- " << c.std_error
              << (c.pass ? " ok" : " FAIL") << '\n';
  }
  std::cout << (sum.pass() ? "PASS" : "FAIL") << '\n';
  return sum.pass() ? kExitOk : kExitCheckFailed;
}

int concentration(const std::string& config, std::size_t trials, std::uint64_t seed, std::optional<std::int64_t> large_S) {
  const auto cfg = hdcal::load_run_config(config);
  const auto rep = hdcal::cmd_concentration(cfg, trials, seed, large_S);
  std::cout << rep.to_json().dump(2) << '\n';
  return rep.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-dimensional online calibration: forecaster runs, proof certificates, experiments"};
  app.require_subcommand(1);

  std::string config, out, run_dir, forecaster = "truthful";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> max_days;
  std::int64_t R = 2, K = 2;
  std::size_t trials = 500;
  std::optional<std::int64_t> large_S;
  hdcal::OracleOptions oracle_opt;

  auto* run_cmd = app.add_subcommand("run", "Run the hierarchical forecaster and write transcript + metrics");
  run_cmd->add_option("--config", config, "flat key = value config file")->required();
  run_cmd->add_option("--seed", seed, "64-bit seed")->required();
  run_cmd->add_option("--out", out, "output directory")->required();
  run_cmd->add_option("--max-days", max_days, "override the day budget");

  auto* cert_cmd = app.add_subcommand("certify", "Check every inequality of the upper-bound chain on a run");
  cert_cmd->add_option("--run", run_dir, "run directory holding transcript.jsonl")->required();

  auto* lb_cmd = app.add_subcommand("lowerbound", "Monte Carlo DCE against the hard sequence");
  lb_cmd->add_option("--R", R, "levels")->required();
  lb_cmd->add_option("--K", K, "blocks per level")->required();
  lb_cmd->add_option("--forecaster", forecaster, "truthful|uniform|hierarchical");
  lb_cmd->add_option("--trials", trials, "trials")->required();
  lb_cmd->add_option("--seed", seed, "seed")->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "Compare fast metrics against brute-force oracles");
  oracle_cmd->add_option("--trials", oracle_opt.transcripts, "random transcripts");
  oracle_cmd->add_option("--max-T", oracle_opt.max_T, "maximum days");
  oracle_cmd->add_option("--max-d", oracle_opt.max_d, "maximum outcomes");
  oracle_cmd->add_option("--seed", oracle_opt.seed, "seed");

  auto* conc_cmd = app.add_subcommand("concentration", "Sampled ECE vs DCE gap at two iteration lengths");
  conc_cmd->add_option("--config", config, "config file")->required();
  conc_cmd->add_option("--trials", trials, "trials")->required();
  conc_cmd->add_option("--seed", seed, "seed")->required();
  conc_cmd->add_option("--large-S", large_S, "S of the comparison arm (default 16 S)");

  auto* hard_cmd = app.add_subcommand("hardseq", "Export a hard sequence and its tau tree");
  hard_cmd->add_option("--R", R, "levels")->required();
  hard_cmd->add_option("--K", K, "blocks per level")->required();
  hard_cmd->add_option("--seed", seed, "seed")->required();
  hard_cmd->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return run(config, seed, out, max_days);
    if (*cert_cmd) return certify(run_dir);
    if (*lb_cmd) return lowerbound(R, K, forecaster, trials, seed);
    if (*oracle_cmd) return oracle(oracle_opt);
    if (*conc_cmd) return concentration(config, trials, seed, large_S);
    if (*hard_cmd) {
      hdcal::cmd_hardseq(R, K, seed, out);
      return kExitOk;
    }
  } catch (const hdcal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
