#include "ivsurv/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include "CLI11.hpp"
#include "ivsurv/config.hpp"
#include "ivsurv/parallel.hpp"

namespace ivsurv {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::KTooLarge:
    case ErrorCode::KappaNonPositive:
      return kExitConfig;
    case ErrorCode::EmptyDataset:
    case ErrorCode::NonBinaryTreatment:
    case ErrorCode::NonBinaryInstrument:
    case ErrorCode::DegenerateArm:
    case ErrorCode::InvalidObservation:
    case ErrorCode::CsvSchema:
    case ErrorCode::NonFiniteFeature:
    case ErrorCode::IncompatibleInstrument:
    case ErrorCode::DimensionMismatch:
      return kExitData;
    default:
      return kExitNumerical;
  }
}

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorCode::Config, "cannot write '" + p.string() + "'");
  f << std::setprecision(12);
  return f;
}

void write_number(std::ostream& out, double v) {
  if (std::isnan(v))
    out << "NaN";
  else
    out << v;
}

void write_estimate(const fs::path& p, const EstimateCurve& c, bool with_band) {
  auto f = open_out(p);
  f << "t,psi,denominator,weak_instrument_flag";
  if (with_band) f << ",ci_lo,ci_hi";
  f << '\n';
  for (std::size_t t = 0; t < c.grid.size(); ++t) {
    f << c.grid.points[t] << ',';
    write_number(f, c.psi[t]);
    f << ',';
    write_number(f, c.denominator);
    f << ',' << (c.weak_instrument ? 1 : 0);
    if (with_band) {
      f << ',';
      write_number(f, c.ci_lo[t]);
      f << ',';
      write_number(f, c.ci_hi[t]);
    }
    f << '\n';
  }
}

SurvivalDataset load_dataset(const RunConfig& rc) {
  if (is_continuous(rc.estimator) != (rc.iv_kind == IvKind::Continuous))
    throw Error(ErrorCode::IncompatibleInstrument, std::string("estimator '") + estimator_name(rc.estimator) +
                                                       "' does not match iv_kind of the dataset");
  SurvivalDataset data = read_csv_file(rc.dataset, rc.tau, rc.iv_kind);
  if (is_hazard(rc.estimator)) data = discretize_times(std::move(data));
  return validate_dataset(std::move(data));
}

int cmd_simulate(const RunConfig& rc, const fs::path& outdir, bool json, std::ostream& out) {
  const TimeGrid grid = TimeGrid::unit(rc.dgp.tau);
  const OracleCurve oracle = oracle_late(rc.dgp, grid, rc.oracle_M, stream_seed(rc.seed, 0x7a17), rc.settings.kappa);
  std::vector<SimReport> reports;
  for (Specification spec : rc.specifications) {
    StudyConfig sc;
    sc.dgp = rc.dgp;
    sc.scenario = rc.scenario;
    sc.specification = spec;
    sc.estimators = rc.estimators;
    sc.I = rc.I;
    sc.settings = rc.settings;
    sc.oracle_M = rc.oracle_M;
    sc.seed = rc.seed;
    sc.truth = oracle.late;
    reports.push_back(run_study(sc));
  }
  {
    auto f = open_out(outdir / "report.csv");
    write_report_csv(f, reports);
  }
  for (EstimatorKind k : rc.estimators) {
    auto f = open_out(outdir / (std::string("curves_") + estimator_name(k) + ".csv"));
    write_curve_csv(f, reports.front(), k);
    if (reports.size() > 1)
      for (const auto& r : reports) {
        auto g = open_out(outdir / (std::string("curves_") + estimator_name(k) + "_" +
                                    specification_name(r.specification) + ".csv"));
        write_curve_csv(g, r, k);
      }
  }
  if (json) {
    auto f = open_out(outdir / "report.json");
    f << report_json(reports) << '\n';
  }
  out << "complier fraction " << oracle.complier_fraction << ", wrote " << (outdir / "report.csv").string() << '\n';
  return kExitOk;
}

int cmd_estimate(const RunConfig& rc, const fs::path& outdir, std::ostream& out, std::ostream& err) {
  const SurvivalDataset data = load_dataset(rc);
  const TimeGrid grid = TimeGrid::unit(rc.tau);
  const EstimateCurve c = run_pipeline(data, grid, rc.settings, rc.seed);
  write_estimate(outdir / "estimate.csv", c, false);
  if (c.weak_instrument) err << "warning: weak instrument, denominator " << c.denominator << '\n';
  out << "wrote " << (outdir / "estimate.csv").string() << '\n';
  return kExitOk;
}

int cmd_bootstrap(const RunConfig& rc, const fs::path& outdir, std::ostream& out, std::ostream& err) {
  const SurvivalDataset data = load_dataset(rc);
  const TimeGrid grid = TimeGrid::unit(rc.tau);
  BootstrapConfig bc = rc.bootstrap;
  bc.seed = stream_seed(rc.seed, 0xb007);
  const BootstrapResult res = bootstrap_curve(data, grid, rc.settings, bc, rc.seed);
  write_estimate(outdir / "estimate.csv", res.curve, true);
  if (rc.dump_replicates) {
    auto f = open_out(outdir / "replicates.csv");
    f << "replicate,t,psi\n";
    for (std::size_t b = 0; b < res.replicates.size(); ++b)
      for (std::size_t t = 0; t < grid.size(); ++t) {
        f << b << ',' << grid.points[t] << ',';
        write_number(f, res.replicates[b][t]);
        f << '\n';
      }
  }
  if (res.failed > 0) err << "note: " << res.failed << " bootstrap draws were redrawn\n";
  out << "wrote " << (outdir / "estimate.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instrumental-variable survival estimation"};
  app.require_subcommand(1);
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool json = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--threads", threads, "worker threads; 0 uses every core")->check(CLI::NonNegativeNumber);
  };
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study");
  add_common(sim);
  sim->add_flag("--json", json, "also write report.json");
  CLI::App* est = app.add_subcommand("estimate", "point estimate on a CSV dataset");
  add_common(est);
  CLI::App* boot = app.add_subcommand("bootstrap", "percentile bootstrap band");
  add_common(boot);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const Command cmd = sim->parsed() ? Command::Simulate : est->parsed() ? Command::Estimate : Command::Bootstrap;
  try {
    RunConfig rc = load_run_config(config_path, cmd);
    if (seed) rc.seed = *seed;
    rc.dgp.seed = rc.seed;
    set_thread_count(threads);
    const fs::path outdir(out_dir);
    std::error_code ec;
    fs::create_directories(outdir, ec);
    if (ec) throw Error(ErrorCode::Config, "cannot create output directory '" + out_dir + "'");
    switch (cmd) {
      case Command::Simulate:
        return cmd_simulate(rc, outdir, json, out);
      case Command::Estimate:
        return cmd_estimate(rc, outdir, out, err);
      case Command::Bootstrap:
        return cmd_bootstrap(rc, outdir, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace ivsurv
