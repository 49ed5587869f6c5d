#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "doctest.h"
#include "ivsurv/cli.hpp"
#include "ivsurv/config.hpp"
#include "ivsurv/error.hpp"
#include "ivsurv/parallel.hpp"
#include "support.hpp"

using namespace ivsurv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ivsurv_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  return line;
}

// writes a simulated binary dataset; rows with z = 0 are untreated when one_sided
fs::path write_dataset(const fs::path& dir, std::size_t n, bool one_sided = false, bool continuous = false) {
  DgpConfig cfg = continuous ? DgpConfig::additive_continuous() : DgpConfig::cox_scenario(1);
  cfg.n = n;
  cfg.tau = 8;
  Rng rng(314);
  SurvivalDataset d = sample_dgp(cfg, rng).data;
  if (one_sided)
    for (auto& o : d.rows)
      if (o.z == 0.0) o.a = 0;
  const fs::path p = dir / "data.csv";
  std::ofstream f(p);
  write_csv(f, d);
  return p;
}

const char* kSimConfig =
    "preset = cox_indicator\n"
    "n = 200\n"
    "tau = 6\n"
    "I = 2\n"
    "oracle_M = 20000\n"
    "seed = 5\n";

}  // namespace

TEST_CASE("simulate writes the report and curve files") {
  const fs::path dir = scratch("sim");
  write_text(dir / "sim.cfg", kSimConfig);
  const Run r = cli({"simulate", "--config", (dir / "sim.cfg").string(), "--out", (dir / "out").string(), "--json"});
  REQUIRE(r.code == 0);
  CHECK(first_line(dir / "out" / "report.csv") == "estimator,scenario,specification,bias,rmse,I,n,failed_reps");
  for (const char* e : {"if", "ipw", "plugin"})
    CHECK(first_line(dir / "out" / (std::string("curves_") + e + ".csv")) == "t,mean_estimate,truth");
  CHECK(read_rows(dir / "out" / "report.csv").size() == 4);
  CHECK(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("simulate: integrated bias round-trips through the curve files") {
  const fs::path dir = scratch("roundtrip");
  write_text(dir / "sim.cfg", std::string(kSimConfig) + "specifications = correct, wrong_pi_mu\n");
  REQUIRE(cli({"simulate", "--config", (dir / "sim.cfg").string(), "--out", dir.string()}).code == 0);
  const auto report = read_rows(dir / "report.csv");
  CHECK(report.size() == 7);
  for (std::size_t i = 1; i < report.size(); ++i) {
    const std::string est = report[i][0], spec = report[i][2];
    const auto curve = read_rows(dir / ("curves_" + est + "_" + spec + ".csv"));
    double bias = 0.0;
    for (std::size_t t = 1; t < curve.size(); ++t) bias += std::abs(std::stod(curve[t][1]) - std::stod(curve[t][2]));
    bias /= static_cast<double>(curve.size() - 1);
    CHECK(std::abs(bias - std::stod(report[i][3])) < 1e-9);
  }
}

TEST_CASE("estimate matches the library pipeline") {
  const fs::path dir = scratch("estimate");
  const fs::path data = write_dataset(dir, 300);
  write_text(dir / "est.cfg", "dataset = data.csv\ntau = 8\nestimator = if\nK = 2\nseed = 9\n");
  const Run r = cli({"estimate", "--config", (dir / "est.cfg").string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = read_rows(dir / "estimate.csv");
  REQUIRE(rows.size() == 9);
  CHECK(first_line(dir / "estimate.csv") == "t,psi,denominator,weak_instrument_flag");

  const RunConfig rc = load_run_config((dir / "est.cfg").string(), Command::Estimate);
  const SurvivalDataset d = read_csv_file(data.string(), 8, IvKind::Binary);
  const EstimateCurve c = run_pipeline(d, TimeGrid::unit(8), rc.settings, 9);
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(std::stoi(rows[t + 1][0]) == static_cast<int>(t + 1));
    CHECK(std::abs(std::stod(rows[t + 1][1]) - c.psi[t]) <= 1e-10 * std::max(1.0, std::abs(c.psi[t])));
  }
}

TEST_CASE("estimate with one-sided noncompliance runs the pi_0 = 0 path") {
  const fs::path dir = scratch("onesided");
  const fs::path data = write_dataset(dir, 300, true);
  write_text(dir / "est.cfg", "dataset = data.csv\ntau = 8\nestimator = if\nK = 2\none_sided = true\nseed = 2\n");
  REQUIRE(cli({"estimate", "--config", (dir / "est.cfg").string(), "--out", dir.string()}).code == 0);
  const SurvivalDataset d = read_csv_file(data.string(), 8, IvKind::Binary);
  EstimationSettings s;
  s.K = 2;
  s.nuisance.one_sided = true;
  const EstimateCurve c = run_pipeline(d, TimeGrid::unit(8), s, 2);
  std::ostringstream want;
  want << std::setprecision(12) << "t,psi,denominator,weak_instrument_flag\n";
  for (std::size_t t = 0; t < 8; ++t) want << t + 1 << ',' << c.psi[t] << ',' << c.denominator << ",0\n";
  CHECK(read_text(dir / "estimate.csv") == want.str());
}

TEST_CASE("bootstrap adds band columns and optional replicates") {
  const fs::path dir = scratch("boot");
  write_dataset(dir, 250);
  write_text(dir / "b.cfg", "dataset = data.csv\ntau = 8\nestimator = plugin\nK = 1\nB = 2\ndump_replicates = true\n");
  REQUIRE(cli({"bootstrap", "--config", (dir / "b.cfg").string(), "--out", dir.string()}).code == 0);
  CHECK(first_line(dir / "estimate.csv") == "t,psi,denominator,weak_instrument_flag,ci_lo,ci_hi");
  CHECK(first_line(dir / "replicates.csv") == "replicate,t,psi");
  CHECK(read_rows(dir / "replicates.csv").size() == 1 + 2 * 8);
}

TEST_CASE("bootstrap bands follow the percentile definition and nest") {
  const fs::path dir = scratch("bands");
  write_dataset(dir, 250);
  const std::string base = "dataset = data.csv\ntau = 8\nestimator = if\nK = 1\nB = 40\ndump_replicates = true\nseed = 3\n";
  write_text(dir / "wide.cfg", base + "alpha = 0.05\n");
  write_text(dir / "narrow.cfg", base + "alpha = 0.5\n");
  REQUIRE(cli({"bootstrap", "--config", (dir / "wide.cfg").string(), "--out", (dir / "w").string()}).code == 0);
  REQUIRE(cli({"bootstrap", "--config", (dir / "narrow.cfg").string(), "--out", (dir / "n").string()}).code == 0);
  const auto w = read_rows(dir / "w" / "estimate.csv"), n = read_rows(dir / "n" / "estimate.csv");
  const auto reps = read_rows(dir / "w" / "replicates.csv");
  int covered = 0;
  for (std::size_t t = 1; t <= 8; ++t) {
    const double psi = std::stod(w[t][1]);
    const double wlo = std::stod(w[t][4]), whi = std::stod(w[t][5]);
    CHECK(wlo <= std::stod(n[t][4]));
    CHECK(std::stod(n[t][5]) <= whi);
    covered += wlo <= psi && psi <= whi;
    // the band ends are replicate values
    std::vector<double> col;
    for (std::size_t r = 1; r < reps.size(); ++r)
      if (std::stoi(reps[r][1]) == static_cast<int>(t)) col.push_back(std::stod(reps[r][2]));
    CHECK(*std::min_element(col.begin(), col.end()) <= wlo);
    CHECK(whi <= *std::max_element(col.begin(), col.end()));
  }
  CHECK(covered >= 8 * 95 / 100);
}

TEST_CASE("every command is byte-identical across runs and thread counts") {
  const fs::path dir = scratch("determinism");
  write_dataset(dir, 250);
  write_text(dir / "sim.cfg", kSimConfig);
  write_text(dir / "est.cfg", "dataset = data.csv\ntau = 8\nestimator = ipw\nK = 3\nseed = 4\n");
  write_text(dir / "boot.cfg", "dataset = data.csv\ntau = 8\nestimator = if\nK = 2\nB = 4\ndump_replicates = true\n");
  const std::tuple<std::string, std::string, std::vector<std::string>> cmds[] = {
      {"simulate", "sim.cfg", {"report.csv", "curves_if.csv", "report.json"}},
      {"estimate", "est.cfg", {"estimate.csv"}},
      {"bootstrap", "boot.cfg", {"estimate.csv", "replicates.csv"}},
  };
  for (const auto& [cmd, name, files] : cmds) {
    const std::string cfg = (dir / name).string();
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "3"}) {
      const fs::path out = dir / (cmd + threads + std::to_string(outputs.size()));
      std::vector<std::string> args{cmd, "--config", cfg, "--out", out.string(), "--threads", threads, "--seed", "17"};
      if (cmd == "simulate") args.push_back("--json");
      REQUIRE(cli(args).code == 0);
      std::string all;
      for (const auto& f : files) all += read_text(out / f);
      outputs.push_back(all);
    }
    CHECK(outputs[0] == outputs[1]);
    CHECK(outputs[0] == outputs[2]);
  }
  set_thread_count(1);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"simulate"}).code == kExitConfig);
  CHECK(cli({"frobnicate", "--config", "x"}).code == kExitConfig);

  write_text(dir / "bad.cfg", "n = 200\nbogus_key = 1\n");
  Run r = cli({"simulate", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("bad.cfg:2") != std::string::npos);
  CHECK(r.err.find("bogus_key") != std::string::npos);

  write_text(dir / "missing.cfg", "dataset = nowhere.csv\n");
  CHECK(cli({"estimate", "--config", (dir / "missing.cfg").string(), "--out", dir.string()}).code == kExitConfig);

  write_dataset(dir, 200, false, true);
  write_text(dir / "cont.cfg", "dataset = data.csv\ntau = 8\niv_kind = continuous\nestimator = if\n");
  r = cli({"estimate", "--config", (dir / "cont.cfg").string(), "--out", dir.string()});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("IncompatibleInstrument") != std::string::npos);

  write_text(dir / "schema.csv", "x1,z,a,time,event\n0.1,1,2,3,1\n");
  write_text(dir / "schema.cfg", "dataset = schema.csv\ntau = 3\n");
  CHECK(cli({"estimate", "--config", (dir / "schema.cfg").string(), "--out", dir.string()}).code == kExitData);

  write_dataset(dir, 10);
  write_text(dir / "k.cfg", "dataset = data.csv\ntau = 8\nK = 50\n");
  CHECK(cli({"estimate", "--config", (dir / "k.cfg").string(), "--out", dir.string()}).code == kExitConfig);

  CHECK(exit_code_for(ErrorCode::BootstrapUnstable) == kExitNumerical);
  CHECK(exit_code_for(ErrorCode::EmptyCell) == kExitNumerical);
  CHECK(exit_code_for(ErrorCode::CsvSchema) == kExitData);
}

TEST_CASE("config parsing diagnostics") {
  std::istringstream dup("a = 1\na = 2\n");
  CHECK_THROWS_AS(KeyValueFile::parse(dup, "t.cfg"), Error);
  std::istringstream noeq("just words\n");
  CHECK_THROWS_AS(KeyValueFile::parse(noeq, "t.cfg"), Error);
  std::istringstream ok("# comment\nn = 5  # trailing\nlist = 1, 2,3\nflag = yes\n");
  const KeyValueFile kv = KeyValueFile::parse(ok, "t.cfg");
  CHECK(kv.get_int("n", 0) == 5);
  CHECK(kv.get_doubles("list", {}) == std::vector<double>{1, 2, 3});
  CHECK(kv.get_bool("flag", false));
  try {
    kv.get_bool("n", false);
    FAIL("expected a Config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).find("t.cfg:2") != std::string::npos);
  }
}

TEST_CASE("the installed binary runs as a subprocess") {
  const char* bin = std::getenv("IVSURV_CLI");
  if (!bin) return;
  const fs::path dir = scratch("binary");
  write_text(dir / "sim.cfg", kSimConfig);
  const std::string cmd = std::string("\"") + bin + "\" simulate --config \"" + (dir / "sim.cfg").string() +
                          "\" --out \"" + dir.string() + "\" > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "report.csv"));
  const std::string bad = std::string("\"") + bin + "\" estimate 2> /dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == kExitConfig);
}
