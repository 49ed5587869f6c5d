#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ivsurv/crossfit.hpp"
#include "ivsurv/sim.hpp"

namespace ivsurv {

enum class Command { Simulate, Estimate, Bootstrap };

/// `key = value` lines; `#` starts a comment. Every key remembers its line
/// so diagnostics can point at it.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws on any key outside `known`.
  void reject_unknown(const std::vector<std::string>& known) const;
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
  const std::string& source() const { return source_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string source_;
  std::map<std::string, Entry> entries_;
};

struct RunConfig {
  Command command = Command::Estimate;
  std::uint64_t seed = 0;

  // estimate / bootstrap
  std::string dataset;
  IvKind iv_kind = IvKind::Binary;
  int tau = 30;
  EstimatorKind estimator = EstimatorKind::IfBinary;
  BootstrapConfig bootstrap;
  bool dump_replicates = false;

  // simulate
  DgpConfig dgp;
  std::string scenario = "default";
  std::vector<Specification> specifications{Specification::Correct};
  std::vector<EstimatorKind> estimators{EstimatorKind::IfBinary, EstimatorKind::Ipw, EstimatorKind::PlugIn};
  int I = 10;
  std::size_t oracle_M = 200000;

  EstimationSettings settings;
};

/// Parses a run configuration; relative dataset paths resolve against the
/// config file's directory.
RunConfig parse_run_config(const KeyValueFile& kv, Command command);
RunConfig load_run_config(const std::string& path, Command command);

}  // namespace ivsurv
