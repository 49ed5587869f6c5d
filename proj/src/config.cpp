#include "ivsurv/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ivsurv/error.hpp"

namespace ivsurv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::Config, source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::Config, source + ":" + std::to_string(lineno) + ": empty key");
    if (kv.entries_.count(key))
      throw Error(ErrorCode::Config, source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv.entries_[key] = {value, lineno};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open config file '" + path + "'");
  return parse(in, path);
}

void KeyValueFile::fail(const std::string& key, const std::string& why) const {
  const auto it = entries_.find(key);
  const std::string where = it == entries_.end() ? source_ : source_ + ":" + std::to_string(it->second.line);
  throw Error(ErrorCode::Config, where + ": key '" + key + "': " + why);
}

std::string KeyValueFile::get(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  double v;
  if (!parse_number(get(key, ""), v)) fail(key, "expected a number");
  return v;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  long long v;
  if (!parse_number(get(key, ""), v)) fail(key, "expected an integer");
  return v;
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  std::uint64_t v;
  if (!parse_number(get(key, ""), v)) fail(key, "expected a non-negative integer");
  return v;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, "expected true or false");
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(get(key, ""))) {
    double v;
    if (!parse_number(item, v)) fail(key, "'" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  return split_list(get(key, ""));
}

void KeyValueFile::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, entry] : entries_) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) fail(key, "unknown key");
  }
}

namespace {

const std::vector<std::string> kLearnerKeys = {
    "learner",     "trunc_eps", "hazard_trunc_eps", "outcome_trunc_eps", "hazard_fit", "n_trees",     "min_node",
    "mtry",        "subsample", "max_bins",         "density",    "K",           "kappa",
    "denom_floor", "one_sided", "seed",
};

const std::vector<std::string> kDataKeys = {"dataset", "iv_kind", "tau", "estimator", "B", "alpha", "dump_replicates"};

const std::vector<std::string> kSimKeys = {
    "preset",  "family",     "iv_kind",    "censoring",  "n",          "tau",        "I",          "oracle_M",
    "scenario", "specifications", "estimators", "kappa_coef", "kappa_tilde", "alpha_x",  "alpha_0",    "alpha_z",
    "alpha_u", "beta_x",     "beta_a",     "beta_u",     "c1",         "c2",         "gamma_x",    "gamma_z",
    "gamma_a", "uniform_lo", "uniform_hi", "gap_lo",     "gap_hi",     "fixed_time", "discretize",
};

IvKind parse_iv_kind(const KeyValueFile& kv, IvKind fallback) {
  if (!kv.has("iv_kind")) return fallback;
  const std::string v = kv.get("iv_kind", "");
  if (v == "binary") return IvKind::Binary;
  if (v == "continuous") return IvKind::Continuous;
  kv.fail("iv_kind", "expected binary or continuous");
}

EstimatorKind parse_estimator_key(const KeyValueFile& kv, const std::string& key, const std::string& name) {
  const auto k = parse_estimator(name);
  if (!k) kv.fail(key, "unknown estimator '" + name + "'");
  return *k;
}

void parse_settings(const KeyValueFile& kv, EstimationSettings& s, int default_k) {
  LearnerConfig& l = s.learner;
  const std::string method = kv.get("learner", "logistic");
  if (method == "logistic")
    l.method = LearnerMethod::LogisticParametric;
  else if (method == "forest")
    l.method = LearnerMethod::TreeEnsemble;
  else
    kv.fail("learner", "expected logistic or forest");
  l.trunc_eps = kv.get_double("trunc_eps", l.trunc_eps);
  if (kv.has("hazard_trunc_eps")) l.hazard_trunc_eps = kv.get_double("hazard_trunc_eps", 0.0);
  if (kv.has("outcome_trunc_eps")) l.outcome_trunc_eps = kv.get_double("outcome_trunc_eps", 0.0);
  const std::string hf = kv.get("hazard_fit", "pooled");
  if (hf == "pooled")
    l.hazard_fit = HazardFit::Pooled;
  else if (hf == "per_time")
    l.hazard_fit = HazardFit::PerTime;
  else
    kv.fail("hazard_fit", "expected pooled or per_time");
  l.forest.n_trees = static_cast<int>(kv.get_int("n_trees", l.forest.n_trees));
  l.forest.min_node = static_cast<int>(kv.get_int("min_node", l.forest.min_node));
  l.forest.mtry = static_cast<int>(kv.get_int("mtry", l.forest.mtry));
  l.forest.subsample = kv.get_double("subsample", l.forest.subsample);
  l.forest.max_bins = static_cast<int>(kv.get_int("max_bins", l.forest.max_bins));
  const std::string dm = kv.get("density", "gaussian");
  if (dm == "gaussian")
    l.density = DensityMethod::ConditionalGaussian;
  else if (dm == "kernel")
    l.density = DensityMethod::KernelResidual;
  else
    kv.fail("density", "expected gaussian or kernel");
  try {
    l.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, kv.source() + ": " + e.what());
  }
  s.K = static_cast<int>(kv.get_int("K", default_k));
  if (s.K < 1) kv.fail("K", "must be >= 1");
  s.kappa = kv.get_double("kappa", s.kappa);
  if (!(s.kappa > 0.0)) kv.fail("kappa", "must be positive");
  s.denom_floor = kv.get_double("denom_floor", s.denom_floor);
  s.nuisance.one_sided = kv.get_bool("one_sided", false);
}

void apply_preset(const KeyValueFile& kv, DgpConfig& d) {
  const std::string p = kv.get("preset", "cox_indicator");
  if (p == "cox_indicator")
    d = DgpConfig::cox_indicator();
  else if (p == "cox_scenario1")
    d = DgpConfig::cox_scenario(1);
  else if (p == "cox_scenario2")
    d = DgpConfig::cox_scenario(2);
  else if (p == "cox_scenario3")
    d = DgpConfig::cox_scenario(3);
  else if (p == "additive_binary")
    d = DgpConfig::additive_binary();
  else if (p == "additive_continuous")
    d = DgpConfig::additive_continuous();
  else
    kv.fail("preset", "unknown preset '" + p + "'");
}

void parse_dgp(const KeyValueFile& kv, DgpConfig& d) {
  apply_preset(kv, d);
  if (kv.has("family")) {
    const auto f = parse_family(kv.get("family", ""));
    if (!f) kv.fail("family", "expected cox or additive");
    d.family = *f;
  }
  d.iv_kind = parse_iv_kind(kv, d.iv_kind);
  if (kv.has("censoring")) {
    const auto c = parse_censoring(kv.get("censoring", ""));
    if (!c) kv.fail("censoring", "expected indicator, uniform, gap or fixed");
    d.censoring = *c;
  }
  const long long n = kv.get_int("n", static_cast<long long>(d.n));
  if (n < 1) kv.fail("n", "must be >= 1");
  d.n = static_cast<std::size_t>(n);
  d.tau = static_cast<int>(kv.get_int("tau", d.tau));
  d.kappa_coef = kv.get_doubles("kappa_coef", d.kappa_coef);
  d.kappa_tilde = kv.get_doubles("kappa_tilde", d.kappa_tilde);
  d.alpha_x = kv.get_doubles("alpha_x", d.alpha_x);
  d.alpha_0 = kv.get_double("alpha_0", d.alpha_0);
  d.alpha_z = kv.get_double("alpha_z", d.alpha_z);
  d.alpha_u = kv.get_double("alpha_u", d.alpha_u);
  d.beta_x = kv.get_doubles("beta_x", d.beta_x);
  d.beta_a = kv.get_double("beta_a", d.beta_a);
  d.beta_u = kv.get_double("beta_u", d.beta_u);
  d.c1 = kv.get_double("c1", d.c1);
  d.c2 = kv.get_double("c2", d.c2);
  d.gamma_x = kv.get_doubles("gamma_x", d.gamma_x);
  d.gamma_z = kv.get_double("gamma_z", d.gamma_z);
  d.gamma_a = kv.get_double("gamma_a", d.gamma_a);
  d.uniform_lo = kv.get_double("uniform_lo", d.uniform_lo);
  d.uniform_hi = kv.get_double("uniform_hi", d.uniform_hi);
  d.gap_lo = kv.get_double("gap_lo", d.gap_lo);
  d.gap_hi = kv.get_double("gap_hi", d.gap_hi);
  d.fixed_time = kv.get_double("fixed_time", d.fixed_time);
  d.discretize = kv.get_bool("discretize", d.discretize);
  try {
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, kv.source() + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const KeyValueFile& kv, Command command) {
  RunConfig rc;
  rc.command = command;
  std::vector<std::string> known = kLearnerKeys;
  const auto& extra = command == Command::Simulate ? kSimKeys : kDataKeys;
  known.insert(known.end(), extra.begin(), extra.end());
  kv.reject_unknown(known);

  rc.seed = kv.get_u64("seed", 0);
  if (command == Command::Simulate) {
    parse_settings(kv, rc.settings, 2);
    parse_dgp(kv, rc.dgp);
    rc.scenario = kv.get("scenario", "default");
    rc.I = static_cast<int>(kv.get_int("I", rc.I));
    if (rc.I < 1) kv.fail("I", "must be >= 1");
    const long long m = kv.get_int("oracle_M", static_cast<long long>(rc.oracle_M));
    if (m < 1) kv.fail("oracle_M", "must be >= 1");
    rc.oracle_M = static_cast<std::size_t>(m);
    rc.specifications.clear();
    for (const auto& s : kv.get_list("specifications", {"correct"})) {
      const auto sp = parse_specification(s);
      if (!sp) kv.fail("specifications", "unknown specification '" + s + "'");
      rc.specifications.push_back(*sp);
    }
    const std::vector<std::string> def = rc.dgp.iv_kind == IvKind::Continuous
                                             ? std::vector<std::string>{"if_continuous", "ipw_continuous",
                                                                        "plugin_continuous"}
                                             : std::vector<std::string>{"if", "ipw", "plugin"};
    rc.estimators.clear();
    for (const auto& e : kv.get_list("estimators", def)) {
      const EstimatorKind k = parse_estimator_key(kv, "estimators", e);
      if (is_continuous(k) != (rc.dgp.iv_kind == IvKind::Continuous))
        kv.fail("estimators", std::string("'") + e + "' does not match the instrument type");
      rc.estimators.push_back(k);
    }
    if (rc.estimators.empty()) kv.fail("estimators", "list is empty");
    return rc;
  }

  parse_settings(kv, rc.settings, 10);
  if (!kv.has("dataset")) throw Error(ErrorCode::Config, kv.source() + ": missing key 'dataset'");
  std::filesystem::path p = kv.get("dataset", "");
  if (p.is_relative() && kv.source().find('/') != std::string::npos)
    p = std::filesystem::path(kv.source()).parent_path() / p;
  if (!std::filesystem::exists(p)) kv.fail("dataset", "file '" + p.string() + "' does not exist");
  rc.dataset = p.string();
  rc.iv_kind = parse_iv_kind(kv, IvKind::Binary);
  rc.tau = static_cast<int>(kv.get_int("tau", rc.tau));
  if (rc.tau < 1) kv.fail("tau", "must be >= 1");
  rc.estimator = parse_estimator_key(kv, "estimator", kv.get("estimator", "if"));
  rc.settings.kind = rc.estimator;
  rc.bootstrap.B = static_cast<int>(kv.get_int("B", rc.bootstrap.B));
  rc.bootstrap.alpha = kv.get_double("alpha", rc.bootstrap.alpha);
  try {
    rc.bootstrap.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, kv.source() + ": " + e.what());
  }
  rc.dump_replicates = kv.get_bool("dump_replicates", false);
  return rc;
}

RunConfig load_run_config(const std::string& path, Command command) {
  return parse_run_config(KeyValueFile::load(path), command);
}

}  // namespace ivsurv
