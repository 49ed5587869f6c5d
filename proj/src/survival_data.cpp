#include "ivsurv/survival_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "ivsurv/error.hpp"

namespace ivsurv {

Eigen::MatrixXd SurvivalDataset::covariates() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < q; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].x0[j];
  return x;
}

TimeGrid TimeGrid::unit(int tau) {
  if (tau < 1) throw Error(ErrorCode::InvalidObservation, "tau must be >= 1");
  TimeGrid g;
  g.points.resize(static_cast<std::size_t>(tau));
  for (int t = 1; t <= tau; ++t) g.points[static_cast<std::size_t>(t - 1)] = t;
  return g;
}

SurvivalDataset validate_dataset(SurvivalDataset raw) {
  if (raw.rows.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no rows");
  if (raw.tau < 1) throw Error(ErrorCode::InvalidObservation, "tau must be >= 1");

  bool a_seen[2] = {false, false};
  bool z_seen[2] = {false, false};
  double z_min = raw.rows.front().z, z_max = raw.rows.front().z;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const Observation& o = raw.rows[i];
    const std::string where = "row " + std::to_string(i);
    if (o.x0.size() != raw.q)
      throw Error(ErrorCode::InvalidObservation, where + ": covariate length " + std::to_string(o.x0.size()) +
                                                     " != q=" + std::to_string(raw.q));
    for (double v : o.x0)
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidObservation, where + ": non-finite covariate");
    if (!std::isfinite(o.time) || o.time < 0.0)
      throw Error(ErrorCode::InvalidObservation, where + ": time must be finite and >= 0");
    if (o.a != 0 && o.a != 1) throw Error(ErrorCode::NonBinaryTreatment, where + ": a not in {0,1}");
    if (o.r != 0 && o.r != 1) throw Error(ErrorCode::InvalidObservation, where + ": event not in {0,1}");
    if (!std::isfinite(o.z)) throw Error(ErrorCode::InvalidObservation, where + ": non-finite instrument");
    if (raw.iv_kind == IvKind::Binary) {
      if (o.z != 0.0 && o.z != 1.0) throw Error(ErrorCode::NonBinaryInstrument, where + ": z not in {0,1}");
      z_seen[o.z == 1.0] = true;
    }
    a_seen[o.a] = true;
    z_min = std::min(z_min, o.z);
    z_max = std::max(z_max, o.z);
  }
  if (!a_seen[0] || !a_seen[1]) throw Error(ErrorCode::DegenerateArm, "both treatment arms must be present");
  if (raw.iv_kind == IvKind::Binary && (!z_seen[0] || !z_seen[1]))
    throw Error(ErrorCode::DegenerateArm, "both instrument arms must be present");
  if (raw.iv_kind == IvKind::Continuous && !(z_max > z_min))
    throw Error(ErrorCode::DegenerateArm, "instrument has a degenerate range");
  return raw;
}

SurvivalDataset discretize_times(SurvivalDataset data) {
  for (Observation& o : data.rows) o.time = std::max(1.0, std::floor(o.time));
  return data;
}

std::optional<int> survival_indicator(const Observation& obs, int t) {
  if (obs.time > t) return 1;
  if (obs.r == 1) return 0;
  return std::nullopt;
}

RiskCounters risk_counters(const Observation& obs, int k) {
  RiskCounters c;
  c.at_risk = obs.time > k - 1 ? 1 : 0;
  const bool at_k = obs.time == static_cast<double>(k);
  c.event = at_k && obs.r == 1 ? 1 : 0;
  c.censored = at_k && obs.r == 0 ? 1 : 0;
  return c;
}

SurvivalDataset subset(const SurvivalDataset& data, std::span<const std::size_t> rows) {
  SurvivalDataset out;
  out.q = data.q;
  out.tau = data.tau;
  out.iv_kind = data.iv_kind;
  out.rows.reserve(rows.size());
  for (std::size_t i : rows) out.rows.push_back(data.rows.at(i));
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last)
    throw Error(ErrorCode::CsvSchema, where + ": not a number: '" + field + "'");
  return v;
}

int parse_binary(const std::string& field, const std::string& where, ErrorCode code) {
  const double v = parse_number(field, where);
  if (v != 0.0 && v != 1.0) throw Error(code, where + ": expected 0 or 1, got '" + field + "'");
  return static_cast<int>(v);
}

}  // namespace

SurvivalDataset read_csv(std::istream& in, int tau, IvKind kind, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  // skip UTF-8 BOM / blank lines before the header
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos)
    throw Error(ErrorCode::EmptyDataset, source + ": no header");

  const auto header = split_fields(line);
  if (header.size() < 4) throw Error(ErrorCode::CsvSchema, source + ":1: header needs x1..xq,z,a,time,event");
  const std::size_t q = header.size() - 4;
  for (std::size_t j = 0; j < q; ++j)
    if (header[j] != "x" + std::to_string(j + 1))
      throw Error(ErrorCode::CsvSchema, source + ":" + std::to_string(line_no) + ": expected column x" +
                                            std::to_string(j + 1) + ", found '" + header[j] + "'");
  const char* tail[] = {"z", "a", "time", "event"};
  for (std::size_t j = 0; j < 4; ++j)
    if (header[q + j] != tail[j])
      throw Error(ErrorCode::CsvSchema, source + ":" + std::to_string(line_no) + ": expected column " + tail[j] +
                                            ", found '" + header[q + j] + "'");

  SurvivalDataset data;
  data.q = q;
  data.tau = tau;
  data.iv_kind = kind;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::CsvSchema, where + ": expected " + std::to_string(header.size()) + " fields, found " +
                                            std::to_string(fields.size()));
    Observation o;
    o.x0.resize(q);
    for (std::size_t j = 0; j < q; ++j) {
      o.x0[j] = parse_number(fields[j], where);
      if (!std::isfinite(o.x0[j])) throw Error(ErrorCode::CsvSchema, where + ": non-finite covariate");
    }
    o.z = parse_number(fields[q], where);
    if (kind == IvKind::Binary && o.z != 0.0 && o.z != 1.0)
      throw Error(ErrorCode::NonBinaryInstrument, where + ": z must be 0 or 1 for a binary instrument");
    o.a = parse_binary(fields[q + 1], where, ErrorCode::NonBinaryTreatment);
    o.time = parse_number(fields[q + 2], where);
    if (!(o.time >= 0.0)) throw Error(ErrorCode::InvalidObservation, where + ": time must be >= 0");
    o.r = parse_binary(fields[q + 3], where, ErrorCode::CsvSchema);
    data.rows.push_back(std::move(o));
  }
  return validate_dataset(std::move(data));
}

SurvivalDataset read_csv_file(const std::string& path, int tau, IvKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::CsvSchema, "cannot open " + path);
  return read_csv(in, tau, kind, path);
}

void write_csv(std::ostream& out, const SurvivalDataset& data) {
  const auto old_precision = out.precision(12);
  for (std::size_t j = 0; j < data.q; ++j) out << 'x' << j + 1 << ',';
  out << "z,a,time,event\n";
  for (const Observation& o : data.rows) {
    for (double v : o.x0) out << v << ',';
    out << o.z << ',' << o.a << ',' << o.time << ',' << o.r << '\n';
  }
  out.precision(old_precision);
}

}  // namespace ivsurv
