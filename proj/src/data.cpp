#include "dcreg/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcreg/csv.hpp"
#include "dcreg/error.hpp"

namespace dcreg {

// ---------------------------------------------------------------------------
// enum spellings

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::IM: return "im";
    case Approach::A: return "a";
    case Approach::B: return "b";
  }
  return "?";
}

std::string_view to_string(CensoringMethod m) {
  switch (m) {
    case CensoringMethod::StratifiedEcdf: return "ecdf";
    case CensoringMethod::Cox: return "cox";
    case CensoringMethod::CoxGap: return "coxgap";
    case CensoringMethod::Forest: return "srf";
    case CensoringMethod::True: return "true";
    case CensoringMethod::KaplanMeier: return "km";
  }
  return "?";
}

std::string_view to_string(SeMethod m) {
  switch (m) {
    case SeMethod::Sandwich: return "sandwich";
    case SeMethod::Bootstrap: return "bootstrap";
    case SeMethod::Both: return "both";
  }
  return "?";
}

namespace {
std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return out;
}
}  // namespace

Approach parse_approach(std::string_view s) {
  const auto k = lower(csv::trim(s));
  if (k == "im") return Approach::IM;
  if (k == "a") return Approach::A;
  if (k == "b") return Approach::B;
  throw Error(ErrorCode::InvalidParameter, "unknown approach '" + std::string(s) + "'");
}

CensoringMethod parse_censoring_method(std::string_view s) {
  const auto k = lower(csv::trim(s));
  if (k == "ecdf" || k == "strat_ecdf") return CensoringMethod::StratifiedEcdf;
  if (k == "cox") return CensoringMethod::Cox;
  if (k == "coxgap" || k == "cox_gap") return CensoringMethod::CoxGap;
  if (k == "srf" || k == "forest") return CensoringMethod::Forest;
  if (k == "true") return CensoringMethod::True;
  if (k == "km") return CensoringMethod::KaplanMeier;
  throw Error(ErrorCode::InvalidParameter, "unknown censoring method '" + std::string(s) + "'");
}

SeMethod parse_se_method(std::string_view s) {
  const auto k = lower(csv::trim(s));
  if (k == "sandwich") return SeMethod::Sandwich;
  if (k == "bootstrap") return SeMethod::Bootstrap;
  if (k == "both") return SeMethod::Both;
  throw Error(ErrorCode::InvalidParameter, "unknown se method '" + std::string(s) + "'");
}

std::size_t ForestParams::resolved_mtry(std::size_t p) const {
  if (mtry != 0) return mtry;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
}

void ForestParams::validate(std::size_t p) const {
  if (n_trees < 1) throw Error(ErrorCode::InvalidParameter, "n_trees must be >= 1");
  if (min_node_size < 1) throw Error(ErrorCode::InvalidParameter, "min_node_size must be >= 1");
  const auto m = resolved_mtry(p);
  if (p == 0 || m < 1 || m > p)
    throw Error(ErrorCode::InvalidParameter, "mtry must lie in [1, p]");
}

std::size_t StrataSpec::stratum_of(double value) const {
  return static_cast<std::size_t>(std::upper_bound(cutpoints.begin(), cutpoints.end(), value) - cutpoints.begin());
}

bool csv::parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

// ---------------------------------------------------------------------------
// validation

namespace {

std::uint64_t mix(std::uint64_t h, double x) {
  // splitmix64 finalizer over the running hash xor the value's bits
  std::uint64_t z = h ^ (std::bit_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t compute_identity(const std::vector<SubjectRecord>& recs, bool has_c) {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ recs.size();
  for (const auto& r : recs) {
    if (has_c) {
      h = mix(h, *r.c);
    } else {
      h = mix(h, r.u);
      h = mix(h, static_cast<double>(r.delta));
    }
    h = mix(h, r.v);
    for (double zj : r.z) h = mix(h, zj);
  }
  return h;
}

std::string row_label(std::size_t i) { return "record " + std::to_string(i + 1); }

}  // namespace

Dataset validate_dataset(std::vector<SubjectRecord> raw, std::vector<std::string> names) {
  if (raw.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no records");
  const std::size_t p = raw.front().z.size();
  const bool has_c = raw.front().c.has_value();
  constexpr double kTieTol = 1e-9;

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& r = raw[i];
    if (r.z.size() != p)
      throw Error(ErrorCode::InconsistentDimension,
                  row_label(i) + " has " + std::to_string(r.z.size()) + " covariates, expected " + std::to_string(p));
    if (r.c.has_value() != has_c)
      throw Error(ErrorCode::InconsistentDimension, row_label(i) + ": censoring age present on some records only");
    if (!std::isfinite(r.u) || !std::isfinite(r.v) || (has_c && !std::isfinite(*r.c)))
      throw Error(ErrorCode::NonFiniteValue, row_label(i) + " has a non-finite age");
    for (double zj : r.z)
      if (!std::isfinite(zj)) throw Error(ErrorCode::NonFiniteValue, row_label(i) + " has a non-finite covariate");
    if (r.delta != 0 && r.delta != 1)
      throw Error(ErrorCode::DeltaOutOfRange, row_label(i) + ": delta must be 0 or 1");
    if (r.u < 0.0 || r.v < 0.0) throw Error(ErrorCode::NegativeAge, row_label(i) + " has a negative age");
    if (has_c) {
      if (r.delta == 1 && r.u > *r.c + kTieTol)
        throw Error(ErrorCode::CensoringMismatch, row_label(i) + ": event after censoring age");
      if (r.delta == 0 && std::abs(r.u - *r.c) > kTieTol)
        throw Error(ErrorCode::CensoringMismatch, row_label(i) + ": censored record must have u == c");
    }
  }

  if (names.empty()) {
    for (std::size_t j = 0; j < p; ++j) names.push_back("z_" + std::to_string(j + 1));
  } else if (names.size() != p) {
    throw Error(ErrorCode::InconsistentDimension, "covariate name count does not match p");
  }
  for (const auto& name : names)
    if (name == "u" || name == "delta" || name == "v" || name == "c")
      throw Error(ErrorCode::ParseError, "covariate name '" + name + "' is reserved");

  Dataset d;
  d.identity_ = compute_identity(raw, has_c);
  d.records_ = std::move(raw);
  d.names_ = std::move(names);
  d.p_ = p;
  d.has_c_ = has_c;
  return d;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<SubjectRecord> recs;
  recs.reserve(rows.size());
  for (auto i : rows) recs.push_back(records_.at(i));
  Dataset d;
  d.identity_ = compute_identity(recs, has_c_);
  d.records_ = std::move(recs);
  d.names_ = names_;
  d.p_ = p_;
  d.has_c_ = has_c_;
  return d;
}

RiskSummary risk_summary(const Dataset& data, double t0) {
  RiskSummary s;
  s.t0 = t0;
  for (const auto& r : data.records()) {
    if (risk_indicator(r, t0)) ++s.at_risk;
    if (r.v < t0 && r.delta == 1 && r.u <= t0) ++s.observed_events;
  }
  return s;
}

std::vector<RiskSummary> risk_diagnostics(const Dataset& data, std::span<const double> grid) {
  std::vector<RiskSummary> out;
  out.reserve(grid.size());
  for (double t0 : grid) out.push_back(risk_summary(data, t0));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing header line");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = csv::split(line);

  int col_u = -1, col_delta = -1, col_v = -1, col_c = -1;
  std::vector<int> col_z;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto& h = header[k];
    const int idx = static_cast<int>(k);
    if (std::count(header.begin(), header.end(), h) > 1)
      throw Error(ErrorCode::ParseError, "duplicate column '" + h + "' in header");
    if (h == "u") col_u = idx;
    else if (h == "delta") col_delta = idx;
    else if (h == "v") col_v = idx;
    else if (h == "c") col_c = idx;
    else {
      if (h.empty()) throw Error(ErrorCode::ParseError, "empty column name in header");
      col_z.push_back(idx);
      names.push_back(h);
    }
  }
  if (col_u < 0 || col_delta < 0 || col_v < 0)
    throw Error(ErrorCode::ParseError, "header must contain u, delta and v");

  std::vector<SubjectRecord> recs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
    auto get = [&](int col) {
      double x = 0.0;
      if (!csv::parse_double(fields[col], x))
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line_no) + ": cannot parse '" + fields[col] + "' as a number");
      return x;
    };
    SubjectRecord r;
    r.u = get(col_u);
    const double delta = get(col_delta);
    if (delta != 0.0 && delta != 1.0)
      throw Error(ErrorCode::DeltaOutOfRange, "line " + std::to_string(line_no) + ": delta must be 0 or 1");
    r.delta = static_cast<int>(delta);
    r.v = get(col_v);
    if (col_c >= 0) r.c = get(col_c);
    r.z.reserve(col_z.size());
    for (int col : col_z) r.z.push_back(get(col));
    recs.push_back(std::move(r));
  }
  return validate_dataset(std::move(recs), std::move(names));
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return read_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "u,delta,v";
  if (data.has_censoring_times()) out << ",c";
  for (const auto& name : data.names()) out << ',' << name;
  out << '\n';
  for (const auto& r : data.records()) {
    out << csv::number(r.u, 17) << ',' << r.delta << ',' << csv::number(r.v, 17);
    if (r.c) out << ',' << csv::number(*r.c, 17);
    for (double zj : r.z) out << ',' << csv::number(zj, 17);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

void AnalysisSpec::validate() const {
  if (t0_grid.empty()) throw Error(ErrorCode::InvalidParameter, "empty analysis-age grid");
  for (std::size_t k = 1; k < t0_grid.size(); ++k)
    if (!(t0_grid[k] > t0_grid[k - 1]))
      throw Error(ErrorCode::InvalidParameter, "analysis ages must be strictly increasing");
  for (double t : t0_grid)
    if (!std::isfinite(t)) throw Error(ErrorCode::NonFiniteValue, "non-finite analysis age");
  if ((se == SeMethod::Bootstrap || se == SeMethod::Both) && bootstrap.replicates < 1)
    throw Error(ErrorCode::InvalidParameter, "bootstrap replicates must be >= 1");
}

std::vector<double> parse_age_grid(const std::string& text) {
  const auto t = std::string(csv::trim(text));
  if (t.empty()) throw Error(ErrorCode::InvalidParameter, "empty analysis-age grid");
  std::vector<double> grid;
  if (t.find(':') != std::string::npos) {
    const auto parts = csv::split(t, ':');
    double start = 0, end = 0, step = 1;
    if (parts.size() < 2 || parts.size() > 3 || !csv::parse_double(parts[0], start) ||
        !csv::parse_double(parts[1], end) || (parts.size() == 3 && !csv::parse_double(parts[2], step)))
      throw Error(ErrorCode::InvalidParameter, "grid must be start:end[:step], got '" + t + "'");
    if (!(step > 0.0) || end < start)
      throw Error(ErrorCode::InvalidParameter, "grid needs step > 0 and end >= start");
    const auto count = static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) grid.push_back(start + static_cast<double>(k) * step);
  } else {
    for (const auto& part : csv::split(t, ',')) {
      double x = 0;
      if (!csv::parse_double(part, x)) throw Error(ErrorCode::InvalidParameter, "bad age '" + part + "'");
      grid.push_back(x);
    }
  }
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1]))
      throw Error(ErrorCode::InvalidParameter, "analysis ages must be strictly increasing");
  return grid;
}

}  // namespace dcreg
