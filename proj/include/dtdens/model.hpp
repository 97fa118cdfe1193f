#pragma once

#include "error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dtdens {

//! One doubly truncated observation: x was recorded because u <= x <= v.
struct Record
{
  double u;
  double v;
  double x;

  double tau() const { return v - u; }
  bool operator==(const Record&) const = default;
};

struct Interval
{
  double lo;
  double hi;

  double length() const { return hi - lo; }
  bool contains(double t) const { return lo <= t && t <= hi; }
  bool operator==(const Interval&) const = default;
};

//! Validated sample of truncated triplets plus the working domain.
//!
//! Instances only come out of `validate_sample()`, so every record satisfies
//! u <= x <= v and every x lies in the domain.
class TruncatedSample
{
public:
  const std::vector<Record>& records() const { return records_; }
  const Interval& domain() const { return domain_; }
  std::size_t size() const { return records_.size(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  std::vector<double> xs() const
  {
    std::vector<double> out(records_.size());
    std::transform(records_.begin(), records_.end(), out.begin(),
                   [](const Record& r) { return r.x; });
    return out;
  }

  std::vector<double> taus() const
  {
    std::vector<double> out(records_.size());
    std::transform(records_.begin(), records_.end(), out.begin(),
                   [](const Record& r) { return r.tau(); });
    return out;
  }

  bool operator==(const TruncatedSample&) const = default;

private:
  TruncatedSample(std::vector<Record> records, Interval domain)
    : records_(std::move(records))
    , domain_(domain)
  {}

  friend TruncatedSample validate_sample(std::vector<Record> raw,
                                         std::optional<Interval> domain);

  std::vector<Record> records_;
  Interval domain_;
};

//! Default domain: observed x-range padded by 5% on each side.
inline Interval
default_domain(const std::vector<Record>& records)
{
  auto [lo_it, hi_it] = std::minmax_element(
    records.begin(), records.end(),
    [](const Record& a, const Record& b) { return a.x < b.x; });
  double lo = lo_it->x;
  double hi = hi_it->x;
  double pad = 0.05 * (hi - lo);
  if (pad == 0.0) {
    // all x tied; fall back to a unit-scale window so the domain is proper
    pad = std::max(0.5, 0.05 * std::abs(lo));
  }
  return { lo - pad, hi + pad };
}

inline TruncatedSample
validate_sample(std::vector<Record> raw,
                std::optional<Interval> domain = std::nullopt)
{
  if (raw.empty())
    detail::fail_validation("EmptySample", "no records supplied");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& r = raw[i];
    if (!std::isfinite(r.u) || !std::isfinite(r.v) || !std::isfinite(r.x))
      detail::fail_validation("NonFiniteValue",
                              "record " + std::to_string(i) +
                                " has a non-finite field");
    if (!(r.u <= r.x && r.x <= r.v)) {
      std::ostringstream msg;
      msg << "record " << i << " has x=" << r.x << " outside [" << r.u << ", "
          << r.v << "]";
      detail::fail_validation("ObservabilityViolation", msg.str());
    }
  }
  Interval dom = domain ? *domain : default_domain(raw);
  if (!std::isfinite(dom.lo) || !std::isfinite(dom.hi))
    detail::fail_validation("NonFiniteValue", "domain bounds must be finite");
  if (!(dom.lo < dom.hi))
    detail::fail_validation("InvalidDomain", "domain requires lo < hi");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!dom.contains(raw[i].x)) {
      std::ostringstream msg;
      msg << "record " << i << " has x=" << raw[i].x << " outside domain ["
          << dom.lo << ", " << dom.hi << "]";
      detail::fail_validation("OutsideDomain", msg.str());
    }
  }
  return TruncatedSample(std::move(raw), dom);
}

//! Equally spaced evaluation grid including both end points.
class EvalGrid
{
public:
  EvalGrid(Interval span, std::size_t count = 101)
    : span_(span)
  {
    if (count < 2)
      detail::fail_config("InvalidGrid", "grid needs at least 2 points");
    if (!(span.lo < span.hi))
      detail::fail_config("InvalidGrid", "grid requires lo < hi");
    points_.resize(count);
    double step = span.length() / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i)
      points_[i] = span.lo + step * static_cast<double>(i);
    points_.back() = span.hi;
  }

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }
  double step() const
  {
    return span_.length() / static_cast<double>(points_.size() - 1);
  }
  const Interval& span() const { return span_; }

  bool operator==(const EvalGrid&) const = default;

private:
  Interval span_;
  std::vector<double> points_;
};

//! Density values on an evaluation grid.
struct DensityEstimate
{
  EvalGrid grid;
  std::vector<double> values;
};

//! Composite trapezoid rule on an equally spaced grid.
inline double
trapezoid_integral(const std::vector<double>& values, const EvalGrid& grid)
{
  if (values.size() != grid.size())
    detail::fail_config("LengthMismatch",
                        "values and grid differ in length (" +
                          std::to_string(values.size()) + " vs " +
                          std::to_string(grid.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    sum += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
  return sum;
}

// CSV ingestion -------------------------------------------------------------

namespace detail {

inline std::string
trim(const std::string& s)
{
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double
parse_number(const std::string& field, std::size_t line)
{
  std::string t = trim(field);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size())
    fail_validation("MalformedCsv", "line " + std::to_string(line) +
                                      ": cannot parse '" + t + "'");
  return value;
}

} // namespace detail

//! Reads `u,v,x` records. Validation errors name the offending line.
inline TruncatedSample
read_csv(std::istream& in, std::optional<Interval> domain = std::nullopt)
{
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::vector<Record> records;
  std::vector<std::size_t> lines;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty())
      continue;
    if (!header_seen) {
      std::string h = line;
      h.erase(std::remove_if(h.begin(), h.end(),
                             [](char c) { return std::isspace(
                                            static_cast<unsigned char>(c)); }),
              h.end());
      if (h != "u,v,x")
        detail::fail_validation("MalformedCsv",
                                "line " + std::to_string(lineno) +
                                  ": expected header 'u,v,x'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ','))
      fields.push_back(f);
    if (fields.size() != 3)
      detail::fail_validation("MalformedCsv",
                              "line " + std::to_string(lineno) +
                                ": expected 3 fields, got " +
                                std::to_string(fields.size()));
    records.push_back({ detail::parse_number(fields[0], lineno),
                        detail::parse_number(fields[1], lineno),
                        detail::parse_number(fields[2], lineno) });
    lines.push_back(lineno);
  }
  if (!header_seen)
    detail::fail_validation("EmptySample", "no header or records");
  try {
    return validate_sample(std::move(records), domain);
  } catch (const Error& e) {
    // re-anchor record indices to file lines
    std::string what = e.what();
    const std::string key = "record ";
    auto pos = what.find(key);
    if (pos != std::string::npos) {
      std::size_t idx = std::stoul(what.substr(pos + key.size()));
      if (idx < lines.size())
        what += " (line " + std::to_string(lines[idx]) + ")";
    }
    throw Error(e.name(), e.category(),
                what.substr(what.find(": ") == std::string::npos
                              ? 0
                              : what.find(": ") + 2));
  }
}

inline TruncatedSample
read_csv_file(const std::string& path,
              std::optional<Interval> domain = std::nullopt)
{
  std::ifstream in(path);
  if (!in)
    detail::fail_validation("FileNotFound", "cannot open '" + path + "'");
  return read_csv(in, domain);
}

} // namespace dtdens
