#pragma once

// Per-step run records and their CSV form.
//
// Columns, in order:
//   step, exploitability, kl_to_ref, grad_norm, clipped_fraction, kappa, lr, batch_size, wall_ms
// A run that aborts ends with a comment row "# abort: <reason>".
// The aggregate file has columns step, n, then <metric>_mean, <metric>_stderr for
// every metric except wall_ms.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nashprox/core.hpp"

namespace nashprox {

struct RunRecord {
  std::size_t step = 0;
  double exploitability = 0.0;
  double kl_to_ref = 0.0;
  double grad_norm = 0.0;
  double clipped_fraction = 0.0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  std::size_t batch_size = 0;
  std::int64_t wall_ms = 0;

  /// Equality on every column except wall_ms; NaN matches NaN.
  bool same_metrics(const RunRecord& o) const {
    auto eq = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return step == o.step && eq(exploitability, o.exploitability) && eq(kl_to_ref, o.kl_to_ref) &&
           eq(grad_norm, o.grad_norm) && eq(clipped_fraction, o.clipped_fraction) && eq(kappa, o.kappa) &&
           eq(lr, o.lr) && batch_size == o.batch_size;
  }
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  std::optional<std::string> abort_reason;
};

inline const char* kCsvHeader =
    "step,exploitability,kl_to_ref,grad_norm,clipped_fraction,kappa,lr,batch_size,wall_ms";

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv_row(const RunRecord& r) {
  return std::to_string(r.step) + "," + csv_number(r.exploitability) + "," + csv_number(r.kl_to_ref) + "," +
         csv_number(r.grad_norm) + "," + csv_number(r.clipped_fraction) + "," + csv_number(r.kappa) + "," +
         csv_number(r.lr) + "," + std::to_string(r.batch_size) + "," + std::to_string(r.wall_ms);
}

inline void write_run_csv(std::ostream& os, const SeedResult& res) {
  os << kCsvHeader << '\n';
  for (const auto& r : res.records) os << to_csv_row(r) << '\n';
  if (res.abort_reason) os << "# abort: " << *res.abort_reason << '\n';
}

inline RunRecord parse_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  if (cells.size() != 9) throw ArgumentError("csv row needs 9 cells: " + line);
  auto num = [](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
  RunRecord r;
  r.step = std::stoull(cells[0]);
  r.exploitability = num(cells[1]);
  r.kl_to_ref = num(cells[2]);
  r.grad_norm = num(cells[3]);
  r.clipped_fraction = num(cells[4]);
  r.kappa = num(cells[5]);
  r.lr = num(cells[6]);
  r.batch_size = std::stoull(cells[7]);
  r.wall_ms = std::stoll(cells[8]);
  return r;
}

inline SeedResult read_run_csv(std::istream& is) {
  SeedResult res;
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ArgumentError("csv header does not match the schema");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# abort: ", 0) == 0) {
      res.abort_reason = line.substr(9);
      continue;
    }
    res.records.push_back(parse_csv_row(line));
  }
  return res;
}

struct AggregateRow {
  std::size_t step = 0;
  std::size_t n = 0;
  std::vector<double> mean;    // one entry per aggregated metric
  std::vector<double> stderr_; // sample standard deviation / sqrt(n); 0 when n == 1
};

inline const std::vector<std::string>& aggregate_metrics() {
  static const std::vector<std::string> m = {"exploitability", "kl_to_ref", "grad_norm", "clipped_fraction",
                                             "kappa",          "lr",        "batch_size"};
  return m;
}

inline std::vector<double> metric_values(const RunRecord& r) {
  return {r.exploitability, r.kl_to_ref, r.grad_norm, r.clipped_fraction, r.kappa, r.lr,
          static_cast<double>(r.batch_size)};
}

/// Mean and standard error per step over the seeds that reached that step.
inline std::vector<AggregateRow> aggregate(const std::vector<SeedResult>& seeds) {
  std::map<std::size_t, std::vector<std::vector<double>>> by_step;
  for (const auto& s : seeds)
    for (const auto& r : s.records) by_step[r.step].push_back(metric_values(r));
  std::vector<AggregateRow> out;
  const std::size_t m = aggregate_metrics().size();
  for (const auto& [step, rows] : by_step) {
    AggregateRow a;
    a.step = step;
    a.n = rows.size();
    a.mean.assign(m, 0.0);
    a.stderr_.assign(m, 0.0);
    const double n = static_cast<double>(a.n);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (const auto& r : rows) s += r[j];
      a.mean[j] = s / n;
      if (a.n > 1) {
        double ss = 0.0;
        for (const auto& r : rows) ss += (r[j] - a.mean[j]) * (r[j] - a.mean[j]);
        a.stderr_[j] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "step,n";
  for (const auto& m : aggregate_metrics()) os << ',' << m << "_mean," << m << "_stderr";
  os << '\n';
  for (const auto& a : rows) {
    os << a.step << ',' << a.n;
    for (std::size_t j = 0; j < a.mean.size(); ++j) os << ',' << csv_number(a.mean[j]) << ',' << csv_number(a.stderr_[j]);
    os << '\n';
  }
}

inline std::vector<AggregateRow> read_aggregate_csv(std::istream& is) {
  std::vector<AggregateRow> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    AggregateRow a;
    a.step = std::stoull(cells.at(0));
    a.n = std::stoull(cells.at(1));
    for (std::size_t j = 2; j + 1 < cells.size(); j += 2) {
      a.mean.push_back(std::strtod(cells[j].c_str(), nullptr));
      a.stderr_.push_back(std::strtod(cells[j + 1].c_str(), nullptr));
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace nashprox
