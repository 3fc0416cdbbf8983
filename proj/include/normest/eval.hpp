#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "normest/geom.hpp"

namespace normest {

// Unoriented angular error per point, in degrees. |dot| is clamped to 1
// before arccos; a |dot| beyond 1 + 1e-6 means a caller passed non-unit
// vectors and raises range_error instead of being absorbed silently.
std::vector<double> angular_errors_deg(std::span<const Vec3> preds, std::span<const Vec3> gts);

// sqrt(mean(angle^2)) over angular_errors_deg.
double rmse(std::span<const Vec3> preds, std::span<const Vec3> gts);

// Percentage (0..100) of points with angular error strictly below tau_deg.
double pgp(std::span<const Vec3> preds, std::span<const Vec3> gts, double tau_deg);

inline std::vector<double> default_taus() { return {5.0, 10.0}; }

// CSV column label for a PGP threshold: "pgp5" for integral taus,
// round-trip formatting otherwise ("pgp7.5").
std::string pgp_column_label(double tau);

struct MetricRow {
  std::string name;
  double rmse_deg = 0.0;
  std::map<double, double> pgp;  // tau (degrees) -> percent, sorted by tau
  double runtime_ms = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<std::string, std::string> config_echo;
  // Optional per-category means (noise level / density mode), keyed by
  // category label; included in the JSON output when non-empty. The CSV
  // keeps its fixed per-shape layout.
  std::map<std::string, MetricRow> categories;

  // Mean of every column across rows (the "average" line of the usual
  // benchmark tables). Throws empty_input when there are no rows.
  MetricRow aggregate() const;
};

enum class ReportFormat { csv, json };

// CSV: one header line ("shape,rmse_deg,pgp5,pgp10,runtime_ms" for the
// default tau grid) plus one line per row. JSON: config echo, rows, and the
// aggregate means. Both are written atomically.
void emit_report(const MetricReport& report, ReportFormat format, const std::string& path);

}  // namespace normest
