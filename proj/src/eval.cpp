#include "normest/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "json.hpp"
#include "normest/data.hpp"
#include "normest/errors.hpp"

namespace normest {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void check_row(const MetricRow& row, const std::vector<double>& taus) {
  if (row.rmse_deg < 0.0) throw invalid_spec("report row '" + row.name + "': negative rmse");
  if (row.pgp.size() != taus.size())
    throw invalid_spec("report row '" + row.name + "': tau grid differs between rows");
  std::size_t k = 0;
  for (const auto& [tau, pct] : row.pgp) {
    if (tau != taus[k++])
      throw invalid_spec("report row '" + row.name + "': tau grid differs between rows");
    if (pct < 0.0 || pct > 100.0)
      throw invalid_spec("report row '" + row.name + "': pgp outside [0, 100]");
  }
}

}  // namespace

std::string pgp_column_label(double tau) {
  double rounded = std::round(tau);
  if (rounded == tau && std::abs(tau) < 1e15) {
    return "pgp" + std::to_string(static_cast<long long>(rounded));
  }
  return "pgp" + fmt(tau);
}

std::vector<double> angular_errors_deg(std::span<const Vec3> preds, std::span<const Vec3> gts) {
  if (preds.size() != gts.size()) throw length_mismatch("angular errors: length mismatch");
  if (preds.empty()) throw empty_input("angular errors: empty input");
  std::vector<double> deg;
  deg.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = std::abs(preds[i].dot(gts[i]));
    if (d > 1.0 + 1e-6)
      throw range_error("angular errors: |dot| = " + fmt(d) + " exceeds 1 (non-unit input?)");
    deg.push_back(std::acos(std::min(d, 1.0)) * kRadToDeg);
  }
  return deg;
}

double rmse(std::span<const Vec3> preds, std::span<const Vec3> gts) {
  std::vector<double> deg = angular_errors_deg(preds, gts);
  double sum_sq = 0.0;
  for (double a : deg) sum_sq += a * a;
  return std::sqrt(sum_sq / static_cast<double>(deg.size()));
}

double pgp(std::span<const Vec3> preds, std::span<const Vec3> gts, double tau_deg) {
  if (!(tau_deg > 0.0)) throw range_error("pgp: tau must be positive");
  std::vector<double> deg = angular_errors_deg(preds, gts);
  std::size_t good = 0;
  for (double a : deg)
    if (a < tau_deg) ++good;
  return 100.0 * static_cast<double>(good) / static_cast<double>(deg.size());
}

MetricRow MetricReport::aggregate() const {
  if (rows.empty()) throw empty_input("report aggregate: no rows");
  MetricRow mean;
  mean.name = "average";
  for (const auto& row : rows) {
    mean.rmse_deg += row.rmse_deg;
    mean.runtime_ms += row.runtime_ms;
    for (const auto& [tau, pct] : row.pgp) mean.pgp[tau] += pct;
  }
  double inv = 1.0 / static_cast<double>(rows.size());
  mean.rmse_deg *= inv;
  mean.runtime_ms *= inv;
  for (auto& [tau, pct] : mean.pgp) pct *= inv;
  return mean;
}

void emit_report(const MetricReport& report, ReportFormat format, const std::string& path) {
  std::vector<double> taus;
  if (report.rows.empty()) {
    taus = default_taus();
  } else {
    for (const auto& [tau, pct] : report.rows.front().pgp) taus.push_back(tau);
    for (const auto& row : report.rows) check_row(row, taus);
  }

  if (format == ReportFormat::csv) {
    std::string out = "shape,rmse_deg";
    for (double tau : taus) out += "," + pgp_column_label(tau);
    out += ",runtime_ms\n";
    for (const auto& row : report.rows) {
      out += row.name + "," + fmt(row.rmse_deg);
      for (const auto& [tau, pct] : row.pgp) out += "," + fmt(pct);
      out += "," + fmt(row.runtime_ms) + "\n";
    }
    write_file_atomic(path, out);
    return;
  }

  nlohmann::json j;
  j["config"] = report.config_echo;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json r;
    r["name"] = row.name;
    r["rmse_deg"] = row.rmse_deg;
    r["runtime_ms"] = row.runtime_ms;
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [tau, pct] : row.pgp) p[fmt(tau)] = pct;
    r["pgp"] = p;
    j["rows"].push_back(std::move(r));
  }
  if (!report.rows.empty()) {
    MetricRow mean = report.aggregate();
    nlohmann::json a;
    a["rmse_deg"] = mean.rmse_deg;
    a["runtime_ms"] = mean.runtime_ms;
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [tau, pct] : mean.pgp) p[fmt(tau)] = pct;
    a["pgp"] = p;
    j["aggregate"] = std::move(a);
  }
  if (!report.categories.empty()) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [label, row] : report.categories) {
      nlohmann::json c;
      c["rmse_deg"] = row.rmse_deg;
      c["runtime_ms"] = row.runtime_ms;
      nlohmann::json p = nlohmann::json::object();
      for (const auto& [tau, pct] : row.pgp) p[fmt(tau)] = pct;
      c["pgp"] = p;
      cats[label] = std::move(c);
    }
    j["categories"] = std::move(cats);
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace normest
