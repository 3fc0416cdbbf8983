#pragma once

#include <stdexcept>
#include <string>

namespace normest {

// Process exit codes used by the CLI. Library code throws; main() maps
// the category of the caught error to one of these.
enum exit_code : int {
  exit_ok = 0,
  exit_config = 2,
  exit_io = 3,
  exit_numeric = 4,
};

class error : public std::runtime_error {
 public:
  error(const std::string& msg, int code) : std::runtime_error(msg), code_(code) {}
  int exit_code() const noexcept { return code_; }

 private:
  int code_;
};

// --- configuration / precondition problems (exit 2) ---

struct empty_input : error {
  explicit empty_input(const std::string& what = "empty input") : error(what, exit_config) {}
};

struct empty_cloud : error {
  explicit empty_cloud(const std::string& what = "empty point cloud") : error(what, exit_config) {}
};

struct too_few_points : error {
  explicit too_few_points(const std::string& what = "too few points") : error(what, exit_config) {}
};

struct shape_mismatch : error {
  explicit shape_mismatch(const std::string& what = "shape mismatch") : error(what, exit_config) {}
};

struct length_mismatch : error {
  explicit length_mismatch(const std::string& what = "length mismatch") : error(what, exit_config) {}
};

struct non_positive_sigma : error {
  explicit non_positive_sigma(const std::string& what = "sigma must be positive") : error(what, exit_config) {}
};

struct range_error : error {
  explicit range_error(const std::string& what = "value out of range") : error(what, exit_config) {}
};

struct invalid_spec : error {
  explicit invalid_spec(const std::string& what = "invalid specification") : error(what, exit_config) {}
};

struct missing_ground_truth : error {
  explicit missing_ground_truth(const std::string& what = "ground-truth normals required")
      : error(what, exit_config) {}
};

// --- file problems (exit 3) ---

struct io_error : error {
  explicit io_error(const std::string& what = "io failure") : error(what, exit_io) {}
};

struct parse_error : error {
  parse_error(const std::string& what, long line)
      : error(what + " (line " + std::to_string(line) + ")", exit_io), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

struct zero_normal : error {
  explicit zero_normal(long line)
      : error("zero-length normal (line " + std::to_string(line) + ")", exit_io), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

// --- numeric failures (exit 4) ---

struct non_symmetric : error {
  explicit non_symmetric(const std::string& what = "matrix not symmetric") : error(what, exit_numeric) {}
};

struct ill_conditioned : error {
  explicit ill_conditioned(const std::string& what = "system ill-conditioned") : error(what, exit_numeric) {}
};

struct degenerate_average : error {
  explicit degenerate_average(const std::string& what = "frame-averaged normal has near-zero norm")
      : error(what, exit_numeric) {}
};

struct degenerate_aggregation : error {
  explicit degenerate_aggregation(const std::string& what = "aggregated normal has near-zero norm")
      : error(what, exit_numeric) {}
};

struct non_scalar_loss : error {
  explicit non_scalar_loss(const std::string& what = "backward requires a scalar loss node")
      : error(what, exit_numeric) {}
};

}  // namespace normest
