#pragma once

#include <stdexcept>
#include <string>

namespace carnot {

/// Base class for all library errors.
class CarnotError : public std::runtime_error {
 public:
  explicit CarnotError(const std::string& what) : std::runtime_error(what) {}
};

/// Descriptor / configuration validation failure. Carries the offending field.
class ValidationError : public CarnotError {
 public:
  ValidationError(std::string field, const std::string& what)
      : CarnotError("[" + field + "] " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Generic BCH group law is only implemented for nilpotency step <= 3.
class UnsupportedStepError : public CarnotError {
 public:
  explicit UnsupportedStepError(int step)
      : CarnotError("group law via truncated BCH supports step <= 3, got step " +
                    std::to_string(step)) {}
};

/// Monte Carlo integration over a region without a finite bounding box.
class UnboundedRegionError : public CarnotError {
 public:
  UnboundedRegionError() : CarnotError("region has no finite bounding box") {}
};

/// Control-path distance optimizer failed to reach the endpoint tolerance.
/// Carries the best bracket found: lower <= d_cc <= upper.
class NonconvergenceError : public CarnotError {
 public:
  NonconvergenceError(double lower, double upper)
      : CarnotError("distance optimizer did not converge; bracket [" +
                    std::to_string(lower) + ", " + std::to_string(upper) + "]"),
        lower_(lower),
        upper_(upper) {}
  double lower() const { return lower_; }
  double upper() const { return upper_; }

 private:
  double lower_;
  double upper_;
};

/// Operation needs a calibrated measure normalization that is not available.
class UncalibratedError : public CarnotError {
 public:
  explicit UncalibratedError(const std::string& group)
      : CarnotError("group '" + group +
                    "' has no measure calibration; run calibrate first") {}
};

}  // namespace carnot
