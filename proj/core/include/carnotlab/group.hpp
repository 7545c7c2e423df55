#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "carnotlab/errors.hpp"

namespace carnot {

using Coords = Eigen::VectorXd;

/// A point of the group in exponential coordinates of the first kind,
/// g = exp(sum x_ij X_ij)(e), flattened layer by layer.
struct GroupPoint {
  Coords c;
};

/// A tangent vector with graded layer components, stored like point coords.
/// The layer-1 slice is the horizontal part.
struct GradedVector {
  Coords c;
};

/// One nonzero structure constant: [X_i, X_j] = sum_k c * X_k, stored with
/// i < j; the antisymmetric partner is implied.
struct BracketTriple {
  int i;
  int j;
  int k;
  double c;
};

/// Axis-aligned coordinate box, used for bounding regions and quadrature.
struct Box {
  Coords lo;
  Coords hi;
  double volume() const {
    double v = 1.0;
    for (Eigen::Index d = 0; d < lo.size(); ++d) v *= hi[d] - lo[d];
    return v;
  }
  bool contains(const Coords& x) const {
    for (Eigen::Index d = 0; d < lo.size(); ++d)
      if (x[d] < lo[d] || x[d] > hi[d]) return false;
    return true;
  }
};

class GroupDescriptor;
using GroupPtr = std::shared_ptr<const GroupDescriptor>;

/// Box-norm equivalence constants and measure normalization, produced by
/// calibrate_measure (see metric.hpp) or pinned for the built-in groups.
struct GroupCalibration {
  double measure_norm = 0.0;         // c_G with normalized measure = c_G * Lebesgue
  double measure_norm_stderr = 0.0;  // Monte Carlo standard error of 1/c_G
  double box_lower = 0.0;            // c1 with c1 * box_norm <= d_cc
  double box_upper = 0.0;            // c2 with d_cc <= c2 * box_norm
  long long samples = 0;
  std::uint64_t seed = 0;
};

/// A stratified Lie group in exponential coordinates of the first kind.
/// Immutable; operations are free functions. Validation happens at
/// construction: antisymmetry is structural, the Jacobi identity and the
/// grading [g_a, g_b] in g_{a+b} are checked to 1e-12, and each layer above
/// the first must be spanned by brackets of layer 1 with the previous layer.
class GroupDescriptor {
 public:
  static GroupPtr heisenberg(int k);
  static GroupPtr abelian(int n);
  static GroupPtr make(std::string name, std::vector<int> layer_dims,
                       std::vector<BracketTriple> brackets,
                       std::optional<GroupCalibration> calibration = std::nullopt);

  /// Parses {name, step, layer_dims, structure_constants, measure_norm?}.
  /// structure_constants are sparse triplets [i, j, k, c] with 0-based global
  /// basis indices. Throws ValidationError with field diagnostics.
  static GroupPtr from_json_text(const std::string& text);
  static GroupPtr from_json_file(const std::string& path);

  const std::string& name() const { return name_; }
  int step() const { return static_cast<int>(layer_dims_.size()); }
  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int total_dim() const { return total_dim_; }
  int horizontal_dim() const { return layer_dims_[0]; }
  int homogeneous_dim() const { return homogeneous_dim_; }

  /// 1-based layer of a global basis index.
  int layer_of(int idx) const { return layer_of_[idx]; }
  /// Offset of the first index of a 1-based layer.
  int layer_offset(int layer) const { return layer_offset_[layer - 1]; }

  const std::vector<BracketTriple>& brackets() const { return brackets_; }
  double jacobi_residual() const { return jacobi_residual_; }

  bool calibrated() const { return calibration_.has_value(); }
  const GroupCalibration& calibration() const;
  double measure_norm() const { return calibration().measure_norm; }
  GroupPtr with_calibration(GroupCalibration cal) const;

  /// Heisenberg H^k built-ins keep k for the closed-form metric; 0 otherwise.
  int heisenberg_k() const { return heisenberg_k_; }
  bool is_abelian() const { return step() == 1; }

  /// Lie bracket of two graded vectors in basis coordinates.
  Coords bracket(const Coords& u, const Coords& v) const;

  std::string to_json_text() const;

 private:
  GroupDescriptor() = default;
  void validate() const;

  std::string name_;
  std::vector<int> layer_dims_;
  int total_dim_ = 0;
  int homogeneous_dim_ = 0;
  std::vector<int> layer_of_;
  std::vector<int> layer_offset_;
  std::vector<BracketTriple> brackets_;
  double jacobi_residual_ = 0.0;
  std::optional<GroupCalibration> calibration_;
  int heisenberg_k_ = 0;
};

// ---------------------------------------------------------------------------
// Group operations
// ---------------------------------------------------------------------------

GroupPoint identity(const GroupDescriptor& g);

/// Group product in exponential coordinates. Heisenberg built-ins use the
/// closed form; the generic path is the Dynkin BCH series truncated at the
/// group step, which is exact for step <= 3. Throws UnsupportedStepError
/// beyond that.
GroupPoint multiply(const GroupDescriptor& g, const GroupPoint& a, const GroupPoint& b);

/// x^{-1} = -x.
GroupPoint inverse(const GroupDescriptor& g, const GroupPoint& a);

/// delta_lambda(x_ij) = lambda^i x_ij.
GroupPoint dilate(const GroupDescriptor& g, double lambda, const GroupPoint& a);

/// exp(t X_j)(x): right translation by the horizontal one-parameter subgroup,
/// j is a 0-based horizontal index.
GroupPoint flow(const GroupDescriptor& g, int j, double t, const GroupPoint& x);

/// Embeds a horizontal vector as a group point (exp of a layer-1 vector).
GroupPoint horizontal_point(const GroupDescriptor& g, const Eigen::VectorXd& u);

// ---------------------------------------------------------------------------
// Normalized Haar measure
// ---------------------------------------------------------------------------

/// A sampleable region: indicator plus a finite coordinate bounding box.
struct Region {
  std::function<bool(const Coords&)> indicator;
  Box bounds;
  bool bounded = true;
};

struct MeasureEstimate {
  double value = 0.0;        // normalized measure, c_G x Lebesgue volume
  double std_error = 0.0;
  long long samples = 0;
  double accept_rate = 0.0;
};

/// Monte Carlo measure with the group's normalization. Deterministic under a
/// fixed seed. Throws UnboundedRegionError / UncalibratedError.
MeasureEstimate measure(const GroupDescriptor& g, const Region& region,
                        long long samples, std::uint64_t seed);

}  // namespace carnot
