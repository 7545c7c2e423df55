#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "carnotlab/group.hpp"
#include "carnotlab/metric.hpp"

namespace carnot {

// ---------------------------------------------------------------------------
// Quadrature domains
// ---------------------------------------------------------------------------

struct QuadratureSpec {
  long long samples = 100000;
  std::uint64_t seed = 1;
};

/// A bounded open region of a group with deterministic Monte Carlo sampling.
/// Metric balls and coordinate boxes have exact normalized measures (r^nu and
/// c_G * volume respectively), so quadrature only averages integrands.
class Domain {
 public:
  static Domain ball(GroupPtr g, CcBall b, QuadratureSpec quad = {});
  static Domain box(GroupPtr g, Box b, QuadratureSpec quad = {});

  const GroupDescriptor& group() const { return *g_; }
  const GroupPtr& group_ptr() const { return g_; }
  bool contains(const Coords& x) const;
  double measure() const;      // normalized Haar measure, exact
  double diameter_hint() const;
  const QuadratureSpec& quadrature() const { return quad_; }
  Domain with_quadrature(QuadratureSpec q) const;

  /// Deterministic uniform sample set (w.r.t. normalized measure).
  std::vector<Coords> samples() const;
  std::vector<Coords> samples(long long n, std::uint64_t seed) const;

  bool is_ball() const { return std::holds_alternative<CcBall>(shape_); }
  const CcBall& as_ball() const { return std::get<CcBall>(shape_); }
  const Box& as_box() const { return std::get<Box>(shape_); }

 private:
  Domain() = default;
  GroupPtr g_;
  std::variant<CcBall, Box> shape_;
  QuadratureSpec quad_;
};

// ---------------------------------------------------------------------------
// Scalar fields as expression trees
// ---------------------------------------------------------------------------

struct GradSample {
  Eigen::VectorXd grad;     // horizontal gradient, length n
  double error = 0.0;       // Richardson error estimate
  bool one_sided = false;   // a stencil left the domain somewhere
};

/// Context for numeric differentiation at tree leaves: group, step size and
/// an optional domain for one-sided fallbacks near the boundary.
struct DiffContext {
  const GroupDescriptor* g = nullptr;
  double h = 1e-4;
  const Domain* domain = nullptr;
};

class FieldExpr;
using FieldPtr = std::shared_ptr<const FieldExpr>;

/// A real function of group coordinates with a construction tree. Composite
/// nodes evaluate gradients through the chain-rule identities (pointwise
/// branch selection for min/max/abs, slope transport for smooth and piecewise
/// linear compositions), so gradient magnitudes survive symmetrization and
/// cutoff exactly; numeric central differences with Richardson pairing happen
/// only at leaves.
class FieldExpr : public std::enable_shared_from_this<FieldExpr> {
 public:
  enum class Kind { Leaf, Const, Coord, Affine, Sum, Abs, Min, Max, Smooth };

  Kind kind() const { return kind_; }
  double value(const Coords& x) const;
  GradSample gradient(const Coords& x, const DiffContext& ctx) const;
  const std::string& name() const { return name_; }

  // construction
  static FieldPtr leaf(std::function<double(const Coords&)> value,
                       std::string name = "leaf",
                       std::function<Eigen::VectorXd(const Coords&)> grad = nullptr);
  static FieldPtr constant(double c);
  static FieldPtr coordinate(int index);  // global coordinate x_index
  static FieldPtr affine(double a, FieldPtr u, double c);  // a*u + c
  static FieldPtr sum(FieldPtr a, FieldPtr b);
  static FieldPtr abs(FieldPtr u);
  static FieldPtr min(FieldPtr a, FieldPtr b);
  static FieldPtr max(FieldPtr a, FieldPtr b);
  static FieldPtr smooth(std::function<double(double)> F,
                         std::function<double(double)> dF, FieldPtr u,
                         std::string name = "smooth");

  /// Structural composition with a map: leaves become x -> leaf(phi(x)) with
  /// numeric gradients on the source side; composite nodes are preserved, so
  /// the chain-rule identities keep holding for u o phi.
  FieldPtr compose_with(std::function<Coords(const Coords&)> phi,
                        std::string tag = "o phi") const;

  FieldExpr() = default;

 private:
  Kind kind_ = Kind::Const;
  std::string name_;
  // Leaf
  std::function<double(const Coords&)> value_fn_;
  std::function<Eigen::VectorXd(const Coords&)> grad_fn_;
  // Const / Affine
  double a_ = 1.0;
  double c_ = 0.0;
  int coord_index_ = 0;
  // children
  FieldPtr lhs_;
  FieldPtr rhs_;
  // Smooth
  std::function<double(double)> F_;
  std::function<double(double)> dF_;
};

/// A field packaged with its evaluation context defaults.
struct ScalarField {
  FieldPtr expr;
  std::string name;

  double operator()(const Coords& x) const { return expr->value(x); }
};

// §3 chain-rule toolbox. All are exact on the construction tree.
ScalarField pos_part(const ScalarField& u);
ScalarField neg_part(const ScalarField& u);
ScalarField abs_val(const ScalarField& u);
ScalarField cutoff(const ScalarField& u, double M);
ScalarField compose_smooth(std::function<double(double)> F,
                           std::function<double(double)> dF, const ScalarField& u,
                           std::string name = "F");
/// sym_M(u) = |M - |u - M/2|| - M/2, the range-halving fold.
ScalarField symmetrize_field(const ScalarField& u, double M);

// Built-in fields.
ScalarField coordinate_field(const GroupDescriptor& g, int index);
ScalarField constant_field(double c);
ScalarField distance_field(GroupPtr g, GroupPoint z);  // d_cc(., z)
ScalarField polynomial_field(const GroupDescriptor& g,
                             std::vector<std::pair<Eigen::VectorXi, double>> terms);

// ---------------------------------------------------------------------------
// Derivatives and seminorms
// ---------------------------------------------------------------------------

struct DerivResult {
  double value = 0.0;      // Richardson-extrapolated
  double at_h = 0.0;
  double at_h2 = 0.0;
  double error = 0.0;
  bool one_sided = false;
};

/// Central difference along exp(t X_j) with the (h, h/2) Richardson pair;
/// falls back to a flagged one-sided stencil at the domain boundary.
DerivResult horizontal_derivative(const ScalarField& u, const GroupDescriptor& g,
                                  int j, const Coords& x, double h,
                                  const Domain* domain = nullptr);

GradSample horizontal_gradient(const ScalarField& u, const GroupDescriptor& g,
                               const Coords& x, double h,
                               const Domain* domain = nullptr);

struct Seminorm {
  double q = 2.0;              // exponent; infinity() for the sup seminorm
  double value = 0.0;
  double error = 0.0;          // quadrature + differentiation estimate
  long long samples = 0;
};

struct SeminormOptions {
  std::optional<long long> samples;
  std::optional<double> h;
};

/// || |grad_h u| : L_q(domain) || with normalized measure; q = infinity is the
/// sample maximum (essential sup surrogate).
Seminorm seminorm_Lq(const ScalarField& u, const Domain& domain, double q,
                     const SeminormOptions& opts = {});

/// Default finite-difference step: 1e-4 x domain diameter.
double default_step(const Domain& domain);

// ---------------------------------------------------------------------------
// Restrictions to integral lines and metric derivatives of maps
// ---------------------------------------------------------------------------

struct CurveSample {
  double t;
  double value;
};

/// Samples t -> u(exp(t X_j)(base)) on [window_lo, window_hi].
std::vector<CurveSample> line_restriction(const ScalarField& u,
                                          const GroupDescriptor& g, int j,
                                          const Coords& base, double window_lo,
                                          double window_hi, int count);

struct MapCurveSample {
  double t;
  Coords value;
};

/// Samples of the point curve t -> phi(exp(t X_j)(base)).
std::vector<MapCurveSample> line_restriction_map(
    const std::function<Coords(const Coords&)>& phi, const GroupDescriptor& g,
    int j, const Coords& base, double window_lo, double window_hi, int count);

struct MetricDerivResult {
  double value = 0.0;   // extrapolated
  double at_h = 0.0;
  double at_h2 = 0.0;
  double error = 0.0;
};

/// m X_j phi (x) = lim d(phi(exp(h X_j) x), phi(x)) / h via the (h, h/2)
/// difference quotients with first-order extrapolation.
MetricDerivResult metric_derivative(
    const std::function<Coords(const Coords&)>& phi,
    const std::function<double(const Coords&, const Coords&)>& target_distance,
    const GroupDescriptor& g, int j, const Coords& x, double h);

}  // namespace carnot
