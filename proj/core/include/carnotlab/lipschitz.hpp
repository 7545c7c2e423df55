#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "carnotlab/field.hpp"
#include "carnotlab/group.hpp"
#include "carnotlab/metric.hpp"

namespace carnot {

// ---------------------------------------------------------------------------
// Metric targets
// ---------------------------------------------------------------------------

/// Target space (Y, d): a Carnot group with the CC metric (Euclidean R^k is
/// the abelian special case) or a finite point set with an explicit distance
/// matrix, which is validated exhaustively at construction.
class MetricTarget {
 public:
  static MetricTarget carnot(GroupPtr g, Domain ambient);
  static MetricTarget euclidean(int k, Box ambient, QuadratureSpec quad = {});
  static MetricTarget finite(Eigen::MatrixXd points, Eigen::MatrixXd dist);

  bool is_finite() const { return finite_; }
  const GroupPtr& group() const { return g_; }
  const Domain& ambient() const { return *ambient_; }
  double distance(const Coords& a, const Coords& b) const;

  /// Points to build nets and validate on: ambient Monte Carlo samples for
  /// group targets, the full point list for finite targets.
  std::vector<Coords> sample_pool(int n, std::uint64_t seed) const;

  const Eigen::MatrixXd& points() const { return points_; }
  int index_of(const Coords& y) const;  // finite targets only

 private:
  MetricTarget() = default;
  bool finite_ = false;
  GroupPtr g_;
  std::optional<Domain> ambient_;
  Eigen::MatrixXd points_;  // rows = points
  Eigen::MatrixXd dist_;
};

// ---------------------------------------------------------------------------
// Open subsets of the target
// ---------------------------------------------------------------------------

/// Open subsets V of Y that the estimators understand: the whole space, a
/// metric ball, a finite union of balls, or the image of a source ball under
/// a homeomorphism. Image sets keep an exact membership test through the
/// inverse plus a list of inner balls certified by rejection sampling; test
/// functions built on the inner balls are admissible for the true image set,
/// so the estimators stay one-sided.
struct ImageOptions {
  int net_size = 5;
  int boundary_samples = 256;
  int verify_samples = 512;
  std::uint64_t seed = 99;
};

class OpenSet {
 public:
  static OpenSet whole();
  static OpenSet ball(CcBall b);
  static OpenSet union_of(std::vector<CcBall> balls);
  static OpenSet empty();

  /// Image phi(B) of a source ball under a homeomorphism. `forward`/`inverse`
  /// map coordinates; `exact_image` may supply the closed-form image ball
  /// (dilations, translations).
  static OpenSet image(const std::function<Coords(const Coords&)>& forward,
                       const std::function<Coords(const Coords&)>& inverse,
                       const GroupDescriptor& source_group, const CcBall& source_ball,
                       const MetricTarget& target,
                       const std::optional<CcBall>& exact_image = std::nullopt,
                       const ImageOptions& opts = ImageOptions());

  bool is_whole() const { return kind_ == Kind::Whole; }
  bool is_empty() const;
  bool contains(const MetricTarget& Y, const Coords& y) const;

  /// s_V(y): a 1-Lipschitz lower bound for dist(y, Y \ V); +infinity on the
  /// whole space (dist to the empty set).
  double support_surrogate(const MetricTarget& Y, const Coords& y) const;

  double inradius() const;
  const std::vector<CcBall>& balls() const { return balls_; }

  /// Uniform-ish points of V for nets and quadrature.
  std::vector<Coords> interior_samples(const MetricTarget& Y, int n,
                                       std::uint64_t seed) const;

  std::string describe() const;

 private:
  enum class Kind { Whole, Balls, Image };
  Kind kind_ = Kind::Whole;
  std::vector<CcBall> balls_;  // inner balls for Image
  std::function<bool(const MetricTarget&, const Coords&)> member_;
  std::string label_;
};

// ---------------------------------------------------------------------------
// Certified 1-Lipschitz test functions
// ---------------------------------------------------------------------------

struct LipTestFunction {
  FieldPtr expr;
  double lip = 1.0;              // certified Lipschitz bound
  double support_sep = 0.0;      // dist(spt u, Y \ V) >= this, when built for V
  std::optional<double> sup_bound;  // known global bound on |u|, when available
  std::string provenance;

  double operator()(const Coords& y) const { return expr->value(y); }
};

struct LipschitzCheck {
  double max_quotient = 0.0;
  int violations = 0;
  Coords worst_a, worst_b;
  bool ok(double bound) const { return max_quotient <= bound * (1.0 + 1e-9); }
};

/// Independent sampled validator: max |u(a)-u(b)| / d(a,b) over random pairs.
LipschitzCheck validate_lipschitz(const LipTestFunction& u, const MetricTarget& Y,
                                  int pairs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// u(y) = d(y, z); 1-Lipschitz by the triangle inequality.
LipTestFunction distance_function(const MetricTarget& Y, const Coords& z);

/// u(y) = max(s_W(y) - eps, 0): the shaved bump of Lemma "meas", with
/// certified support separation eps from the complement of W. Rejects the
/// whole space (no exterior to separate from; use unconstrained functions).
LipTestFunction shaved_bump(const MetricTarget& Y, const OpenSet& W, double eps);

/// sym_M o u: range within [-M/2, M/2] wherever |u| <= M, slope magnitude
/// preserved, Lipschitz bound and support kept.
LipTestFunction symmetrize(const LipTestFunction& u, double M);

struct RefineResult {
  LipTestFunction fn;
  int iterations = 0;
  double start_bound = 0.0;
};

/// Iterated symmetrization until sup_V |u| <= delta; iteration count is
/// ceil(log2(bound / delta)). The starting bound comes from metadata when
/// present, otherwise from an inflated sampled supremum over V.
RefineResult refine(const LipTestFunction& u, const MetricTarget& Y, const OpenSet& V,
                    double delta, std::optional<double> bound = std::nullopt,
                    int sup_samples = 2048, std::uint64_t seed = 7);

/// K_delta = {y : dist(y, Y \ V) > delta}, realized through the surrogate
/// (balls shrink by delta).
OpenSet inner_set(const MetricTarget& Y, const OpenSet& V, double delta);

/// The Step 2 cutoff: equals u on K_{2 delta}, vanishes off K_delta, and is
/// glued 1-Lipschitz across the annulus by clamping against the shifted
/// surrogate, which is the McShane-exact extension for real targets.
/// Precondition: |u| <= delta on V.
LipTestFunction annulus_cutoff(const LipTestFunction& u, const MetricTarget& Y,
                               const OpenSet& V, double delta);

/// McShane formula min_i [f_i + L d(y, s_i)] from a finite sample set;
/// validates the pairwise constraint and throws listing the offending pair.
LipTestFunction mcshane_extend(const MetricTarget& Y, const std::vector<Coords>& pts,
                               const std::vector<double>& values, double L);

/// u_1 + u_2 for functions with supports separated by >= gap and
/// |u_i| <= gap/2; 1-Lipschitz by the refinement-level argument.
LipTestFunction disjoint_sum(const LipTestFunction& u1, const LipTestFunction& u2,
                             double gap);

struct FamilyOptions {
  int validation_pairs = 256;
  std::uint64_t seed = 1;
};

/// The search family realizing the supremum in the set-function definition:
/// coordinates, distance functions on farthest-point nets, shaved bumps,
/// McShane extensions of random net values, and symmetrized / cutoff
/// composites. Members built for an open set V carry positive support
/// separation; for V = Y the support constraint is dropped.
std::vector<LipTestFunction> family_generate(const MetricTarget& Y, const OpenSet& V,
                                             int budget, std::uint64_t seed,
                                             const FamilyOptions& opts = {});

/// Farthest-point net of size k from a candidate pool.
std::vector<Coords> farthest_point_net(const MetricTarget& Y,
                                       const std::vector<Coords>& pool, int k);

}  // namespace carnot
