#pragma once

#include <cstdint>
#include <list>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "carnotlab/group.hpp"

namespace carnot {

/// Metric ball B(x, r) = {y : d_cc(x, y) < r}.
struct CcBall {
  GroupPoint center;
  double radius;
};

/// Piecewise-constant horizontal controls on K equal subintervals of [0,1].
/// The endpoint is the composition of the corresponding horizontal flows and
/// the path length is mean |u_k|.
struct HorizontalPath {
  Eigen::MatrixXd controls;  // n x K, column k = control on subinterval k
  double length(const GroupDescriptor& g) const;
  GroupPoint endpoint(const GroupDescriptor& g, const GroupPoint& from) const;
};

struct ControlOptions {
  int segments = 32;
  int refinements = 2;       // doubles segments until endpoint_tol is met
  int starts = 6;
  int iterations = 250;      // gradient steps per penalty level
  double endpoint_tol = 1e-6;
  double lambda0 = 1e2;
  double lambda_max = 1e9;
  std::uint64_t seed = 1;
};

struct MetricOptions {
  ControlOptions control;
};

/// Carnot-Caratheodory distance. Exact closed form for the Heisenberg
/// built-ins (geodesic parameter solved by bisection + Newton to 1e-10) and
/// for abelian groups (Euclidean); other groups go through the multi-start
/// control optimizer, which returns a certified upper bound cross-checked
/// against the horizontal-coordinate lower bound. Throws NonconvergenceError
/// with the best bracket when the optimizer fails.
double distance(const GroupDescriptor& g, const GroupPoint& x, const GroupPoint& y,
                const MetricOptions& opts = {});

/// d_cc(0, p) for Heisenberg H^k in closed form.
double heisenberg_distance0(int k, const Coords& p);

/// Control-path upper bound for d_cc(0, target) on a generic group.
struct ControlResult {
  HorizontalPath path;
  double length = 0.0;
  double endpoint_error = 0.0;  // box_norm of endpoint^{-1} * target
  bool converged = false;
};
ControlResult optimize_control_path(const GroupDescriptor& g, const GroupPoint& target,
                                    const ControlOptions& opts = {});

/// Homogeneous quasi-norm max_ij |x_ij|^{1/i}; degree-1 homogeneous under
/// dilations. Used for bounding boxes and brackets only.
double box_norm(const GroupDescriptor& g, const GroupPoint& x);

/// Coordinate box guaranteed to contain B(0, r). Uses the pinned profile
/// bounds for Heisenberg, exact bounds for abelian groups, and calibrated
/// box-norm constants otherwise.
Box ball_bounding_box(const GroupDescriptor& g, double r);

/// n i.i.d. points uniform w.r.t. normalized Haar measure on the ball,
/// by rejection from ball_bounding_box. Deterministic under the seed.
std::vector<GroupPoint> ball_sample(const GroupDescriptor& g, const CcBall& ball,
                                    int n, std::uint64_t seed);

/// Normalized measure of a metric ball: r^nu by homogeneity and the unit-ball
/// normalization; no sampling involved.
double ball_measure(const GroupDescriptor& g, double r);

// ---------------------------------------------------------------------------
// Memoized distance queries
// ---------------------------------------------------------------------------

/// Bounded memoization for repeated (x, y) queries within one estimator run.
/// Thread-safe; entries are evicted LRU at 2^20 pairs. Only engaged for
/// optimizer-backed groups, where a repeat query is worth saving.
class DistanceEstimator {
 public:
  explicit DistanceEstimator(GroupPtr g, MetricOptions opts = {});
  double operator()(const GroupPoint& x, const GroupPoint& y) const;
  const GroupDescriptor& group() const { return *g_; }

 private:
  GroupPtr g_;
  MetricOptions opts_;
  bool use_cache_;
  struct Key {
    std::vector<double> w;
    bool operator==(const Key& o) const { return w == o.w; }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  mutable std::mutex mu_;
  mutable std::list<std::pair<Key, double>> lru_;
  mutable std::unordered_map<Key, std::list<std::pair<Key, double>>::iterator, KeyHash> map_;
  static constexpr std::size_t kCapacity = std::size_t(1) << 20;
};

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct CalibrateOptions {
  long long measure_samples = 4000000;
  int box_samples = 10000;
  std::uint64_t seed = 20260811ull;
};

/// One-time computation of the measure normalization c_G = 1 / Leb(B_cc(0,1))
/// and the box-norm equivalence constants c1, c2, all by seeded Monte Carlo.
/// Returns a copy of the descriptor carrying the calibration.
GroupPtr calibrate_measure(const GroupPtr& g, const CalibrateOptions& opts = {});

}  // namespace carnot
