#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carnotlab/field.hpp"
#include "carnotlab/group.hpp"
#include "carnotlab/metric.hpp"

namespace carnot {

/// sigma from 1/sigma = 1/q - 1/p, with the q = p case dispatched to the
/// sup-ratio branch instead of a finite exponent.
struct SigmaExponent {
  bool is_inf = false;
  double value = 0.0;
  static SigmaExponent from(double q, double p) {
    SigmaExponent s;
    if (q == p) {
      s.is_inf = true;
      return s;
    }
    s.value = p * q / (p - q);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Maps between groups
// ---------------------------------------------------------------------------

/// A map phi: Omega in G -> G~ given by an evaluation rule on exponential
/// coordinates, with an optional analytic inverse and an optional closed-form
/// ball-image rule (dilations, isometries).
struct GroupMap {
  GroupPtr source;
  GroupPtr target;
  std::function<Coords(const Coords&)> forward;
  std::function<Coords(const Coords&)> inverse;  // may be empty
  std::function<CcBall(const CcBall&)> ball_image;  // may be empty
  bool homeomorphism = false;
  std::string name;
  std::map<std::string, double> params;

  Coords operator()(const Coords& x) const { return forward(x); }
  bool has_inverse() const { return static_cast<bool>(inverse); }
};

// Built-in map zoo.
GroupMap map_identity(GroupPtr g);
GroupMap map_translation(GroupPtr g, GroupPoint left);
GroupMap map_dilation(GroupPtr g, double lambda);
/// (x, y, z) -> (x, y + a x, z): a graded automorphism of H^1.
GroupMap map_shear_h1(GroupPtr g, double a);
/// Radial squash of the horizontal plane into R^2: the disc of radius a maps
/// to the origin, outside radii shift down by a. Finite-distortion fixture.
GroupMap map_squash_h1(GroupPtr g, double a);
/// (x, y, z) -> (x, 0, 0): rank-one collapse with det = 0 but D_h != 0, the
/// fixture that must fail the finite-distortion check.
GroupMap map_collapse_h1(GroupPtr g);
/// Composition delta_mu o phi, for the homogeneity tests.
GroupMap map_postdilate(const GroupMap& phi, double mu);

/// Builds a zoo map from its config name and parameters.
GroupMap map_from_spec(GroupPtr g, const std::string& name,
                       const std::map<std::string, double>& params);
std::vector<std::string> map_zoo_names();

// ---------------------------------------------------------------------------
// Differentials
// ---------------------------------------------------------------------------

/// Layer-1 block of the differential: entries X_i phi_j from left-logarithmic
/// central differences with the (h, h/2) Richardson pair. The matrix is
/// stored operator-style, target rows by source columns, so entry (j, i) is
/// X_i phi_j.
struct HorizontalDifferential {
  Eigen::MatrixXd op;        // n~ x n
  double op_norm = 0.0;      // Euclidean spectral norm
  double fd_error = 0.0;
  bool one_sided = false;
  double h = 0.0;
};

HorizontalDifferential horizontal_differential(const GroupMap& phi, const Coords& x,
                                               double h, const Domain* domain = nullptr);

/// The graded homomorphism extending a layer-1 block: layer l+1 blocks are
/// solved from [D X, D Y] = D [X, Y] by least squares over spanning brackets,
/// with the worst inconsistency reported as the residual. The determinant is
/// the product of layer-block determinants when the layer dimensions match
/// and 0 otherwise (non-square blocks cannot be bijective).
struct PansuDifferential {
  std::vector<Eigen::MatrixXd> blocks;  // per layer, target-dim x source-dim
  double residual = 0.0;
  double det = 0.0;
  bool square = true;
  /// max_l ||B_l||^(1/l): a homogeneity-consistent stand-in for the graded
  /// operator norm (the exact CC-ball norm is not computed).
  double op_norm_estimate = 0.0;
};

PansuDifferential pansu_extend(const GroupDescriptor& src, const GroupDescriptor& tgt,
                               const Eigen::MatrixXd& layer1_op);

// ---------------------------------------------------------------------------
// Spatial derivative
// ---------------------------------------------------------------------------

struct JacobianTrend {
  std::vector<double> radii;
  std::vector<double> ratios;   // |phi(B(x,r))| / |B(x,r)|
  double extrapolated = 0.0;    // intercept of the linear fit in r
};

/// J(x, phi) = lim |phi(B(x,r))| / |B(x,r)| by Monte Carlo membership counts
/// through the inverse; ball measures are exact (r^nu).
JacobianTrend spatial_jacobian(const GroupMap& phi, const Coords& x,
                               const std::vector<double>& radii, long long mc_samples,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Distortion
// ---------------------------------------------------------------------------

struct DistortionSample {
  Coords x;
  double dh_norm = 0.0;
  double det = 0.0;
  double kp = 0.0;
  bool thresholded = false;  // |det| below the zero-set threshold
};

struct FiniteDistortionVerdict {
  bool pass = true;
  double worst_dh_on_zero_set = 0.0;
  long long zero_set_samples = 0;
  std::vector<Coords> violations;  // up to 10 reported
};

struct DistortionReport {
  double p = 0.0;
  double q = 0.0;
  SigmaExponent sigma;
  long long samples = 0;
  double kp_norm = 0.0;        // || K_p : L_sigma(Omega) ||
  double kp_norm_error = 0.0;
  long long thresholded_count = 0;
  double det_threshold = 0.0;
  FiniteDistortionVerdict finite_distortion;
  std::vector<DistortionSample> table;

  std::string to_json() const;
  std::string to_csv() const;
};

struct DistortionOptions {
  long long samples = 20000;
  std::optional<double> h;
  double det_threshold = 1e-10;   // |det| below this counts as the zero set
  double grad_tolerance = 1e-6;   // finite distortion: max |D_h| allowed on it
  bool keep_table = false;
};

/// Pointwise K_p = |D_h phi| / |det D^ phi|^{1/p} off the zero set and 0 on
/// it, with the L_sigma norm over the domain and the finite-distortion
/// verdict bundled into one report.
DistortionReport distortion_Kp(const GroupMap& phi, const Domain& omega, double p,
                               double q, const DistortionOptions& opts = {});

FiniteDistortionVerdict finite_distortion_check(const GroupMap& phi, const Domain& omega,
                                                const DistortionOptions& opts = {});

}  // namespace carnot
