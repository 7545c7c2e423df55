#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carnotlab/lipschitz.hpp"
#include "carnotlab/map.hpp"

namespace carnot {

/// One experiment: the map, its source domain, the target domain and the
/// target packaged as a metric space.
struct OperatorContext {
  GroupMap phi;
  Domain omega;
  Domain omega_prime;
  MetricTarget target;

  static OperatorContext make(GroupMap phi, Domain omega, Domain omega_prime);
};

struct EstimateOptions {
  int family_budget = 256;
  long long quad_samples = 100000;
  long long scan_samples = 10000;  // stage 1: scan the family
  int top_k = 8;                   // stage 2: re-evaluate the leaders
  std::uint64_t seed = 1;
};

struct WitnessValue {
  std::string provenance;
  double value = 0.0;
};

/// A certified lower estimate of the quasi-additive set function on V.
struct SetFunctionEstimate {
  std::string set;
  double q = 1.0;
  double p = 0.0;          // 0 for the Lipschitz-target functional
  SigmaExponent sigma;     // ratio estimator only
  double value = 0.0;      // Phi-hat(V); the sup ratio itself when sigma = inf
  int family_size = 0;
  WitnessValue best;
  std::uint64_t seed = 0;
  bool empty_family_warning = false;
  std::vector<WitnessValue> leaders;
};

/// sup over the admissible family of the integral of |grad_h(u o phi)|^q.
/// `source_region` optionally restricts quadrature to a region known to
/// contain phi^{-1}(V) (members vanish outside it, so the integral agrees and
/// small sets lose no resolution).
SetFunctionEstimate phi_estimate(const OperatorContext& ctx, const OpenSet& V,
                                 double q, const EstimateOptions& opts,
                                 const Domain* source_region = nullptr);

/// sup over admissible u (vanishing off V) of the seminorm ratio
/// ||u o phi : L1_q(Omega)|| / ||u : L1_p(Omega')||, raised to sigma; the
/// plain sup ratio when q = p.
SetFunctionEstimate phi_ratio_estimate(const OperatorContext& ctx, const OpenSet& V,
                                       double p, double q, const EstimateOptions& opts,
                                       const Domain* source_region = nullptr);

// ---------------------------------------------------------------------------
// Quasi-additivity
// ---------------------------------------------------------------------------

struct QuasiAdditivityReport {
  std::vector<double> part_values;
  double sum_parts = 0.0;
  double whole_value = 0.0;
  bool ok = false;
  std::string composite_provenance;
};

/// Estimates each part on a common sample set, then re-estimates the cover
/// with a family enriched by the disjoint-sum composite of the refined part
/// witnesses. With the composite present the inequality holds sample-exactly.
QuasiAdditivityReport quasi_additivity_check(const OperatorContext& ctx,
                                             const std::vector<OpenSet>& parts,
                                             const OpenSet& whole, double q,
                                             const EstimateOptions& opts);

// ---------------------------------------------------------------------------
// Set-function differentiation
// ---------------------------------------------------------------------------

struct DensityTrend {
  std::vector<double> radii;
  std::vector<double> ratios;  // Phi(B(x,r)) / |B(x,r)|
  double extrapolated = 0.0;
};

/// Phi(B(x,r)) / r^nu over shrinking radii with a linear-fit extrapolation.
DensityTrend set_derivative(const std::function<double(const CcBall&)>& set_fn,
                            const GroupDescriptor& g, const Coords& x,
                            const std::vector<double>& radii);

// ---------------------------------------------------------------------------
// Upper gradient
// ---------------------------------------------------------------------------

struct UpperGradientField {
  std::vector<double> values;     // pointwise max over the family
  std::vector<double> mlow;       // max_j m X_j phi (sandwich lower)
  std::vector<double> mhigh;      // sqrt(sum_j (m X_j phi)^2) (sandwich upper)
};

UpperGradientField upper_gradient_estimate(const OperatorContext& ctx,
                                           const std::vector<Coords>& points,
                                           const std::vector<LipTestFunction>& family,
                                           double h);

// ---------------------------------------------------------------------------
// Theorem verdicts
// ---------------------------------------------------------------------------

struct VerdictTolerances {
  double analytic_rel = 0.05;   // |gradient side / analytic - 1|
  double gap_lower = 0.10;      // estimator may undershoot by this
  double quad_upper = 0.02;     // and overshoot by quadrature error
  double subball_rel = 0.15;    // two-estimator sub-ball agreement
  double density_rel = 0.10;    // Corollary 5.3 density recovery
};

struct SubBallCheck {
  Coords center;
  double radius = 0.0;
  double lhs = 0.0;   // integral side
  double rhs = 0.0;   // set-function estimate
  bool pass = false;
};

struct NormVerdict {
  std::string theorem;
  std::string map_name;
  double p = 0.0;
  double q = 0.0;
  SigmaExponent sigma;
  std::optional<double> analytic;
  double lhs = 0.0;        // gradient / distortion side
  double estimate = 0.0;   // set-function estimator side
  double gap = 0.0;        // relative gap between the two
  std::vector<SubBallCheck> sub_balls;
  std::optional<DensityTrend> density;
  double density_reference = 0.0;
  std::vector<WitnessValue> witnesses;
  bool pass = false;

  std::string to_json() const;
};

struct SubBallSpec {
  int count = 5;
  double r_lo = 0.1;
  double r_hi = 0.3;
  std::uint64_t seed = 77;
};

/// || |grad_0 phi| : L_q(Omega) || = ||phi*|| with Phi-hat(Y) as the operator
/// norm estimate, plus per-sub-ball integral identities.
NormVerdict verify_theorem_lip(const OperatorContext& ctx, double q,
                               const EstimateOptions& opts,
                               std::optional<double> analytic = std::nullopt,
                               const VerdictTolerances& tol = {},
                               const SubBallSpec& balls = {});

/// ||phi*|| = ||K_p : L_sigma(Omega)|| with the ratio estimator as the lower
/// bound, Corollary 5.3 sub-ball inequalities, and the density spot check.
NormVerdict verify_theorem_sobolev(const OperatorContext& ctx, double p, double q,
                                   const EstimateOptions& opts,
                                   std::optional<double> analytic = std::nullopt,
                                   const VerdictTolerances& tol = {},
                                   const SubBallSpec& balls = {});

/// q = infinity: || |grad_0 phi| : L_inf || = ||phi*|| via sample maxima.
NormVerdict verify_prop_qinf(const OperatorContext& ctx, const EstimateOptions& opts,
                             std::optional<double> analytic = std::nullopt,
                             const VerdictTolerances& tol = {});

/// Seeded sub-balls strictly inside a ball domain.
std::vector<CcBall> seeded_subballs(const Domain& omega, const SubBallSpec& spec);

/// Open-set wrapper for phi(U) using the closed-form ball image when the map
/// has one and certified inner balls otherwise.
OpenSet image_of_ball(const OperatorContext& ctx, const CcBall& source_ball);

}  // namespace carnot
