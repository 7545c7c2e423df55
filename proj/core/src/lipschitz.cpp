#include "carnotlab/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "carnotlab/parallel.hpp"
#include "carnotlab/rng.hpp"

namespace carnot {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// MetricTarget
// ---------------------------------------------------------------------------

MetricTarget MetricTarget::carnot(GroupPtr g, Domain ambient) {
  MetricTarget t;
  t.g_ = std::move(g);
  t.ambient_ = std::move(ambient);
  return t;
}

MetricTarget MetricTarget::euclidean(int k, Box ambient, QuadratureSpec quad) {
  auto g = GroupDescriptor::abelian(k);
  return carnot(g, Domain::box(g, std::move(ambient), quad));
}

MetricTarget MetricTarget::finite(Eigen::MatrixXd points, Eigen::MatrixXd dist) {
  MetricTarget t;
  t.finite_ = true;
  t.points_ = std::move(points);
  t.dist_ = std::move(dist);
  const int n = static_cast<int>(t.points_.rows());
  if (t.dist_.rows() != n || t.dist_.cols() != n)
    throw ValidationError("dist", "distance matrix shape mismatch");
  for (int i = 0; i < n; ++i) {
    if (t.dist_(i, i) != 0.0)
      throw ValidationError("dist", "nonzero diagonal at " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      if (t.dist_(i, j) < 0.0)
        throw ValidationError("dist", "negative distance");
      if (std::abs(t.dist_(i, j) - t.dist_(j, i)) > 1e-12)
        throw ValidationError("dist", "asymmetric at (" + std::to_string(i) + "," +
                                          std::to_string(j) + ")");
      for (int k2 = 0; k2 < n; ++k2)
        if (t.dist_(i, j) > t.dist_(i, k2) + t.dist_(k2, j) + 1e-12)
          throw ValidationError(
              "dist", "triangle inequality fails through point " + std::to_string(k2));
    }
  }
  return t;
}

int MetricTarget::index_of(const Coords& y) const {
  for (int i = 0; i < points_.rows(); ++i)
    if ((points_.row(i).transpose() - y).cwiseAbs().maxCoeff() < 1e-9) return i;
  throw CarnotError("point is not a member of the finite target");
}

double MetricTarget::distance(const Coords& a, const Coords& b) const {
  if (finite_) return dist_(index_of(a), index_of(b));
  return carnot::distance(*g_, {a}, {b});
}

std::vector<Coords> MetricTarget::sample_pool(int n, std::uint64_t seed) const {
  if (finite_) {
    std::vector<Coords> out;
    out.reserve(points_.rows());
    for (int i = 0; i < points_.rows(); ++i)
      out.push_back(points_.row(i).transpose());
    return out;
  }
  return ambient_->samples(n, seed);
}

// ---------------------------------------------------------------------------
// OpenSet
// ---------------------------------------------------------------------------

OpenSet OpenSet::whole() {
  OpenSet v;
  v.kind_ = Kind::Whole;
  v.label_ = "whole";
  return v;
}

OpenSet OpenSet::ball(CcBall b) {
  OpenSet v;
  v.kind_ = Kind::Balls;
  v.balls_.push_back(std::move(b));
  v.label_ = "ball";
  return v;
}

OpenSet OpenSet::union_of(std::vector<CcBall> balls) {
  OpenSet v;
  v.kind_ = Kind::Balls;
  v.balls_ = std::move(balls);
  v.label_ = "union";
  return v;
}

OpenSet OpenSet::empty() {
  OpenSet v;
  v.kind_ = Kind::Balls;
  v.label_ = "empty";
  return v;
}

bool OpenSet::is_empty() const {
  return kind_ == Kind::Balls && balls_.empty();
}

OpenSet OpenSet::image(const std::function<Coords(const Coords&)>& forward,
                       const std::function<Coords(const Coords&)>& inverse,
                       const GroupDescriptor& source_group, const CcBall& source_ball,
                       const MetricTarget& target,
                       const std::optional<CcBall>& exact_image,
                       const ImageOptions& opts) {
  if (exact_image) return ball(*exact_image);
  if (!inverse)
    throw ValidationError("image", "image sets need the inverse homeomorphism");
  if (target.is_finite())
    throw ValidationError("image", "image sets need a group target");

  OpenSet v;
  v.kind_ = Kind::Image;
  v.label_ = "image";
  const CcBall src = source_ball;
  v.member_ = [inverse, src, &source_group](const MetricTarget&, const Coords& y) {
    return carnot::distance(source_group, src.center, {inverse(y)}) < src.radius;
  };

  // Boundary cloud: dilate interior samples of the unit source ball onto the
  // sphere, translate to the ball, map forward.
  const auto unit = ball_sample(source_group, CcBall{identity(source_group), 1.0},
                                opts.boundary_samples, opts.seed);
  std::vector<Coords> boundary;
  boundary.reserve(unit.size());
  for (const auto& p : unit) {
    const double d0 = carnot::distance(source_group, identity(source_group), p);
    if (d0 < 1e-9) continue;
    const GroupPoint on_sphere = dilate(source_group, src.radius / d0, p);
    boundary.push_back(forward(multiply(source_group, src.center, on_sphere).c));
  }

  // Net of candidate centers, then a boundary-clearance radius per center,
  // shrunk until rejection sampling confirms the inner ball.
  const auto interior = ball_sample(source_group, src, 128, opts.seed + 1);
  std::vector<Coords> mapped;
  mapped.reserve(interior.size());
  for (const auto& p : interior) mapped.push_back(forward(p.c));
  const auto centers = farthest_point_net(target, mapped, opts.net_size);

  std::size_t bi = 0;
  for (const auto& c : centers) {
    double rho = kInf;
    for (const auto& b : boundary) rho = std::min(rho, target.distance(c, b));
    rho *= 0.85;
    bool verified = false;
    for (int round = 0; round < 8 && rho > 1e-9; ++round) {
      bool ok = true;
      const auto probes =
          ball_sample(*target.group(), CcBall{{c}, rho}, opts.verify_samples,
                      mix64(opts.seed, 1000 * bi + round));
      for (const auto& p : probes) {
        if (!v.member_(target, p.c)) {
          ok = false;
          break;
        }
      }
      if (ok) {
        verified = true;
        break;
      }
      rho *= 0.8;
    }
    // claim strictly less than what rejection sampling confirmed
    if (verified && rho > 1e-9) v.balls_.push_back(CcBall{{c}, 0.95 * rho});
    ++bi;
  }
  return v;
}

bool OpenSet::contains(const MetricTarget& Y, const Coords& y) const {
  switch (kind_) {
    case Kind::Whole:
      return true;
    case Kind::Balls: {
      for (const auto& b : balls_)
        if (Y.distance(b.center.c, y) < b.radius) return true;
      return false;
    }
    case Kind::Image:
      return member_(Y, y);
  }
  return false;
}

double OpenSet::support_surrogate(const MetricTarget& Y, const Coords& y) const {
  if (kind_ == Kind::Whole) return kInf;
  double s = 0.0;
  for (const auto& b : balls_)
    s = std::max(s, b.radius - Y.distance(b.center.c, y));
  return std::max(s, 0.0);
}

double OpenSet::inradius() const {
  double r = 0.0;
  for (const auto& b : balls_) r = std::max(r, b.radius);
  return r;
}

std::vector<Coords> OpenSet::interior_samples(const MetricTarget& Y, int n,
                                              std::uint64_t seed) const {
  if (kind_ == Kind::Whole) return Y.sample_pool(n, seed);
  if (balls_.empty()) return {};
  if (Y.is_finite()) {
    std::vector<Coords> out;
    for (int i = 0; i < Y.points().rows(); ++i) {
      const Coords y = Y.points().row(i).transpose();
      if (contains(Y, y)) out.push_back(y);
    }
    return out;
  }
  // allocate samples across balls proportionally to r^nu
  const int nu = Y.group()->homogeneous_dim();
  double total = 0.0;
  for (const auto& b : balls_) total += std::pow(b.radius, nu);
  std::vector<Coords> out;
  out.reserve(n);
  for (std::size_t bi = 0; bi < balls_.size(); ++bi) {
    const auto& b = balls_[bi];
    const int share = std::max(
        1, static_cast<int>(std::round(n * std::pow(b.radius, nu) / total)));
    const auto pts = ball_sample(*Y.group(), b, share, mix64(seed, bi));
    for (const auto& p : pts) {
      if (static_cast<int>(out.size()) >= n) break;
      out.push_back(p.c);
    }
  }
  return out;
}

std::string OpenSet::describe() const {
  std::ostringstream os;
  os << label_;
  if (kind_ != Kind::Whole) {
    os << "[" << balls_.size() << " ball(s)";
    if (!balls_.empty()) os << ", inradius " << inradius();
    os << "]";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

LipschitzCheck validate_lipschitz(const LipTestFunction& u, const MetricTarget& Y,
                                  int pairs, std::uint64_t seed) {
  const auto pool = Y.sample_pool(2 * pairs, seed);
  LipschitzCheck out;
  const std::size_t m = pool.size() / 2;
  std::vector<double> quotients(m, 0.0);
  parallel_for(m, [&](std::size_t i) {
    const Coords& a = pool[2 * i];
    const Coords& b = pool[2 * i + 1];
    const double d = Y.distance(a, b);
    if (d < 1e-12) return;
    quotients[i] = std::abs(u(a) - u(b)) / d;
  });
  for (std::size_t i = 0; i < m; ++i) {
    if (quotients[i] > out.max_quotient) {
      out.max_quotient = quotients[i];
      out.worst_a = pool[2 * i];
      out.worst_b = pool[2 * i + 1];
    }
    if (quotients[i] > u.lip * (1.0 + 1e-9)) ++out.violations;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

LipTestFunction distance_function(const MetricTarget& Y, const Coords& z) {
  LipTestFunction u;
  if (!Y.is_finite()) {
    const GroupPtr g = Y.group();
    u.expr = FieldExpr::leaf(
        [g, z](const Coords& y) { return carnot::distance(*g, {z}, {y}); }, "dist");
  } else {
    const MetricTarget copy = Y;
    u.expr = FieldExpr::leaf(
        [copy, z](const Coords& y) { return copy.distance(y, z); }, "dist");
  }
  u.lip = 1.0;
  u.provenance = "distance";
  return u;
}

namespace {

FieldPtr surrogate_leaf(const MetricTarget& Y, const OpenSet& V) {
  if (!Y.is_finite()) {
    const GroupPtr g = Y.group();
    const std::vector<CcBall> balls = V.balls();
    return FieldExpr::leaf(
        [g, balls](const Coords& y) {
          double s = 0.0;
          for (const auto& b : balls)
            s = std::max(s, b.radius - carnot::distance(*g, b.center, {y}));
          return std::max(s, 0.0);
        },
        "sV");
  }
  const MetricTarget copy = Y;
  const OpenSet set = V;
  return FieldExpr::leaf(
      [copy, set](const Coords& y) { return set.support_surrogate(copy, y); }, "sV");
}

}  // namespace

LipTestFunction shaved_bump(const MetricTarget& Y, const OpenSet& W, double eps) {
  if (W.is_whole())
    throw ValidationError("W",
                          "bump construction needs an exterior; for the whole "
                          "space use unconstrained test functions");
  if (eps <= 0.0) throw ValidationError("eps", "shaving amount must be positive");
  LipTestFunction u;
  u.expr = FieldExpr::max(FieldExpr::affine(1.0, surrogate_leaf(Y, W), -eps),
                          FieldExpr::constant(0.0));
  u.lip = 1.0;
  u.support_sep = eps;
  u.sup_bound = std::max(W.inradius() - eps, 0.0);
  u.provenance = "bump(eps=" + std::to_string(eps) + ")";
  return u;
}

LipTestFunction symmetrize(const LipTestFunction& u, double M) {
  LipTestFunction out;
  const ScalarField wrapped{u.expr, u.provenance};
  out.expr = symmetrize_field(wrapped, M).expr;
  out.lip = u.lip;
  out.support_sep = u.support_sep;  // sym_M(0) = 0 keeps the support
  if (u.sup_bound && *u.sup_bound <= M) out.sup_bound = 0.5 * M;
  out.provenance = "sym_" + std::to_string(M) + "(" + u.provenance + ")";
  return out;
}

RefineResult refine(const LipTestFunction& u, const MetricTarget& Y, const OpenSet& V,
                    double delta, std::optional<double> bound, int sup_samples,
                    std::uint64_t seed) {
  if (delta <= 0.0) throw ValidationError("delta", "target bound must be positive");
  double M = 0.0;
  if (bound) {
    M = *bound;
  } else if (u.sup_bound) {
    M = *u.sup_bound;
  } else {
    const auto pts = V.interior_samples(Y, sup_samples, seed);
    for (const auto& y : pts) M = std::max(M, std::abs(u(y)));
    M *= 1.0 + 1e-9;
  }
  RefineResult r;
  r.start_bound = M;
  r.fn = u;
  // the final bound is global only when the starting bound was
  const bool global = u.sup_bound.has_value() && *u.sup_bound <= M * (1.0 + 1e-12);
  while (M > delta) {
    r.fn = symmetrize(r.fn, M);
    M *= 0.5;
    ++r.iterations;
  }
  if (global)
    r.fn.sup_bound = M;
  else
    r.fn.sup_bound.reset();
  return r;
}

OpenSet inner_set(const MetricTarget&, const OpenSet& V, double delta) {
  if (V.is_whole()) return OpenSet::whole();
  std::vector<CcBall> shrunk;
  for (const auto& b : V.balls())
    if (b.radius > delta) shrunk.push_back(CcBall{b.center, b.radius - delta});
  return OpenSet::union_of(std::move(shrunk));
}

LipTestFunction annulus_cutoff(const LipTestFunction& u, const MetricTarget& Y,
                               const OpenSet& V, double delta) {
  if (V.is_whole())
    throw ValidationError("V", "annulus cutoff needs a proper open set");
  // b = (s_V - delta)^+ is 1-Lipschitz; clamping u into [-b, b] leaves u
  // untouched on K_{2 delta} (where b > delta >= |u|) and kills it off
  // K_delta, staying 1-Lipschitz as a min/max of 1-Lipschitz functions.
  auto b = FieldExpr::max(FieldExpr::affine(1.0, surrogate_leaf(Y, V), -delta),
                          FieldExpr::constant(0.0));
  auto clamped =
      FieldExpr::max(FieldExpr::min(u.expr, b), FieldExpr::affine(-1.0, b, 0.0));
  LipTestFunction out;
  out.expr = clamped;
  out.lip = std::max(u.lip, 1.0);
  out.support_sep = delta;
  // |u| <= delta on V and the clamp vanishes off V, so delta bounds globally
  out.sup_bound = delta;
  out.provenance = "annulus(" + u.provenance + ")";
  return out;
}

LipTestFunction mcshane_extend(const MetricTarget& Y, const std::vector<Coords>& pts,
                               const std::vector<double>& values, double L) {
  if (pts.size() != values.size() || pts.empty())
    throw ValidationError("S", "sample set and values must match and be nonempty");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = Y.distance(pts[i], pts[j]);
      if (std::abs(values[i] - values[j]) > L * d * (1.0 + 1e-9) + 1e-12) {
        std::ostringstream os;
        os << "pairwise Lipschitz constraint violated at (" << i << ", " << j
           << "): |" << values[i] << " - " << values[j] << "| > " << L << " * " << d;
        throw ValidationError("f", os.str());
      }
    }
  }
  LipTestFunction u;
  if (!Y.is_finite()) {
    const GroupPtr g = Y.group();
    u.expr = FieldExpr::leaf(
        [g, pts, values, L](const Coords& y) {
          double m = kInf;
          for (std::size_t i = 0; i < pts.size(); ++i)
            m = std::min(m, values[i] + L * carnot::distance(*g, {pts[i]}, {y}));
          return m;
        },
        "mcshane");
  } else {
    const MetricTarget copy = Y;
    u.expr = FieldExpr::leaf(
        [copy, pts, values, L](const Coords& y) {
          double m = kInf;
          for (std::size_t i = 0; i < pts.size(); ++i)
            m = std::min(m, values[i] + L * copy.distance(pts[i], y));
          return m;
        },
        "mcshane");
  }
  u.lip = L;
  u.provenance = "mcshane(" + std::to_string(pts.size()) + " pts)";
  return u;
}

LipTestFunction disjoint_sum(const LipTestFunction& u1, const LipTestFunction& u2,
                             double gap) {
  if (gap <= 0.0) throw ValidationError("gap", "support gap must be positive");
  auto check = [&](const LipTestFunction& u, const char* which) {
    if (u.sup_bound && *u.sup_bound > 0.5 * gap * (1.0 + 1e-9))
      throw ValidationError(which,
                            "summand bound exceeds half the support gap; refine first");
  };
  check(u1, "u1");
  check(u2, "u2");
  LipTestFunction out;
  out.expr = FieldExpr::sum(u1.expr, u2.expr);
  out.lip = std::max(u1.lip, u2.lip);
  out.support_sep = std::min(u1.support_sep, u2.support_sep);
  if (u1.sup_bound && u2.sup_bound)
    out.sup_bound = std::max(*u1.sup_bound, *u2.sup_bound);
  out.provenance = "disjoint_sum(" + u1.provenance + ", " + u2.provenance + ")";
  return out;
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

std::vector<Coords> farthest_point_net(const MetricTarget& Y,
                                       const std::vector<Coords>& pool, int k) {
  std::vector<Coords> net;
  if (pool.empty() || k <= 0) return net;
  net.push_back(pool.front());
  std::vector<double> dist_to_net(pool.size(), kInf);
  while (static_cast<int>(net.size()) < std::min<std::size_t>(k, pool.size())) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      dist_to_net[i] = std::min(dist_to_net[i], Y.distance(pool[i], net.back()));
      if (dist_to_net[i] > best) {
        best = dist_to_net[i];
        arg = i;
      }
    }
    if (best <= 1e-12) break;
    net.push_back(pool[arg]);
  }
  return net;
}

namespace {

void push_validated(std::vector<LipTestFunction>& family, LipTestFunction u,
                    const MetricTarget& Y, const FamilyOptions& opts, int budget) {
  if (static_cast<int>(family.size()) >= budget) return;
  const LipschitzCheck chk =
      validate_lipschitz(u, Y, opts.validation_pairs, mix64(opts.seed, family.size()));
  if (!chk.ok(u.lip)) return;  // generators should never trip this
  family.push_back(std::move(u));
}

}  // namespace

std::vector<LipTestFunction> family_generate(const MetricTarget& Y, const OpenSet& V,
                                             int budget, std::uint64_t seed,
                                             const FamilyOptions& opts_in) {
  FamilyOptions opts = opts_in;
  opts.seed = seed;
  std::vector<LipTestFunction> family;
  if (budget <= 0 || V.is_empty()) return family;

  if (V.is_whole()) {
    // Unconstrained families: coordinates first (the first horizontal
    // coordinate is always a member), then distance functions on a net and
    // their symmetrized / cutoff composites, then McShane net functions.
    if (!Y.is_finite()) {
      const int n = Y.group()->horizontal_dim();
      for (int j = 0; j < n && static_cast<int>(family.size()) < budget; ++j) {
        LipTestFunction u;
        u.expr = FieldExpr::coordinate(Y.group()->layer_offset(1) + j);
        u.lip = 1.0;
        u.provenance = "coordinate[" + std::to_string(j) + "]";
        push_validated(family, std::move(u), Y, opts, budget);
      }
    }
    const auto pool = Y.sample_pool(1024, mix64(seed, 17));
    const auto net = farthest_point_net(Y, pool, std::min(64, budget));
    double scale = 0.0;
    for (const auto& z : net) {
      if (static_cast<int>(family.size()) >= budget) break;
      LipTestFunction u = distance_function(Y, z);
      u.provenance += "(net)";
      push_validated(family, std::move(u), Y, opts, budget);
      if (!net.empty()) scale = std::max(scale, Y.distance(net.front(), z));
    }
    SampleRng rng(seed, 23);
    int variant = 0;
    while (static_cast<int>(family.size()) < budget && variant < 4 * budget) {
      const int kind = variant % 3;
      ++variant;
      if (net.empty()) break;
      const Coords z = net[variant % net.size()];
      if (kind == 0) {
        const double M = std::max(0.25 * scale, 0.125) * (1 + (variant % 5));
        push_validated(family, symmetrize(distance_function(Y, z), M), Y, opts, budget);
      } else if (kind == 1) {
        const double M = std::max(0.2 * scale, 0.1) * (1 + (variant % 7));
        LipTestFunction u = distance_function(Y, z);
        const ScalarField cut = cutoff({u.expr, u.provenance}, M);
        u.expr = cut.expr;
        u.sup_bound = M;
        u.provenance = "cut(" + u.provenance + ")";
        push_validated(family, std::move(u), Y, opts, budget);
      } else {
        const int k = 4 + static_cast<int>(rng.below(8));
        const auto sub = farthest_point_net(
            Y, Y.sample_pool(256, mix64(seed, 100 + variant)), k);
        if (sub.size() < 2) continue;
        double dmin = kInf;
        for (std::size_t a = 0; a < sub.size(); ++a)
          for (std::size_t b = a + 1; b < sub.size(); ++b)
            dmin = std::min(dmin, Y.distance(sub[a], sub[b]));
        const double s = 0.45 * dmin;
        std::vector<double> vals(sub.size());
        for (auto& v : vals) v = rng.below(2) ? s : -s;
        push_validated(family, mcshane_extend(Y, sub, vals, 1.0), Y, opts, budget);
      }
    }
    return family;
  }

  // Constrained families: members must vanish near the complement.
  const double inr = V.inradius();
  if (inr <= 0.0) return family;
  const auto centers = V.interior_samples(Y, 512, mix64(seed, 31));
  const auto net = farthest_point_net(Y, centers, std::min(32, budget));

  for (double frac : {0.02, 0.05, 0.1, 0.2, 0.35, 0.5}) {
    if (static_cast<int>(family.size()) >= budget) break;
    push_validated(family, shaved_bump(Y, V, frac * inr), Y, opts, budget);
  }
  // cones around net points, shaved by 5% of their clearance
  for (const auto& c : net) {
    if (static_cast<int>(family.size()) >= budget) break;
    const double rho = V.support_surrogate(Y, c);
    if (rho <= 1e-9) continue;
    const OpenSet cone_ball = OpenSet::ball(CcBall{{c}, rho});
    push_validated(family, shaved_bump(Y, cone_ball, 0.05 * rho), Y, opts, budget);
  }
  // symmetrized bumps and refined-clamped McShane functions
  SampleRng rng(seed, 37);
  int variant = 0;
  while (static_cast<int>(family.size()) < budget && variant < 4 * budget) {
    const int kind = variant % 2;
    ++variant;
    if (kind == 0) {
      const double eps = 0.03 * inr * (1 + (variant % 4));
      LipTestFunction bump = shaved_bump(Y, V, eps);
      const double M = std::max(0.5 * (inr - eps), eps);
      push_validated(family, symmetrize(bump, M), Y, opts, budget);
    } else {
      const int k = 4 + static_cast<int>(rng.below(6));
      const auto sub = farthest_point_net(
          Y, V.interior_samples(Y, 128, mix64(seed, 200 + variant)), k);
      if (sub.size() < 2) continue;
      double dmin = kInf;
      for (std::size_t a = 0; a < sub.size(); ++a)
        for (std::size_t b = a + 1; b < sub.size(); ++b)
          dmin = std::min(dmin, Y.distance(sub[a], sub[b]));
      const double s = 0.45 * dmin;
      std::vector<double> vals(sub.size());
      for (auto& v : vals) v = rng.below(2) ? s : -s;
      LipTestFunction m = mcshane_extend(Y, sub, vals, 1.0);
      // sup over V of the min formula: net value plus at most one V diameter
      double vdiam = 2.0 * inr;
      for (std::size_t a = 0; a < V.balls().size(); ++a)
        for (std::size_t b = a + 1; b < V.balls().size(); ++b)
          vdiam = std::max(vdiam, Y.distance(V.balls()[a].center.c,
                                             V.balls()[b].center.c) +
                                      V.balls()[a].radius + V.balls()[b].radius);
      const double delta = 0.2 * inr;
      const RefineResult rr = refine(m, Y, V, delta, s + vdiam);
      push_validated(family, annulus_cutoff(rr.fn, Y, V, delta), Y, opts, budget);
    }
  }
  return family;
}

}  // namespace carnot
