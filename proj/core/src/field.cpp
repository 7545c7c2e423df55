#include "carnotlab/field.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "carnotlab/parallel.hpp"
#include "carnotlab/rng.hpp"

namespace carnot {

// ---------------------------------------------------------------------------
// Domain
// ---------------------------------------------------------------------------

Domain Domain::ball(GroupPtr g, CcBall b, QuadratureSpec quad) {
  Domain d;
  d.g_ = std::move(g);
  d.shape_ = std::move(b);
  d.quad_ = quad;
  return d;
}

Domain Domain::box(GroupPtr g, Box b, QuadratureSpec quad) {
  Domain d;
  d.g_ = std::move(g);
  d.shape_ = std::move(b);
  d.quad_ = quad;
  return d;
}

Domain Domain::with_quadrature(QuadratureSpec q) const {
  Domain d = *this;
  d.quad_ = q;
  return d;
}

bool Domain::contains(const Coords& x) const {
  if (is_ball()) {
    const CcBall& b = as_ball();
    return distance(*g_, b.center, {x}) < b.radius;
  }
  return as_box().contains(x);
}

double Domain::measure() const {
  if (is_ball()) return ball_measure(*g_, as_ball().radius);
  return g_->measure_norm() * as_box().volume();
}

double Domain::diameter_hint() const {
  if (is_ball()) return 2.0 * as_ball().radius;
  const Box& b = as_box();
  GroupPoint extent{b.hi - b.lo};
  const double bn = box_norm(*g_, extent);
  if (g_->calibrated() && g_->calibration().box_upper > 0.0)
    return g_->calibration().box_upper * bn;
  return (b.hi - b.lo).norm();
}

std::vector<Coords> Domain::samples() const {
  return samples(quad_.samples, quad_.seed);
}

std::vector<Coords> Domain::samples(long long n, std::uint64_t seed) const {
  std::vector<Coords> out(static_cast<std::size_t>(n));
  if (is_ball()) {
    const auto pts = ball_sample(*g_, as_ball(), static_cast<int>(n), seed);
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].c;
    return out;
  }
  const Box& b = as_box();
  const int N = g_->total_dim();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    SampleRng rng(seed, i);
    Coords x(N);
    for (int d = 0; d < N; ++d) x[d] = rng.uniform(b.lo[d], b.hi[d]);
    out[i] = x;
  });
  return out;
}

// ---------------------------------------------------------------------------
// FieldExpr
// ---------------------------------------------------------------------------

FieldPtr FieldExpr::leaf(std::function<double(const Coords&)> value, std::string name,
                         std::function<Eigen::VectorXd(const Coords&)> grad) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Leaf;
  e->value_fn_ = std::move(value);
  e->grad_fn_ = std::move(grad);
  e->name_ = std::move(name);
  return e;
}

FieldPtr FieldExpr::constant(double c) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Const;
  e->c_ = c;
  e->name_ = "const";
  return e;
}

FieldPtr FieldExpr::coordinate(int index) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Coord;
  e->coord_index_ = index;
  e->name_ = "x[" + std::to_string(index) + "]";
  return e;
}

FieldPtr FieldExpr::affine(double a, FieldPtr u, double c) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Affine;
  e->a_ = a;
  e->c_ = c;
  e->lhs_ = std::move(u);
  e->name_ = "affine";
  return e;
}

FieldPtr FieldExpr::sum(FieldPtr a, FieldPtr b) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Sum;
  e->lhs_ = std::move(a);
  e->rhs_ = std::move(b);
  e->name_ = "sum";
  return e;
}

FieldPtr FieldExpr::abs(FieldPtr u) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Abs;
  e->lhs_ = std::move(u);
  e->name_ = "abs";
  return e;
}

FieldPtr FieldExpr::min(FieldPtr a, FieldPtr b) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Min;
  e->lhs_ = std::move(a);
  e->rhs_ = std::move(b);
  e->name_ = "min";
  return e;
}

FieldPtr FieldExpr::max(FieldPtr a, FieldPtr b) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Max;
  e->lhs_ = std::move(a);
  e->rhs_ = std::move(b);
  e->name_ = "max";
  return e;
}

FieldPtr FieldExpr::smooth(std::function<double(double)> F,
                           std::function<double(double)> dF, FieldPtr u,
                           std::string name) {
  auto e = std::make_shared<FieldExpr>();
  e->kind_ = Kind::Smooth;
  e->F_ = std::move(F);
  e->dF_ = std::move(dF);
  e->lhs_ = std::move(u);
  e->name_ = std::move(name);
  return e;
}

double FieldExpr::value(const Coords& x) const {
  switch (kind_) {
    case Kind::Leaf:
      return value_fn_(x);
    case Kind::Const:
      return c_;
    case Kind::Coord:
      return x[coord_index_];
    case Kind::Affine:
      return a_ * lhs_->value(x) + c_;
    case Kind::Sum:
      return lhs_->value(x) + rhs_->value(x);
    case Kind::Abs:
      return std::abs(lhs_->value(x));
    case Kind::Min:
      return std::min(lhs_->value(x), rhs_->value(x));
    case Kind::Max:
      return std::max(lhs_->value(x), rhs_->value(x));
    case Kind::Smooth:
      return F_(lhs_->value(x));
  }
  return 0.0;
}

namespace {

GradSample numeric_gradient(const std::function<double(const Coords&)>& f,
                            const DiffContext& ctx, const Coords& x) {
  const GroupDescriptor& g = *ctx.g;
  const int n = g.horizontal_dim();
  GradSample out;
  out.grad = Eigen::VectorXd::Zero(n);
  const GroupPoint base{x};
  for (int j = 0; j < n; ++j) {
    bool plus_ok = true, minus_ok = true;
    const Coords xp = flow(g, j, ctx.h, base).c;
    const Coords xm = flow(g, j, -ctx.h, base).c;
    if (ctx.domain) {
      plus_ok = ctx.domain->contains(xp);
      minus_ok = ctx.domain->contains(xm);
    }
    if (plus_ok && minus_ok) {
      const double h = ctx.h;
      const double d_h = (f(xp) - f(xm)) / (2.0 * h);
      const double d_h2 = (f(flow(g, j, 0.5 * h, base).c) -
                           f(flow(g, j, -0.5 * h, base).c)) /
                          h;
      out.grad[j] = (4.0 * d_h2 - d_h) / 3.0;
      out.error = std::max(out.error, std::abs(d_h2 - d_h) / 3.0);
    } else {
      out.one_sided = true;
      const double sgn = plus_ok ? 1.0 : -1.0;
      const Coords x1 = flow(g, j, sgn * ctx.h, base).c;
      const Coords xh = flow(g, j, sgn * 0.5 * ctx.h, base).c;
      const double d_h = sgn * (f(x1) - f(x)) / ctx.h;
      const double d_h2 = sgn * (f(xh) - f(x)) / (0.5 * ctx.h);
      out.grad[j] = 2.0 * d_h2 - d_h;
      out.error = std::max(out.error, std::abs(d_h2 - d_h));
    }
  }
  return out;
}

}  // namespace

GradSample FieldExpr::gradient(const Coords& x, const DiffContext& ctx) const {
  const int n = ctx.g->horizontal_dim();
  switch (kind_) {
    case Kind::Const: {
      GradSample g0;
      g0.grad = Eigen::VectorXd::Zero(n);
      return g0;
    }
    case Kind::Coord: {
      if (ctx.g->layer_of(coord_index_) == 1) {
        GradSample g0;
        g0.grad = Eigen::VectorXd::Zero(n);
        g0.grad[coord_index_] = 1.0;
        return g0;
      }
      return numeric_gradient([this](const Coords& y) { return y[coord_index_]; },
                              ctx, x);
    }
    case Kind::Leaf: {
      if (grad_fn_) {
        GradSample g0;
        g0.grad = grad_fn_(x);
        return g0;
      }
      return numeric_gradient(value_fn_, ctx, x);
    }
    case Kind::Affine: {
      GradSample g0 = lhs_->gradient(x, ctx);
      g0.grad *= a_;
      g0.error *= std::abs(a_);
      return g0;
    }
    case Kind::Sum: {
      GradSample ga = lhs_->gradient(x, ctx);
      const GradSample gb = rhs_->gradient(x, ctx);
      ga.grad += gb.grad;
      ga.error += gb.error;
      ga.one_sided = ga.one_sided || gb.one_sided;
      return ga;
    }
    case Kind::Abs: {
      const double v = lhs_->value(x);
      if (v == 0.0) {
        GradSample g0;
        g0.grad = Eigen::VectorXd::Zero(n);
        return g0;  // grad u = 0 a.e. on {u = 0}
      }
      GradSample g0 = lhs_->gradient(x, ctx);
      if (v < 0.0) g0.grad *= -1.0;
      return g0;
    }
    case Kind::Min: {
      // tie goes to the right child, so clamps against constants zero out
      return lhs_->value(x) < rhs_->value(x) ? lhs_->gradient(x, ctx)
                                             : rhs_->gradient(x, ctx);
    }
    case Kind::Max: {
      return lhs_->value(x) > rhs_->value(x) ? lhs_->gradient(x, ctx)
                                             : rhs_->gradient(x, ctx);
    }
    case Kind::Smooth: {
      const double s = dF_(lhs_->value(x));
      GradSample g0 = lhs_->gradient(x, ctx);
      g0.grad *= s;
      g0.error *= std::abs(s);
      return g0;
    }
  }
  GradSample g0;
  g0.grad = Eigen::VectorXd::Zero(n);
  return g0;
}

FieldPtr FieldExpr::compose_with(std::function<Coords(const Coords&)> phi,
                                 std::string tag) const {
  switch (kind_) {
    case Kind::Leaf: {
      auto f = value_fn_;
      return leaf([f, phi](const Coords& x) { return f(phi(x)); }, name_ + tag);
    }
    case Kind::Coord: {
      const int idx = coord_index_;
      return leaf([idx, phi](const Coords& x) { return phi(x)[idx]; },
                  name_ + tag);
    }
    case Kind::Const:
      return constant(c_);
    case Kind::Affine:
      return affine(a_, lhs_->compose_with(phi, tag), c_);
    case Kind::Sum:
      return sum(lhs_->compose_with(phi, tag), rhs_->compose_with(phi, tag));
    case Kind::Abs:
      return abs(lhs_->compose_with(phi, tag));
    case Kind::Min:
      return min(lhs_->compose_with(phi, tag), rhs_->compose_with(phi, tag));
    case Kind::Max:
      return max(lhs_->compose_with(phi, tag), rhs_->compose_with(phi, tag));
    case Kind::Smooth:
      return smooth(F_, dF_, lhs_->compose_with(phi, tag), name_);
  }
  return constant(0.0);
}

// ---------------------------------------------------------------------------
// Chain-rule toolbox
// ---------------------------------------------------------------------------

ScalarField pos_part(const ScalarField& u) {
  return {FieldExpr::max(u.expr, FieldExpr::constant(0.0)), u.name + "+"};
}

ScalarField neg_part(const ScalarField& u) {
  return {FieldExpr::max(FieldExpr::affine(-1.0, u.expr, 0.0), FieldExpr::constant(0.0)),
          u.name + "-"};
}

ScalarField abs_val(const ScalarField& u) {
  return {FieldExpr::abs(u.expr), "|" + u.name + "|"};
}

ScalarField cutoff(const ScalarField& u, double M) {
  auto clamped = FieldExpr::min(FieldExpr::max(u.expr, FieldExpr::constant(-M)),
                                FieldExpr::constant(M));
  return {clamped, "cut_" + std::to_string(M) + "(" + u.name + ")"};
}

ScalarField compose_smooth(std::function<double(double)> F,
                           std::function<double(double)> dF, const ScalarField& u,
                           std::string name) {
  return {FieldExpr::smooth(std::move(F), std::move(dF), u.expr, name),
          name + "(" + u.name + ")"};
}

ScalarField symmetrize_field(const ScalarField& u, double M) {
  // sym_M(t) = |M - |t - M/2|| - M/2
  auto inner = FieldExpr::abs(FieldExpr::affine(1.0, u.expr, -0.5 * M));
  auto outer = FieldExpr::abs(FieldExpr::affine(-1.0, inner, M));
  return {FieldExpr::affine(1.0, outer, -0.5 * M), "sym(" + u.name + ")"};
}

ScalarField coordinate_field(const GroupDescriptor&, int index) {
  return {FieldExpr::coordinate(index), "x[" + std::to_string(index) + "]"};
}

ScalarField constant_field(double c) {
  return {FieldExpr::constant(c), "const"};
}

ScalarField distance_field(GroupPtr g, GroupPoint z) {
  auto fn = [g, z](const Coords& x) { return distance(*g, z, {x}); };
  return {FieldExpr::leaf(fn, "d(.,z)"), "d(.,z)"};
}

ScalarField polynomial_field(const GroupDescriptor&,
                             std::vector<std::pair<Eigen::VectorXi, double>> terms) {
  auto fn = [terms](const Coords& x) {
    double out = 0.0;
    for (const auto& [e, c] : terms) {
      double t = c;
      for (int i = 0; i < e.size(); ++i)
        for (int k = 0; k < e[i]; ++k) t *= x[i];
      out += t;
    }
    return out;
  };
  return {FieldExpr::leaf(fn, "poly"), "poly"};
}

// ---------------------------------------------------------------------------
// Derivatives
// ---------------------------------------------------------------------------

DerivResult horizontal_derivative(const ScalarField& u, const GroupDescriptor& g,
                                  int j, const Coords& x, double h,
                                  const Domain* domain) {
  DerivResult r;
  const GroupPoint base{x};
  const Coords xp = flow(g, j, h, base).c;
  const Coords xm = flow(g, j, -h, base).c;
  bool plus_ok = true, minus_ok = true;
  if (domain) {
    plus_ok = domain->contains(xp);
    minus_ok = domain->contains(xm);
  }
  auto eval = [&](const Coords& y) { return u.expr->value(y); };
  if (plus_ok && minus_ok) {
    r.at_h = (eval(xp) - eval(xm)) / (2.0 * h);
    r.at_h2 = (eval(flow(g, j, 0.5 * h, base).c) -
               eval(flow(g, j, -0.5 * h, base).c)) /
              h;
    r.value = (4.0 * r.at_h2 - r.at_h) / 3.0;
    r.error = std::abs(r.at_h2 - r.at_h) / 3.0;
  } else {
    r.one_sided = true;
    const double sgn = plus_ok ? 1.0 : -1.0;
    const double u0 = eval(x);
    r.at_h = sgn * (eval(flow(g, j, sgn * h, base).c) - u0) / h;
    r.at_h2 = sgn * (eval(flow(g, j, sgn * 0.5 * h, base).c) - u0) / (0.5 * h);
    r.value = 2.0 * r.at_h2 - r.at_h;
    r.error = std::abs(r.at_h2 - r.at_h);
  }
  return r;
}

GradSample horizontal_gradient(const ScalarField& u, const GroupDescriptor& g,
                               const Coords& x, double h, const Domain* domain) {
  DiffContext ctx{&g, h, domain};
  return u.expr->gradient(x, ctx);
}

double default_step(const Domain& domain) {
  return 1e-4 * domain.diameter_hint();
}

Seminorm seminorm_Lq(const ScalarField& u, const Domain& domain, double q,
                     const SeminormOptions& opts) {
  const long long n = opts.samples.value_or(domain.quadrature().samples);
  const double h = opts.h.value_or(default_step(domain));
  const auto pts = domain.samples(n, domain.quadrature().seed);
  const DiffContext ctx{&domain.group(), h, &domain};

  std::vector<double> mags(pts.size());
  std::vector<double> errs(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const GradSample gs = u.expr->gradient(pts[i], ctx);
    mags[i] = gs.grad.norm();
    errs[i] = gs.error;
  });

  Seminorm out;
  out.q = q;
  out.samples = n;
  if (std::isinf(q)) {
    double m = 0.0, e = 0.0;
    for (std::size_t i = 0; i < mags.size(); ++i) {
      if (mags[i] > m) {
        m = mags[i];
        e = errs[i];
      }
    }
    out.value = m;
    out.error = e;
    return out;
  }
  double mean = 0.0;
  for (double v : mags) mean += std::pow(v, q);
  mean /= static_cast<double>(mags.size());
  double var = 0.0;
  for (double v : mags) {
    const double d = std::pow(v, q) - mean;
    var += d * d;
  }
  var /= static_cast<double>(mags.size());
  const double integral = domain.measure() * mean;
  const double stderr_i =
      domain.measure() * std::sqrt(var / static_cast<double>(mags.size()));
  out.value = std::pow(integral, 1.0 / q);
  if (integral > 0.0)
    out.error = out.value / q * (stderr_i / integral);
  return out;
}

// ---------------------------------------------------------------------------
// Line restrictions and metric derivatives
// ---------------------------------------------------------------------------

std::vector<CurveSample> line_restriction(const ScalarField& u,
                                          const GroupDescriptor& g, int j,
                                          const Coords& base, double window_lo,
                                          double window_hi, int count) {
  std::vector<CurveSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double t =
        window_lo + (window_hi - window_lo) * i / std::max(1, count - 1);
    out.push_back({t, u.expr->value(flow(g, j, t, {base}).c)});
  }
  return out;
}

std::vector<MapCurveSample> line_restriction_map(
    const std::function<Coords(const Coords&)>& phi, const GroupDescriptor& g,
    int j, const Coords& base, double window_lo, double window_hi, int count) {
  std::vector<MapCurveSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double t =
        window_lo + (window_hi - window_lo) * i / std::max(1, count - 1);
    out.push_back({t, phi(flow(g, j, t, {base}).c)});
  }
  return out;
}

MetricDerivResult metric_derivative(
    const std::function<Coords(const Coords&)>& phi,
    const std::function<double(const Coords&, const Coords&)>& target_distance,
    const GroupDescriptor& g, int j, const Coords& x, double h) {
  MetricDerivResult r;
  const Coords y0 = phi(x);
  r.at_h = target_distance(phi(flow(g, j, h, {x}).c), y0) / h;
  r.at_h2 = target_distance(phi(flow(g, j, 0.5 * h, {x}).c), y0) / (0.5 * h);
  r.value = 2.0 * r.at_h2 - r.at_h;
  r.error = std::abs(r.at_h2 - r.at_h);
  return r;
}

}  // namespace carnot
