#include "carnotlab/metric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "carnotlab/parallel.hpp"
#include "carnotlab/rng.hpp"

namespace carnot {

namespace {

constexpr double kPi = 3.14159265358979323846;
// z-extent of the unit Heisenberg ball: the geodesic height (w - sin w)/(2w^2)
// is maximized at w = pi with value 1/(2 pi).
constexpr double kH1BallZBound = 1.0 / (2.0 * kPi);

// mu(w) = (w - sin w) / (8 sin^2(w/2)), strictly increasing from 0 to +inf
// on (0, 2 pi). Solving mu(w) = |z| / R^2 gives the geodesic parameter.
double mu(double w) {
  const double s = std::sin(0.5 * w);
  return (w - std::sin(w)) / (8.0 * s * s);
}

double mu_prime(double w) {
  const double s = std::sin(0.5 * w);
  const double c = std::cos(0.5 * w);
  return (2.0 * s * s * s - (w - std::sin(w)) * c) / (8.0 * s * s * s);
}

}  // namespace

double heisenberg_distance0(int k, const Coords& p) {
  const int n = 2 * k;
  const double R = p.head(n).norm();
  const double az = std::abs(p[n]);
  if (az == 0.0) return R;
  if (R * R < 1e-30 * az) return 2.0 * std::sqrt(kPi * az);

  const double ratio = az / (R * R);
  double lo = 1e-14, hi = 2.0 * kPi - 1e-14;
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mu(mid) < ratio)
      lo = mid;
    else
      hi = mid;
  }
  double w = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {  // Newton polish inside the bracket
    const double f = mu(w) - ratio;
    const double df = mu_prime(w);
    if (df <= 0.0) break;
    const double next = w - f / df;
    if (next <= lo || next >= hi) break;
    w = next;
  }
  return R * w / (2.0 * std::sin(0.5 * w));
}

// ---------------------------------------------------------------------------
// Box norm and bounding boxes
// ---------------------------------------------------------------------------

double box_norm(const GroupDescriptor& g, const GroupPoint& x) {
  double out = 0.0;
  for (int i = 0; i < g.total_dim(); ++i) {
    const double v = std::pow(std::abs(x.c[i]), 1.0 / g.layer_of(i));
    out = std::max(out, v);
  }
  return out;
}

Box ball_bounding_box(const GroupDescriptor& g, double r) {
  const int N = g.total_dim();
  Box box{Coords(N), Coords(N)};
  if (g.heisenberg_k() > 0) {
    // Horizontal coordinates are 1-Lipschitz, so |x_i| <= r; the vertical
    // coordinate is bounded by the geodesic profile maximum r^2/(2 pi).
    const int n = g.horizontal_dim();
    for (int i = 0; i < n; ++i) {
      box.lo[i] = -r;
      box.hi[i] = r;
    }
    box.lo[n] = -(r * r) * kH1BallZBound;
    box.hi[n] = (r * r) * kH1BallZBound;
    return box;
  }
  if (g.is_abelian()) {
    for (int i = 0; i < N; ++i) {
      box.lo[i] = -r;
      box.hi[i] = r;
    }
    return box;
  }
  const double c1 = g.calibration().box_lower;
  if (!(c1 > 0.0)) throw UncalibratedError(g.name());
  for (int i = 0; i < N; ++i) {
    const double b = std::pow(r / c1, g.layer_of(i));
    box.lo[i] = -b;
    box.hi[i] = b;
  }
  return box;
}

double ball_measure(const GroupDescriptor& g, double r) {
  return std::pow(r, g.homogeneous_dim());
}

// ---------------------------------------------------------------------------
// Control-path optimizer for generic groups
// ---------------------------------------------------------------------------

double HorizontalPath::length(const GroupDescriptor&) const {
  double sum = 0.0;
  for (int k = 0; k < controls.cols(); ++k) sum += controls.col(k).norm();
  return sum / static_cast<double>(controls.cols());
}

GroupPoint HorizontalPath::endpoint(const GroupDescriptor& g,
                                    const GroupPoint& from) const {
  const int K = static_cast<int>(controls.cols());
  GroupPoint p = from;
  for (int k = 0; k < K; ++k) {
    p = multiply(g, p, horizontal_point(g, controls.col(k) / K));
  }
  return p;
}

namespace {

struct PenaltyEval {
  double energy;
  double err2;
};

PenaltyEval eval_controls(const GroupDescriptor& g, const Eigen::MatrixXd& u,
                          const GroupPoint& target) {
  const int K = static_cast<int>(u.cols());
  GroupPoint p = identity(g);
  for (int k = 0; k < K; ++k)
    p = multiply(g, p, horizontal_point(g, u.col(k) / K));
  const GroupPoint diff = multiply(g, inverse(g, p), target);
  double energy = 0.0;
  for (int k = 0; k < K; ++k) energy += u.col(k).squaredNorm();
  energy /= K;
  return {energy, diff.c.squaredNorm()};
}

Eigen::MatrixXd init_controls(const GroupDescriptor& g, const GroupPoint& target,
                              int K, int start, SampleRng& rng) {
  const int n = g.horizontal_dim();
  Eigen::MatrixXd u(n, K);
  const double scale = std::max(box_norm(g, target), 1e-3);
  if (start == 0) {
    // straight line toward the horizontal part
    for (int k = 0; k < K; ++k) u.col(k) = target.c.head(n);
    return u;
  }
  if (start == 1 || start == 2) {
    // rotating controls in a random horizontal 2-plane, both orientations
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    a.normalize();
    b -= a.dot(b) * a;
    if (b.norm() < 1e-12) b[(start + 1) % n] += 1.0, b -= a.dot(b) * a;
    b.normalize();
    const double sgn = start == 1 ? 1.0 : -1.0;
    const double r = 2.0 * std::sqrt(kPi) * scale;
    for (int k = 0; k < K; ++k) {
      const double t = (k + 0.5) / K;
      u.col(k) = r * (std::cos(2.0 * kPi * sgn * t) * a +
                      std::sin(2.0 * kPi * sgn * t) * b);
    }
    for (int k = 0; k < K; ++k) u.col(k) += target.c.head(n);
    return u;
  }
  // random Fourier controls
  Eigen::VectorXd c0(n), c1(n), s1(n);
  for (int i = 0; i < n; ++i) {
    c0[i] = rng.normal();
    c1[i] = rng.normal();
    s1[i] = rng.normal();
  }
  for (int k = 0; k < K; ++k) {
    const double t = (k + 0.5) / K;
    u.col(k) = scale * (c0 + c1 * std::cos(2.0 * kPi * t) +
                        s1 * std::sin(2.0 * kPi * t));
  }
  return u;
}

// Gradient descent with backtracking on E(u) + lambda * err2(u).
void descend(const GroupDescriptor& g, Eigen::MatrixXd& u, const GroupPoint& target,
             double lambda, int iterations) {
  const int n = static_cast<int>(u.rows());
  const int K = static_cast<int>(u.cols());
  auto objective = [&](const Eigen::MatrixXd& v) {
    const PenaltyEval pe = eval_controls(g, v, target);
    return pe.energy + lambda * pe.err2;
  };
  double f = objective(u);
  double step = 0.1;
  const double fd = 1e-6 * std::max(1.0, u.norm());
  Eigen::MatrixXd grad(n, K);
  for (int it = 0; it < iterations; ++it) {
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd v = u;
        v(i, k) += fd;
        const double fp = objective(v);
        v(i, k) -= 2.0 * fd;
        const double fm = objective(v);
        grad(i, k) = (fp - fm) / (2.0 * fd);
      }
    }
    const double gnorm = grad.norm();
    if (gnorm < 1e-12) break;
    bool moved = false;
    for (int bt = 0; bt < 30; ++bt) {
      Eigen::MatrixXd v = u - (step / gnorm) * grad;
      const double fv = objective(v);
      if (fv < f - 1e-14) {
        u = v;
        f = fv;
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
}

// Gauss-Newton polish of the endpoint constraint. The minimal-norm
// least-squares step keeps the energy disturbance small while driving the
// endpoint discrepancy to machine scale.
void polish_endpoint(const GroupDescriptor& g, Eigen::MatrixXd& u,
                     const GroupPoint& target, double tol, int max_iter) {
  const int n = static_cast<int>(u.rows());
  const int K = static_cast<int>(u.cols());
  const int P = n * K;
  const int N = g.total_dim();
  auto diff = [&](const Eigen::MatrixXd& v) -> Coords {
    GroupPoint p = identity(g);
    for (int k = 0; k < K; ++k)
      p = multiply(g, p, horizontal_point(g, v.col(k) / K));
    return multiply(g, inverse(g, p), target).c;
  };
  for (int it = 0; it < max_iter; ++it) {
    const Coords d0 = diff(u);
    if (d0.norm() < tol) return;
    Eigen::MatrixXd J(N, P);
    const double h = 1e-6 * std::max(1.0, u.norm());
    for (int p = 0; p < P; ++p) {
      Eigen::MatrixXd v = u;
      v(p % n, p / n) += h;
      const Coords dp = diff(v);
      v(p % n, p / n) -= 2.0 * h;
      const Coords dm = diff(v);
      J.col(p) = (dp - dm) / (2.0 * h);
    }
    const Eigen::VectorXd delta = J.completeOrthogonalDecomposition().solve(d0);
    for (int p = 0; p < P; ++p) u(p % n, p / n) -= delta[p];
  }
}

}  // namespace

ControlResult optimize_control_path(const GroupDescriptor& g, const GroupPoint& target,
                                    const ControlOptions& opts) {
  ControlResult best;
  best.length = std::numeric_limits<double>::infinity();
  int K = opts.segments;
  for (int refine = 0; refine <= opts.refinements; ++refine, K *= 2) {
    std::vector<ControlResult> results(opts.starts);
    parallel_for(opts.starts, [&](std::size_t s) {
      SampleRng rng(opts.seed, s, static_cast<std::uint64_t>(refine));
      Eigen::MatrixXd u = init_controls(g, target, K, static_cast<int>(s), rng);
      for (double lambda = opts.lambda0; lambda <= opts.lambda_max; lambda *= 10.0) {
        descend(g, u, target, lambda, opts.iterations);
        const PenaltyEval pe = eval_controls(g, u, target);
        if (std::sqrt(pe.err2) < 1e-12) break;
      }
      polish_endpoint(g, u, target, 1e-10, 12);
      ControlResult r;
      r.path.controls = u;
      r.length = r.path.length(g);
      const GroupPoint end = r.path.endpoint(g, identity(g));
      r.endpoint_error = box_norm(g, multiply(g, inverse(g, end), target));
      r.converged = r.endpoint_error < opts.endpoint_tol;
      results[s] = std::move(r);
    });
    for (auto& r : results) {
      if (r.converged && r.length < best.length) best = std::move(r);
    }
    if (best.converged) break;
    // keep the least-violating candidate for the error bracket
    for (auto& r : results) {
      if (!best.converged &&
          (best.length == std::numeric_limits<double>::infinity() ||
           r.endpoint_error < best.endpoint_error))
        best = std::move(r);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Distance dispatch
// ---------------------------------------------------------------------------

double distance(const GroupDescriptor& g, const GroupPoint& x, const GroupPoint& y,
                const MetricOptions& opts) {
  const GroupPoint w = multiply(g, inverse(g, x), y);
  if (g.heisenberg_k() > 0) return heisenberg_distance0(g.heisenberg_k(), w.c);
  if (g.is_abelian()) return w.c.norm();
  ControlResult r = optimize_control_path(g, w, opts.control);
  // horizontal coordinates are 1-Lipschitz in any Carnot group
  const double lower = w.c.head(g.horizontal_dim()).cwiseAbs().maxCoeff();
  if (!r.converged) throw NonconvergenceError(lower, r.length + r.endpoint_error);
  return r.length;
}

// ---------------------------------------------------------------------------
// Ball sampling
// ---------------------------------------------------------------------------

std::vector<GroupPoint> ball_sample(const GroupDescriptor& g, const CcBall& ball,
                                    int n, std::uint64_t seed) {
  const Box box = ball_bounding_box(g, ball.radius);
  const int N = g.total_dim();
  std::vector<GroupPoint> out(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      SampleRng rng(seed, i, attempt);
      Coords u(N);
      for (int d = 0; d < N; ++d) u[d] = rng.uniform(box.lo[d], box.hi[d]);
      if (distance(g, identity(g), {u}) < ball.radius) {
        out[i] = multiply(g, ball.center, {u});
        return;
      }
      if (attempt > 100000)
        throw CarnotError("ball rejection sampling failed to accept");
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Memoized estimator
// ---------------------------------------------------------------------------

std::size_t DistanceEstimator::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = 0x2545F4914F6CDD1Dull;
  for (double d : k.w) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    h = mix64(h, bits);
  }
  return static_cast<std::size_t>(h);
}

DistanceEstimator::DistanceEstimator(GroupPtr g, MetricOptions opts)
    : g_(std::move(g)), opts_(opts) {
  // closed forms are cheaper than a lock
  use_cache_ = g_->heisenberg_k() == 0 && !g_->is_abelian();
}

double DistanceEstimator::operator()(const GroupPoint& x, const GroupPoint& y) const {
  if (!use_cache_) return distance(*g_, x, y, opts_);
  const GroupPoint w = multiply(*g_, inverse(*g_, x), y);
  Key key;
  key.w.assign(w.c.data(), w.c.data() + w.c.size());
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
  }
  const double d = distance(*g_, identity(*g_), w, opts_);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (map_.find(key) == map_.end()) {
      lru_.emplace_front(key, d);
      map_[key] = lru_.begin();
      if (map_.size() > kCapacity) {
        map_.erase(lru_.back().first);
        lru_.pop_back();
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

GroupPtr calibrate_measure(const GroupPtr& g, const CalibrateOptions& opts) {
  // Abelian groups have the exact constant already.
  if (g->is_abelian() && g->calibrated()) return g;

  const int N = g->total_dim();
  // Bounding box for B(0,1): Heisenberg profile bounds, otherwise a box-norm
  // box from a conservative pre-pass estimate of c1.
  Box box{Coords(N), Coords(N)};
  if (g->heisenberg_k() > 0) {
    box = ball_bounding_box(*g, 1.0);
  } else {
    for (int i = 0; i < N; ++i) {
      const int l = g->layer_of(i);
      const double b = l == 1 ? 1.0 : std::pow(2.0, l);  // generous start
      box.lo[i] = -b;
      box.hi[i] = b;
    }
  }

  MetricOptions mopts;
  std::vector<char> hits(static_cast<std::size_t>(opts.measure_samples), 0);
  parallel_for(static_cast<std::size_t>(opts.measure_samples), [&](std::size_t i) {
    SampleRng rng(opts.seed, i);
    Coords x(N);
    for (int d = 0; d < N; ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
    double d0;
    try {
      d0 = distance(*g, identity(*g), {x}, mopts);
    } catch (const NonconvergenceError& e) {
      d0 = 0.5 * (e.lower() + e.upper());
    }
    hits[i] = d0 < 1.0 ? 1 : 0;
  });
  long long in = 0;
  for (char h : hits) in += h;
  const double p = static_cast<double>(in) / static_cast<double>(opts.measure_samples);
  const double vol = box.volume() * p;
  const double vol_err = box.volume() *
                         std::sqrt(std::max(p * (1.0 - p), 0.0) /
                                   static_cast<double>(opts.measure_samples));
  GroupCalibration cal;
  cal.measure_norm = 1.0 / vol;
  cal.measure_norm_stderr = vol_err / (vol * vol);
  cal.samples = opts.measure_samples;
  cal.seed = opts.seed;

  // Box-norm equivalence constants from sampled d/box ratios.
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = 0.0;
  std::vector<double> ratios(static_cast<std::size_t>(opts.box_samples), 1.0);
  parallel_for(static_cast<std::size_t>(opts.box_samples), [&](std::size_t i) {
    SampleRng rng(opts.seed + 1, i);
    Coords x(N);
    for (int d = 0; d < N; ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
    const double b = box_norm(*g, {x});
    if (b < 1e-9) {
      ratios[i] = 1.0;
      return;
    }
    double d0;
    try {
      d0 = distance(*g, identity(*g), {x}, mopts);
    } catch (const NonconvergenceError& e) {
      d0 = e.upper();
    }
    ratios[i] = d0 / b;
  });
  for (double r : ratios) {
    c1 = std::min(c1, r);
    c2 = std::max(c2, r);
  }
  // sampled extremes underestimate the true range slightly; pad 2%
  cal.box_lower = c1 * 0.98;
  cal.box_upper = c2 * 1.02;
  if (g->heisenberg_k() > 0) {
    // the exact constants are known for the Heisenberg quasi-norm
    cal.box_lower = 1.0;
    cal.box_upper = 2.0 * std::sqrt(kPi);
  }
  return g->with_calibration(cal);
}

}  // namespace carnot
