#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "carnotlab/group.hpp"
#include "carnotlab/metric.hpp"
#include "carnotlab/rng.hpp"

using namespace carnot;

namespace {

GroupPoint pt(std::initializer_list<double> v) {
  Coords c(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) c[i++] = x;
  return {c};
}

GroupPoint random_point(const GroupDescriptor& g, SampleRng& rng, double scale = 1.0) {
  Coords c(g.total_dim());
  for (int i = 0; i < g.total_dim(); ++i) c[i] = scale * rng.uniform(-1.0, 1.0);
  return {c};
}

}  // namespace

TEST_CASE("axis identity: d(exp(t X_j)(x), x) = |t|") {
  auto g = GroupDescriptor::heisenberg(1);
  SampleRng rng(11);
  for (int t = 0; t < 200; ++t) {
    const GroupPoint x = random_point(*g, rng, 2.0);
    const double s = rng.uniform(-2.0, 2.0);
    const int j = static_cast<int>(rng.below(2));
    const double d = distance(*g, flow(*g, j, s, x), x);
    CHECK(d == doctest::Approx(std::abs(s)).epsilon(1e-6));
  }
  CHECK(distance(*g, pt({0.3, 1, -2}), pt({0.3, 1, -2})) == 0.0);
}

TEST_CASE("vertical axis closed form d(0,(0,0,z)) = 2 sqrt(pi |z|)") {
  auto g = GroupDescriptor::heisenberg(1);
  for (double z : {0.1, 1.0, 4.0, -0.7}) {
    const double d = distance(*g, identity(*g), pt({0, 0, z}));
    CHECK(d == doctest::Approx(2.0 * std::sqrt(M_PI * std::abs(z))).epsilon(1e-9));
  }
}

TEST_CASE("distance symmetry, left invariance, homogeneity") {
  auto g = GroupDescriptor::heisenberg(1);
  SampleRng rng(12);
  for (int t = 0; t < 100; ++t) {
    const GroupPoint x = random_point(*g, rng);
    const GroupPoint y = random_point(*g, rng);
    const GroupPoint a = random_point(*g, rng);
    const double d = distance(*g, x, y);
    CHECK(distance(*g, y, x) == doctest::Approx(d).epsilon(1e-10));
    CHECK(distance(*g, multiply(*g, a, x), multiply(*g, a, y)) ==
          doctest::Approx(d).epsilon(1e-10));
    const double lam = std::exp(rng.uniform(-1.0, 1.0));
    CHECK(distance(*g, dilate(*g, lam, x), dilate(*g, lam, y)) ==
          doctest::Approx(lam * d).epsilon(1e-8));
  }
}

TEST_CASE("triangle inequality on random triples") {
  auto g = GroupDescriptor::heisenberg(1);
  SampleRng rng(13);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const GroupPoint a = random_point(*g, rng);
    const GroupPoint b = random_point(*g, rng);
    const GroupPoint c = random_point(*g, rng);
    const double ab = distance(*g, a, b);
    const double bc = distance(*g, b, c);
    const double ac = distance(*g, a, c);
    if (ac > ab + bc + 1e-9) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("box norm homogeneity and examples") {
  auto g = GroupDescriptor::heisenberg(1);
  CHECK(box_norm(*g, pt({1, 0, 0})) == 1.0);
  CHECK(box_norm(*g, pt({0, 0, 4})) == 2.0);
  SampleRng rng(14);
  for (int t = 0; t < 100; ++t) {
    const GroupPoint x = random_point(*g, rng);
    const double lam = std::exp(rng.uniform(-1.5, 1.5));
    CHECK(box_norm(*g, dilate(*g, lam, x)) ==
          doctest::Approx(lam * box_norm(*g, x)).epsilon(1e-12));
  }
}

TEST_CASE("box norm equivalence constants hold on samples") {
  auto g = GroupDescriptor::heisenberg(1);
  const double c1 = g->calibration().box_lower;
  const double c2 = g->calibration().box_upper;
  CHECK(c1 == doctest::Approx(1.0));
  CHECK(c2 == doctest::Approx(2.0 * std::sqrt(M_PI)));
  SampleRng rng(15);
  for (int t = 0; t < 10000; ++t) {
    const GroupPoint x = random_point(*g, rng, 2.0);
    const double b = box_norm(*g, x);
    if (b < 1e-9) continue;
    const double d = distance(*g, identity(*g), x);
    CHECK(d >= c1 * b * (1.0 - 1e-9));
    CHECK(d <= c2 * b * (1.0 + 1e-9));
  }
}

TEST_CASE("ball sampling: containment, measure, dilation pushforward") {
  auto g = GroupDescriptor::heisenberg(1);
  const CcBall ball{pt({0.5, -0.25, 0.1}), 0.8};
  const auto samples = ball_sample(*g, ball, 4000, 21);
  REQUIRE(samples.size() == 4000);
  for (const auto& p : samples)
    CHECK(distance(*g, ball.center, p) < ball.radius * (1.0 + 1e-12));

  // radius distribution: P(d < s) = (s / r)^nu under uniform Haar sampling
  const int nu = g->homogeneous_dim();
  for (double frac : {0.5, 0.7, 0.9}) {
    int count = 0;
    for (const auto& p : samples)
      if (distance(*g, ball.center, p) < frac * ball.radius) ++count;
    const double expect = std::pow(frac, nu);
    const double se = std::sqrt(expect * (1 - expect) / samples.size());
    CHECK(std::abs(count / 4000.0 - expect) < 4.0 * se + 1e-3);
  }

  // pushforward under delta_2 is uniform on B(0, 2r): compare radius CDF
  const CcBall base{identity(*g), 1.0};
  const auto u = ball_sample(*g, base, 4000, 22);
  int below = 0;
  for (const auto& p : u) {
    const GroupPoint q = dilate(*g, 2.0, p);
    if (distance(*g, identity(*g), q) < 1.4) ++below;
  }
  const double expect = std::pow(1.4 / 2.0, nu);
  CHECK(std::abs(below / 4000.0 - expect) < 4.0 * std::sqrt(expect * (1 - expect) / 4000.0) + 1e-3);
}

TEST_CASE("metric ball measure follows r^nu") {
  auto g = GroupDescriptor::heisenberg(1);
  for (double r : {0.5, 1.0, 2.0}) {
    CHECK(ball_measure(*g, r) == doctest::Approx(std::pow(r, 4)));
    Region region;
    region.bounds = ball_bounding_box(*g, r);
    region.indicator = [&](const Coords& x) {
      return distance(*g, identity(*g), {x}) < r;
    };
    const MeasureEstimate m = measure(*g, region, 200000, 23);
    CHECK(std::abs(m.value - std::pow(r, 4)) < 3.0 * m.std_error + 2e-3 * std::pow(r, 4));
  }
}

TEST_CASE("control optimizer reproduces closed-form distances within 1%") {
  auto g = GroupDescriptor::heisenberg(1);
  ControlOptions opts;
  opts.segments = 32;
  opts.refinements = 1;
  opts.starts = 4;
  opts.iterations = 160;

  // straight horizontal target
  {
    const ControlResult r = optimize_control_path(*g, pt({1.0, 0.5, 0.0}), opts);
    REQUIRE(r.converged);
    const double exact = distance(*g, identity(*g), pt({1.0, 0.5, 0.0}));
    CHECK(r.length >= exact * (1.0 - 1e-6));
    CHECK(r.length <= exact * 1.01);
  }
  // vertical target: needs the full geodesic loop
  {
    const GroupPoint target = pt({0.0, 0.0, 0.25});
    const ControlResult r = optimize_control_path(*g, target, opts);
    REQUIRE(r.converged);
    const double exact = 2.0 * std::sqrt(M_PI * 0.25);
    CHECK(r.length >= exact * (1.0 - 1e-6));
    CHECK(r.length <= exact * 1.01);
  }
  // generic target
  {
    const GroupPoint target = pt({0.4, -0.3, 0.2});
    const ControlResult r = optimize_control_path(*g, target, opts);
    REQUIRE(r.converged);
    const double exact = distance(*g, identity(*g), target);
    CHECK(r.length >= exact * (1.0 - 1e-6));
    CHECK(r.length <= exact * 1.01);
  }
}

TEST_CASE("generic-group distance runs on engel targets") {
  auto g = GroupDescriptor::make("engel", {2, 1, 1},
                                 {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}});
  ControlOptions opts;
  opts.segments = 16;
  opts.refinements = 1;
  opts.starts = 4;
  opts.iterations = 120;
  MetricOptions mopts;
  mopts.control = opts;
  // horizontal target: geodesic is the straight segment
  Coords c = Coords::Zero(4);
  c[0] = 0.8;
  const double d = distance(*g, identity(*g), {c}, mopts);
  CHECK(d == doctest::Approx(0.8).epsilon(0.01));
}

TEST_CASE("memoized estimator returns identical values") {
  auto g = GroupDescriptor::make("engel", {2, 1, 1},
                                 {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}});
  MetricOptions mopts;
  mopts.control.segments = 16;
  mopts.control.refinements = 0;
  mopts.control.starts = 3;
  mopts.control.iterations = 100;
  mopts.control.endpoint_tol = 1e-5;
  DistanceEstimator est(g, mopts);
  Coords c = Eigen::Vector4d(0.5, 0.2, 0.0, 0.0);
  const double d1 = est(identity(*g), {c});
  const double d2 = est(identity(*g), {c});
  CHECK(d1 == d2);
  CHECK(d1 > 0.0);
}

TEST_CASE("heisenberg calibration reproduces the pinned ball volume") {
  CalibrateOptions opts;
  opts.measure_samples = 300000;
  opts.box_samples = 2000;
  auto g = GroupDescriptor::heisenberg(1);
  auto recal = calibrate_measure(g, opts);
  const double pinned = 1.0 / g->measure_norm();
  const double fresh = 1.0 / recal->measure_norm();
  CHECK(std::abs(fresh - pinned) / pinned < 1e-2);
}
