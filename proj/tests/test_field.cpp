#include <doctest.h>

#include <cmath>

#include "carnotlab/field.hpp"
#include "carnotlab/rng.hpp"

using namespace carnot;

namespace {

// Symbolic oracle for H^1: X_1 = d/dx - (y/2) d/dz, X_2 = d/dy + (x/2) d/dz.
Eigen::Vector2d h1_oracle_grad(const std::function<double(double, double, double)>& fx,
                               const std::function<double(double, double, double)>& fy,
                               const std::function<double(double, double, double)>& fz,
                               const Coords& p) {
  const double x = p[0], y = p[1], z = p[2];
  return {fx(x, y, z) - 0.5 * y * fz(x, y, z), fy(x, y, z) + 0.5 * x * fz(x, y, z)};
}

Coords pt3(double x, double y, double z) {
  Coords c(3);
  c << x, y, z;
  return c;
}

Domain unit_ball_domain(const GroupPtr& g, long long samples = 20000,
                        std::uint64_t seed = 5) {
  return Domain::ball(g, CcBall{identity(*g), 1.0}, QuadratureSpec{samples, seed});
}

}  // namespace

TEST_CASE("horizontal derivatives of coordinates match the field formulas") {
  auto g = GroupDescriptor::heisenberg(1);
  const ScalarField u1 = coordinate_field(*g, 0);
  const ScalarField uz = coordinate_field(*g, 2);
  SampleRng rng(31);
  for (int t = 0; t < 50; ++t) {
    Coords p = pt3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double h = 1e-4;
    CHECK(horizontal_derivative(u1, *g, 0, p, h).value == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(horizontal_derivative(u1, *g, 1, p, h).value == doctest::Approx(0.0).epsilon(1e-10));
    // X_1 z = -y/2, X_2 z = x/2
    CHECK(horizontal_derivative(uz, *g, 0, p, h).value ==
          doctest::Approx(-0.5 * p[1]).epsilon(1e-8));
    CHECK(horizontal_derivative(uz, *g, 1, p, h).value ==
          doctest::Approx(0.5 * p[0]).epsilon(1e-8));
  }
  const ScalarField c = constant_field(3.5);
  CHECK(horizontal_derivative(c, *g, 0, pt3(0.2, -0.1, 0.4), 1e-4).value == 0.0);
}

TEST_CASE("horizontal gradient magnitudes") {
  auto g = GroupDescriptor::heisenberg(1);
  const ScalarField u1 = coordinate_field(*g, 0);
  const GradSample gs = horizontal_gradient(u1, *g, pt3(0.4, 0.2, -0.3), 1e-4);
  CHECK(gs.grad[0] == doctest::Approx(1.0));
  CHECK(gs.grad[1] == doctest::Approx(0.0));

  // |grad_h z| at a horizontal-radius-r point equals r/2
  const ScalarField uz = coordinate_field(*g, 2);
  const Coords p = pt3(0.6, 0.8, 0.1);  // r = 1
  const GradSample gz = horizontal_gradient(uz, *g, p, 1e-4);
  CHECK(gz.grad.norm() == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("richardson error drops at second order for smooth fields") {
  auto g = GroupDescriptor::heisenberg(1);
  const ScalarField s = compose_smooth(
      [](double t) { return std::sin(t); }, [](double t) { return std::cos(t); },
      coordinate_field(*g, 0), "sin");
  const Coords p = pt3(0.3, -0.2, 0.1);
  const double exact = std::cos(0.3);
  const DerivResult d1 = horizontal_derivative(s, *g, 0, p, 2e-2);
  const DerivResult d2 = horizontal_derivative(s, *g, 0, p, 1e-2);
  const double e1 = std::abs(d1.at_h - exact);
  const double e2 = std::abs(d2.at_h - exact);
  CHECK(e1 / e2 > 3.5);
  CHECK(e1 / e2 < 4.5);
  // extrapolated value is far better than either sample
  CHECK(std::abs(d1.value - exact) < 0.05 * e1);
}

TEST_CASE("one sided fallback is flagged at the boundary") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain dom = unit_ball_domain(g, 1000, 3);
  const ScalarField u1 = coordinate_field(*g, 0);
  const Coords edge = pt3(0.99995, 0.0, 0.0);
  const DerivResult r = horizontal_derivative(u1, *g, 0, edge, 1e-3, &dom);
  CHECK(r.one_sided);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("seminorms of built-in fields") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain dom = unit_ball_domain(g);
  const ScalarField u1 = coordinate_field(*g, 0);
  for (double q : {1.0, 2.0, 4.0}) {
    const Seminorm s = seminorm_Lq(u1, dom, q);
    CHECK(s.value == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Seminorm si = seminorm_Lq(u1, dom, std::numeric_limits<double>::infinity());
  CHECK(si.value == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(seminorm_Lq(constant_field(2.0), dom, 2.0).value == 0.0);

  // homogeneity of the seminorm under scaling of the field, exact
  const ScalarField u3 = {FieldExpr::affine(3.0, u1.expr, 0.0), "3u"};
  const Seminorm s1 = seminorm_Lq(u1, dom, 2.0);
  const Seminorm s3 = seminorm_Lq(u3, dom, 2.0);
  CHECK(s3.value == doctest::Approx(3.0 * s1.value).epsilon(1e-13));
}

TEST_CASE("chain rule toolbox identities hold exactly on trees") {
  auto g = GroupDescriptor::heisenberg(1);
  // smooth test field u = x + 0.7 y - 0.4 z + 0.2 (leaf with oracle gradient)
  auto val = [](const Coords& p) {
    return p[0] + 0.7 * p[1] - 0.4 * p[2] + 0.2;
  };
  const ScalarField u = {FieldExpr::leaf(val, "lin"), "lin"};
  auto oracle = [&](const Coords& p) {
    return h1_oracle_grad([](double, double, double) { return 1.0; },
                          [](double, double, double) { return 0.7; },
                          [](double, double, double) { return -0.4; }, p);
  };

  const ScalarField up = pos_part(u);
  const ScalarField um = neg_part(u);
  const ScalarField ua = abs_val(u);
  const double M = 0.5;
  const ScalarField uM = cutoff(u, M);

  DiffContext ctx{g.get(), 1e-4, nullptr};
  SampleRng rng(37);
  for (int t = 0; t < 300; ++t) {
    const Coords p = pt3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double uv = u.expr->value(p);
    const Eigen::Vector2d base = oracle(p);
    const Eigen::VectorXd gp = up.expr->gradient(p, ctx).grad;
    const Eigen::VectorXd gm = um.expr->gradient(p, ctx).grad;
    const Eigen::VectorXd ga = ua.expr->gradient(p, ctx).grad;
    const Eigen::VectorXd gM = uM.expr->gradient(p, ctx).grad;

    const Eigen::Vector2d expect_p = uv > 0 ? base : Eigen::Vector2d::Zero().eval();
    const Eigen::Vector2d expect_m = uv < 0 ? (-base).eval() : Eigen::Vector2d::Zero().eval();
    const Eigen::Vector2d expect_a =
        uv > 0 ? base : (uv < 0 ? (-base).eval() : Eigen::Vector2d::Zero().eval());
    const Eigen::Vector2d expect_M =
        std::abs(uv) < M ? base : Eigen::Vector2d::Zero().eval();

    CHECK((gp - expect_p).norm() < 1e-9);
    CHECK((gm - expect_m).norm() < 1e-9);
    CHECK((ga - expect_a).norm() < 1e-9);
    CHECK((gM - expect_M).norm() < 1e-9);
    // |grad u| = |grad |u|| everywhere off the zero set
    if (uv != 0.0) CHECK(ga.norm() == doctest::Approx(base.norm()).epsilon(1e-9));
  }

  // cutoff of a large constant: value example
  CHECK(cutoff(constant_field(5.0), 2.0).expr->value(pt3(0, 0, 0)) == 2.0);
  // abs(-u) = abs(u)
  const ScalarField nu = {FieldExpr::affine(-1.0, u.expr, 0.0), "-u"};
  const Coords p0 = pt3(0.3, 0.1, -0.2);
  CHECK(abs_val(nu).expr->value(p0) == abs_val(u).expr->value(p0));
}

TEST_CASE("tree gradients agree with finite differences away from kinks") {
  auto g = GroupDescriptor::heisenberg(1);
  auto val = [](const Coords& p) {
    return std::sin(p[0]) + 0.5 * p[1] * p[1] - 0.3 * p[2];
  };
  const ScalarField u = {FieldExpr::leaf(val, "smooth"), "smooth"};
  const ScalarField up = pos_part(u);
  DiffContext ctx{g.get(), 2e-4, nullptr};
  SampleRng rng(41);
  int checked = 0;
  for (int t = 0; t < 400 && checked < 100; ++t) {
    const Coords p = pt3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (std::abs(u.expr->value(p)) < 1e-2) continue;  // kink margin
    ++checked;
    const Eigen::VectorXd tree = up.expr->gradient(p, ctx).grad;
    Eigen::Vector2d fd;
    for (int j = 0; j < 2; ++j) fd[j] = horizontal_derivative(up, *g, j, p, 2e-4).value;
    CHECK((tree - fd).norm() < 1e-4 * (1.0 + fd.norm()));
  }
  CHECK(checked == 100);
}

TEST_CASE("compose_smooth chain rule") {
  auto g = GroupDescriptor::heisenberg(1);
  const ScalarField u = coordinate_field(*g, 0);
  // F = id
  const ScalarField fid = compose_smooth([](double t) { return t; },
                                         [](double) { return 1.0; }, u, "id");
  const Coords p = pt3(0.4, -0.3, 0.2);
  CHECK(fid.expr->value(p) == u.expr->value(p));

  // F(t) = t^2: gradient 2 u grad u against finite differences
  const ScalarField sq = compose_smooth([](double t) { return t * t; },
                                        [](double t) { return 2.0 * t; }, u, "sq");
  DiffContext ctx{g.get(), 1e-4, nullptr};
  const Eigen::VectorXd tree = sq.expr->gradient(p, ctx).grad;
  Eigen::Vector2d fd;
  for (int j = 0; j < 2; ++j) fd[j] = horizontal_derivative(sq, *g, j, p, 1e-4).value;
  CHECK((tree - fd).norm() < 1e-6);
  CHECK(tree[0] == doctest::Approx(2.0 * 0.4).epsilon(1e-10));

  // F = const has zero gradient
  const ScalarField fc = compose_smooth([](double) { return 7.0; },
                                        [](double) { return 0.0; }, u, "const");
  CHECK(fc.expr->gradient(p, ctx).grad.norm() == 0.0);
}

TEST_CASE("cutoff seminorms increase monotonically to the full seminorm") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain dom = unit_ball_domain(g, 20000, 9);
  auto val = [](const Coords& p) {
    return 3.0 * p[0] + 2.0 * std::sin(3.0 * p[1]) + p[2];
  };
  const ScalarField u = {FieldExpr::leaf(val, "wavy"), "wavy"};
  const double q = 2.0;
  double prev = 0.0;
  for (double M : {1.0, 2.0, 4.0, 8.0}) {
    const double s = seminorm_Lq(cutoff(u, M), dom, q).value;
    CHECK(s >= prev - 1e-12);
    prev = s;
  }
  const double full = seminorm_Lq(u, dom, q).value;
  CHECK(prev <= full * (1.0 + 1e-12));
  CHECK(prev == doctest::Approx(full).epsilon(1e-6));  // M = 8 dominates sup|u|
}

TEST_CASE("zero set of composites carries zero gradient") {
  auto g = GroupDescriptor::heisenberg(1);
  auto val = [](const Coords& p) { return p[0] - 0.25; };
  const ScalarField u = {FieldExpr::leaf(val, "shift"), "shift"};
  const ScalarField w = pos_part(u);
  DiffContext ctx{g.get(), 1e-4, nullptr};
  SampleRng rng(43);
  for (int t = 0; t < 50; ++t) {
    // points on and left of the zero set
    const Coords p = pt3(0.25 - std::abs(rng.uniform(0, 0.5)), rng.uniform(-1, 1),
                         rng.uniform(-1, 1));
    CHECK(w.expr->gradient(p, ctx).grad.norm() == 0.0);
  }
}

TEST_CASE("line restrictions") {
  auto g = GroupDescriptor::heisenberg(1);
  const Coords base = pt3(0.1, -0.2, 0.3);
  // u = x_0 restricted along X_0 is base_0 + t
  const ScalarField u0 = coordinate_field(*g, 0);
  const auto curve = line_restriction(u0, *g, 0, base, -0.5, 0.5, 11);
  REQUIRE(curve.size() == 11);
  for (const auto& s : curve)
    CHECK(s.value == doctest::Approx(base[0] + s.t).epsilon(1e-12));

  const auto cc = line_restriction(constant_field(2.0), *g, 1, base, 0, 1, 5);
  for (const auto& s : cc) CHECK(s.value == 2.0);

  // identity map restriction equals the flow curve
  auto id = [](const Coords& x) { return x; };
  const auto mc = line_restriction_map(id, *g, 1, base, -0.3, 0.3, 7);
  for (const auto& s : mc) {
    const Coords expect = flow(*g, 1, s.t, {base}).c;
    CHECK((s.value - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("metric derivatives of basic maps") {
  auto g = GroupDescriptor::heisenberg(1);
  auto dist = [&](const Coords& a, const Coords& b) {
    return distance(*g, {a}, {b});
  };
  const Coords p = pt3(0.2, 0.4, -0.1);
  auto id = [](const Coords& x) { return x; };
  auto cmap = [](const Coords& x) { return (x * 0.0).eval(); };
  for (int j = 0; j < 2; ++j) {
    CHECK(metric_derivative(id, dist, *g, j, p, 1e-4).value ==
          doctest::Approx(1.0).epsilon(1e-8));
    CHECK(metric_derivative(cmap, dist, *g, j, p, 1e-4).value == 0.0);
  }
  const double lam = 2.0;
  auto dil = [&](const Coords& x) { return dilate(*g, lam, {x}).c; };
  for (int j = 0; j < 2; ++j) {
    CHECK(metric_derivative(dil, dist, *g, j, p, 1e-4).value ==
          doctest::Approx(lam).epsilon(1e-6));
  }
}

TEST_CASE("symmetrize field closed form") {
  auto g = GroupDescriptor::heisenberg(1);
  auto val = [](const Coords& p) { return p[0]; };
  const ScalarField u = {FieldExpr::leaf(val, "x"), "x"};
  const ScalarField s = symmetrize_field(u, 1.0);
  CHECK(s.expr->value(pt3(0.75, 0, 0)) == doctest::Approx(0.25));
  CHECK(s.expr->value(pt3(0.3, 0, 0)) == doctest::Approx(0.3));
  CHECK(s.expr->value(pt3(-0.75, 0, 0)) == doctest::Approx(-0.25));
  // gradient magnitude preserved
  DiffContext ctx{g.get(), 1e-4, nullptr};
  SampleRng rng(47);
  for (int t = 0; t < 100; ++t) {
    const Coords p = pt3(rng.uniform(-0.99, 0.99), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double gu = u.expr->gradient(p, ctx).grad.norm();
    const double gs = s.expr->gradient(p, ctx).grad.norm();
    CHECK(gs == doctest::Approx(gu).epsilon(1e-12));
  }
}
