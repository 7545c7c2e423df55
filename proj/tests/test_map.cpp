#include <doctest.h>

#include <cmath>

#include "carnotlab/map.hpp"
#include "carnotlab/rng.hpp"

using namespace carnot;

namespace {

Coords pt3(double x, double y, double z) {
  Coords c(3);
  c << x, y, z;
  return c;
}

Domain unit_ball(const GroupPtr& g, long long samples = 20000, std::uint64_t seed = 5) {
  return Domain::ball(g, CcBall{identity(*g), 1.0}, QuadratureSpec{samples, seed});
}

}  // namespace

TEST_CASE("horizontal differentials of the zoo") {
  auto g = GroupDescriptor::heisenberg(1);
  SampleRng rng(71);
  const double h = 1e-4;
  for (int t = 0; t < 20; ++t) {
    const Coords x = pt3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));

    const HorizontalDifferential did = horizontal_differential(map_identity(g), x, h);
    CHECK((did.op - Eigen::Matrix2d::Identity()).norm() < 1e-10);
    CHECK(did.op_norm == doctest::Approx(1.0).epsilon(1e-10));

    const GroupPoint a{pt3(0.3, -0.2, 0.5)};
    const HorizontalDifferential dtr =
        horizontal_differential(map_translation(g, a), x, h);
    CHECK((dtr.op - Eigen::Matrix2d::Identity()).norm() < 1e-10);

    const double lam = 2.0;
    const HorizontalDifferential ddl =
        horizontal_differential(map_dilation(g, lam), x, h);
    CHECK((ddl.op - lam * Eigen::Matrix2d::Identity()).norm() < 1e-9);
    CHECK(ddl.op_norm == doctest::Approx(lam).epsilon(1e-9));
    CHECK_FALSE(ddl.one_sided);
  }
}

TEST_CASE("pansu extension on H1") {
  auto g = GroupDescriptor::heisenberg(1);

  Eigen::Matrix2d A2 = 2.0 * Eigen::Matrix2d::Identity();
  const PansuDifferential p2 = pansu_extend(*g, *g, A2);
  REQUIRE(p2.blocks.size() == 2);
  CHECK(p2.blocks[1](0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(p2.det == doctest::Approx(16.0).epsilon(1e-10));
  CHECK(p2.residual < 1e-12);
  CHECK(p2.op_norm_estimate == doctest::Approx(2.0).epsilon(1e-10));

  const PansuDifferential pid = pansu_extend(*g, *g, Eigen::Matrix2d::Identity());
  CHECK(pid.det == doctest::Approx(1.0));
  CHECK(pid.blocks[1](0, 0) == doctest::Approx(1.0));

  const PansuDifferential p0 = pansu_extend(*g, *g, Eigen::Matrix2d::Zero());
  CHECK(p0.det == 0.0);
  CHECK(p0.blocks[1](0, 0) == doctest::Approx(0.0));

  // layer mismatch: H1 -> R^2 has no second layer, det is 0 by convention
  auto e2 = GroupDescriptor::abelian(2);
  const PansuDifferential pm = pansu_extend(*g, *e2, Eigen::Matrix2d::Identity());
  CHECK_FALSE(pm.square);
  CHECK(pm.det == 0.0);
}

TEST_CASE("pansu residual is tiny on automorphism differentials") {
  auto g = GroupDescriptor::heisenberg(1);
  SampleRng rng(73);
  const double h = 1e-4;
  const std::vector<GroupMap> zoo = {map_identity(g), map_dilation(g, 1.7),
                                     map_translation(g, {pt3(0.4, 0.1, -0.2)}),
                                     map_shear_h1(g, 0.9)};
  for (const auto& m : zoo) {
    for (int t = 0; t < 10; ++t) {
      const Coords x = pt3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      const HorizontalDifferential dh = horizontal_differential(m, x, h);
      const PansuDifferential pd = pansu_extend(*g, *g, dh.op);
      CHECK(pd.residual < 1e-8);
      // sandwich |D_h| <= |D^| estimate
      CHECK(dh.op_norm <= pd.op_norm_estimate * (1.0 + 1e-9) + 1e-12);
    }
  }
  // shear determinant is 1 (graded automorphism with unit bracket block)
  const HorizontalDifferential ds =
      horizontal_differential(map_shear_h1(g, 0.9), pt3(0.2, 0.1, 0.0), h);
  const PansuDifferential ps = pansu_extend(*g, *g, ds.op);
  CHECK(ps.det == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("spatial jacobian trends") {
  auto g = GroupDescriptor::heisenberg(1);
  const std::vector<double> radii{0.4, 0.3, 0.2, 0.1};
  const Coords x = pt3(0.2, -0.1, 0.05);

  const JacobianTrend jid = spatial_jacobian(map_identity(g), x, radii, 20000, 31);
  CHECK(std::abs(jid.extrapolated - 1.0) < 0.05);

  const JacobianTrend jtr = spatial_jacobian(
      map_translation(g, {pt3(0.3, 0.2, 0.1)}), x, radii, 20000, 32);
  CHECK(std::abs(jtr.extrapolated - 1.0) < 0.05);

  const JacobianTrend jd2 = spatial_jacobian(map_dilation(g, 2.0), x, radii, 20000, 33);
  CHECK(std::abs(jd2.extrapolated - 16.0) < 0.8);

  GroupMap no_inv = map_identity(g);
  no_inv.inverse = nullptr;
  CHECK_THROWS_AS(spatial_jacobian(no_inv, x, radii, 100, 1), ValidationError);
}

TEST_CASE("distortion coefficient of the zoo") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain omega = unit_ball(g, 4000, 7);
  DistortionOptions opts;
  opts.samples = 2000;

  // dilation: K_p = lambda^(1 - nu/p) everywhere
  {
    const double p = 8.0, q = 4.0;
    const DistortionReport rep = distortion_Kp(map_dilation(g, 2.0), omega, p, q, opts);
    const double expect = std::pow(2.0, 1.0 - 4.0 / p);
    CHECK(rep.kp_norm ==
          doctest::Approx(expect * std::pow(omega.measure(), 1.0 / 8.0)).epsilon(1e-6));
    CHECK(rep.thresholded_count == 0);
    CHECK(rep.finite_distortion.pass);
  }
  // isometry: K_p identically 1; sigma = inf branch via q = p
  {
    const DistortionReport rep = distortion_Kp(
        map_translation(g, {pt3(0.2, 0.3, -0.1)}), omega, 8.0, 8.0, opts);
    CHECK(rep.sigma.is_inf);
    CHECK(rep.kp_norm == doctest::Approx(1.0).epsilon(1e-3));
  }
  // collapse: det = 0 branch gives K_p = 0
  {
    DistortionOptions keep = opts;
    keep.keep_table = true;
    const DistortionReport rep = distortion_Kp(map_collapse_h1(g), omega, 8.0, 4.0, keep);
    CHECK(rep.kp_norm == 0.0);
    CHECK(rep.thresholded_count == rep.samples);
    for (const auto& s : rep.table) CHECK(s.kp == 0.0);
    CHECK_FALSE(rep.finite_distortion.pass);
  }
  CHECK_THROWS_AS(distortion_Kp(map_identity(g), omega, 4.0, 8.0, opts),
                  ValidationError);
}

TEST_CASE("distortion homogeneity under post-dilation") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain omega = unit_ball(g, 2000, 9);
  DistortionOptions opts;
  opts.samples = 500;
  const double p = 8.0, q = 4.0;
  const GroupMap shear = map_shear_h1(g, 0.6);
  const GroupMap scaled = map_postdilate(shear, 2.0);
  const DistortionReport r1 = distortion_Kp(shear, omega, p, q, opts);
  const DistortionReport r2 = distortion_Kp(scaled, omega, p, q, opts);
  const double factor = std::pow(2.0, 1.0 - 4.0 / p);
  CHECK(r2.kp_norm == doctest::Approx(factor * r1.kp_norm).epsilon(1e-6));
}

TEST_CASE("finite distortion fixtures") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain omega = unit_ball(g, 4000, 11);
  DistortionOptions opts;
  opts.samples = 3000;

  CHECK(finite_distortion_check(map_dilation(g, 2.0), omega, opts).pass);
  CHECK(finite_distortion_check(map_translation(g, {pt3(0.1, 0.2, 0.0)}), omega, opts)
            .pass);

  // squash: flat piece has D_h = 0 and det = 0, so the check passes
  const FiniteDistortionVerdict squash =
      finite_distortion_check(map_squash_h1(g, 0.5), omega, opts);
  CHECK(squash.pass);
  CHECK(squash.zero_set_samples > 0);

  // collapse: det = 0 everywhere but |D_h| = 1, must fail with witnesses
  const FiniteDistortionVerdict collapse =
      finite_distortion_check(map_collapse_h1(g), omega, opts);
  CHECK_FALSE(collapse.pass);
  CHECK(collapse.worst_dh_on_zero_set == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(!collapse.violations.empty());
}

TEST_CASE("report serialization") {
  auto g = GroupDescriptor::heisenberg(1);
  const Domain omega = unit_ball(g, 1000, 13);
  DistortionOptions opts;
  opts.samples = 200;
  opts.keep_table = true;
  const DistortionReport rep = distortion_Kp(map_dilation(g, 2.0), omega, 8.0, 4.0, opts);
  const std::string j = rep.to_json();
  CHECK(j.find("\"Kp_norm\"") != std::string::npos);
  CHECK(j.find("\"finite_distortion\"") != std::string::npos);
  const std::string csv = rep.to_csv();
  CHECK(csv.find("dh_norm,det,kp,thresholded") != std::string::npos);
}

TEST_CASE("map zoo from spec names") {
  auto g = GroupDescriptor::heisenberg(1);
  for (const auto& name : map_zoo_names()) {
    const GroupMap m = map_from_spec(g, name, {{"lambda", 2.0}, {"a", 0.5}});
    CHECK(m.name == name);
  }
  CHECK_THROWS_AS(map_from_spec(g, "nope", {}), ValidationError);
  // round trip through a translation parameterization
  const GroupMap tr = map_from_spec(g, "translation", {{"g0", 0.5}, {"g2", -0.25}});
  CHECK(tr(pt3(0, 0, 0))[0] == doctest::Approx(0.5));
  CHECK(tr(pt3(0, 0, 0))[2] == doctest::Approx(-0.25));
}
