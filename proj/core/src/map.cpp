#include "carnotlab/map.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "carnotlab/parallel.hpp"
#include "carnotlab/rng.hpp"

namespace carnot {

// ---------------------------------------------------------------------------
// Zoo
// ---------------------------------------------------------------------------

GroupMap map_identity(GroupPtr g) {
  GroupMap m;
  m.source = g;
  m.target = g;
  m.forward = [](const Coords& x) { return x; };
  m.inverse = [](const Coords& x) { return x; };
  m.ball_image = [](const CcBall& b) { return b; };
  m.homeomorphism = true;
  m.name = "identity";
  return m;
}

GroupMap map_translation(GroupPtr g, GroupPoint left) {
  GroupMap m;
  m.source = g;
  m.target = g;
  const GroupPoint inv = carnot::inverse(*g, left);
  m.forward = [g, left](const Coords& x) { return multiply(*g, left, {x}).c; };
  m.inverse = [g, inv](const Coords& y) { return multiply(*g, inv, {y}).c; };
  m.ball_image = [g, left](const CcBall& b) {
    return CcBall{multiply(*g, left, b.center), b.radius};
  };
  m.homeomorphism = true;
  m.name = "translation";
  for (int i = 0; i < left.c.size(); ++i)
    m.params["g" + std::to_string(i)] = left.c[i];
  return m;
}

GroupMap map_dilation(GroupPtr g, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("lambda", "dilation needs lambda > 0");
  GroupMap m;
  m.source = g;
  m.target = g;
  m.forward = [g, lambda](const Coords& x) { return dilate(*g, lambda, {x}).c; };
  m.inverse = [g, lambda](const Coords& y) { return dilate(*g, 1.0 / lambda, {y}).c; };
  m.ball_image = [g, lambda](const CcBall& b) {
    return CcBall{dilate(*g, lambda, b.center), lambda * b.radius};
  };
  m.homeomorphism = true;
  m.name = "dilation";
  m.params["lambda"] = lambda;
  return m;
}

GroupMap map_shear_h1(GroupPtr g, double a) {
  if (g->heisenberg_k() != 1)
    throw ValidationError("group", "shear map is defined on heisenberg-1");
  GroupMap m;
  m.source = g;
  m.target = g;
  m.forward = [a](const Coords& x) {
    Coords y = x;
    y[1] += a * x[0];
    return y;
  };
  m.inverse = [a](const Coords& y) {
    Coords x = y;
    x[1] -= a * y[0];
    return x;
  };
  m.homeomorphism = true;
  m.name = "shear";
  m.params["a"] = a;
  return m;
}

GroupMap map_squash_h1(GroupPtr g, double a) {
  if (g->heisenberg_k() != 1)
    throw ValidationError("group", "squash fixture is defined on heisenberg-1");
  if (!(a > 0.0)) throw ValidationError("a", "squash radius must be positive");
  GroupMap m;
  m.source = g;
  m.target = GroupDescriptor::abelian(2);
  m.forward = [a](const Coords& x) {
    Eigen::Vector2d w(x[0], x[1]);
    const double s = w.norm();
    Coords y = Coords::Zero(2);
    if (s > a) y = ((s - a) / s) * w;
    return y;
  };
  m.homeomorphism = false;
  m.name = "squash";
  m.params["a"] = a;
  return m;
}

GroupMap map_collapse_h1(GroupPtr g) {
  if (g->heisenberg_k() != 1)
    throw ValidationError("group", "collapse fixture is defined on heisenberg-1");
  GroupMap m;
  m.source = g;
  m.target = g;
  m.forward = [](const Coords& x) {
    Coords y = Coords::Zero(3);
    y[0] = x[0];
    return y;
  };
  m.homeomorphism = false;
  m.name = "collapse";
  return m;
}

GroupMap map_postdilate(const GroupMap& phi, double mu) {
  GroupMap m = phi;
  const GroupPtr tgt = phi.target;
  auto fwd = phi.forward;
  m.forward = [tgt, fwd, mu](const Coords& x) { return dilate(*tgt, mu, {fwd(x)}).c; };
  if (phi.inverse) {
    auto inv = phi.inverse;
    m.inverse = [tgt, inv, mu](const Coords& y) {
      return inv(dilate(*tgt, 1.0 / mu, {y}).c);
    };
  }
  if (phi.ball_image) {
    auto bi = phi.ball_image;
    m.ball_image = [tgt, bi, mu](const CcBall& b) {
      const CcBall inner = bi(b);
      return CcBall{dilate(*tgt, mu, inner.center), mu * inner.radius};
    };
  }
  m.name = "dilation o " + phi.name;
  m.params["mu"] = mu;
  return m;
}

GroupMap map_from_spec(GroupPtr g, const std::string& name,
                       const std::map<std::string, double>& params) {
  auto param = [&](const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  if (name == "identity") return map_identity(g);
  if (name == "dilation") return map_dilation(g, param("lambda", 2.0));
  if (name == "translation") {
    Coords c = Coords::Zero(g->total_dim());
    for (int i = 0; i < g->total_dim(); ++i)
      c[i] = param("g" + std::to_string(i), 0.0);
    return map_translation(g, {c});
  }
  if (name == "shear") return map_shear_h1(g, param("a", 1.0));
  if (name == "squash") return map_squash_h1(g, param("a", 0.5));
  if (name == "collapse") return map_collapse_h1(g);
  throw ValidationError("map", "unknown map '" + name + "'");
}

std::vector<std::string> map_zoo_names() {
  return {"identity", "translation", "dilation", "shear", "squash", "collapse"};
}

// ---------------------------------------------------------------------------
// Horizontal differential
// ---------------------------------------------------------------------------

HorizontalDifferential horizontal_differential(const GroupMap& phi, const Coords& x,
                                               double h, const Domain* domain) {
  const GroupDescriptor& g = *phi.source;
  const GroupDescriptor& gt = *phi.target;
  const int n = g.horizontal_dim();
  const int nt = gt.horizontal_dim();
  HorizontalDifferential out;
  out.op = Eigen::MatrixXd::Zero(nt, n);
  out.h = h;

  const GroupPoint base{x};
  const GroupPoint y0{phi(x)};
  const GroupPoint y0inv = inverse(gt, y0);
  // column i: layer-1 part of log(phi(x)^{-1} phi(x exp(t X_i))) / t
  auto column = [&](int i, double t) -> Eigen::VectorXd {
    const Coords xp = flow(g, i, t, base).c;
    const GroupPoint diff = multiply(gt, y0inv, {phi(xp)});
    return diff.c.head(nt) / t;
  };
  for (int i = 0; i < n; ++i) {
    bool plus_ok = true, minus_ok = true;
    if (domain) {
      plus_ok = domain->contains(flow(g, i, h, base).c);
      minus_ok = domain->contains(flow(g, i, -h, base).c);
    }
    Eigen::VectorXd d_h, d_h2;
    if (plus_ok && minus_ok) {
      d_h = 0.5 * (column(i, h) + column(i, -h));
      d_h2 = 0.5 * (column(i, 0.5 * h) + column(i, -0.5 * h));
      out.op.col(i) = (4.0 * d_h2 - d_h) / 3.0;
      out.fd_error = std::max(out.fd_error, (d_h2 - d_h).norm() / 3.0);
    } else {
      out.one_sided = true;
      const double sgn = plus_ok ? 1.0 : -1.0;
      d_h = column(i, sgn * h);
      d_h2 = column(i, sgn * 0.5 * h);
      out.op.col(i) = 2.0 * d_h2 - d_h;
      out.fd_error = std::max(out.fd_error, (d_h2 - d_h).norm());
    }
  }
  out.op_norm = out.op.jacobiSvd().singularValues()(0);
  return out;
}

// ---------------------------------------------------------------------------
// Pansu extension
// ---------------------------------------------------------------------------

PansuDifferential pansu_extend(const GroupDescriptor& src, const GroupDescriptor& tgt,
                               const Eigen::MatrixXd& layer1_op) {
  if (layer1_op.rows() != tgt.horizontal_dim() ||
      layer1_op.cols() != src.horizontal_dim())
    throw ValidationError("layer1", "block shape must be target-n x source-n");

  PansuDifferential out;
  out.blocks.push_back(layer1_op);
  const int steps = std::min(src.step(), tgt.step());

  // embed a layer block image back into full coordinates
  auto embed = [&](const GroupDescriptor& g, int layer, const Eigen::VectorXd& v) {
    Coords c = Coords::Zero(g.total_dim());
    c.segment(g.layer_offset(layer), g.layer_dims()[layer - 1]) = v;
    return c;
  };

  for (int layer = 2; layer <= src.step(); ++layer) {
    const int dim_s = src.layer_dims()[layer - 1];
    if (layer > steps || layer > tgt.step()) {
      // no room in the target: the block is zero by grading
      out.blocks.push_back(Eigen::MatrixXd::Zero(
          layer <= tgt.step() ? tgt.layer_dims()[layer - 1] : 0, dim_s));
      continue;
    }
    const int dim_t = tgt.layer_dims()[layer - 1];
    const int off_s = src.layer_offset(layer);
    const int off_t = tgt.layer_offset(layer);
    const int n1 = src.horizontal_dim();
    const int dim_prev = src.layer_dims()[layer - 2];
    const int off_prev = src.layer_offset(layer - 1);

    std::vector<Eigen::VectorXd> vs, ws;
    for (int a = 0; a < n1; ++a) {
      Coords ea = Coords::Zero(src.total_dim());
      ea[a] = 1.0;
      const Eigen::VectorXd img_a = embed(tgt, 1, out.blocks[0].col(a));
      for (int b = 0; b < dim_prev; ++b) {
        Coords eb = Coords::Zero(src.total_dim());
        eb[off_prev + b] = 1.0;
        const Coords v_full = src.bracket(ea, eb);
        const Eigen::VectorXd img_b =
            embed(tgt, layer - 1, out.blocks[layer - 2].col(b));
        const Coords w_full = tgt.bracket(img_a, img_b);
        vs.push_back(v_full.segment(off_s, dim_s));
        ws.push_back(w_full.segment(off_t, dim_t));
      }
    }
    Eigen::MatrixXd V(dim_s, static_cast<int>(vs.size()));
    Eigen::MatrixXd W(dim_t, static_cast<int>(ws.size()));
    for (std::size_t c = 0; c < vs.size(); ++c) {
      V.col(static_cast<int>(c)) = vs[c];
      W.col(static_cast<int>(c)) = ws[c];
    }
    // solve B V = W in least squares: B^T from V^T B^T = W^T
    const Eigen::MatrixXd Bt =
        V.transpose().completeOrthogonalDecomposition().solve(W.transpose());
    const Eigen::MatrixXd B = Bt.transpose();
    double res = 0.0;
    const Eigen::MatrixXd R = B * V - W;
    if (R.size() > 0) res = R.cwiseAbs().maxCoeff();
    out.residual = std::max(out.residual, res);
    out.blocks.push_back(B);
  }

  out.square = src.step() == tgt.step();
  if (out.square)
    for (int l = 0; l < src.step(); ++l)
      if (src.layer_dims()[l] != tgt.layer_dims()[l]) out.square = false;
  if (out.square) {
    double det = 1.0;
    for (const auto& B : out.blocks) det *= B.determinant();
    out.det = det;
  } else {
    out.det = 0.0;
  }

  for (std::size_t l = 0; l < out.blocks.size(); ++l) {
    if (out.blocks[l].size() == 0) continue;
    const double norm_l = out.blocks[l].jacobiSvd().singularValues()(0);
    out.op_norm_estimate =
        std::max(out.op_norm_estimate, std::pow(norm_l, 1.0 / (l + 1.0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial jacobian
// ---------------------------------------------------------------------------

JacobianTrend spatial_jacobian(const GroupMap& phi, const Coords& x,
                               const std::vector<double>& radii, long long mc_samples,
                               std::uint64_t seed) {
  if (!phi.has_inverse())
    throw ValidationError("phi", "spatial jacobian needs the inverse homeomorphism");
  const GroupDescriptor& g = *phi.source;
  const GroupDescriptor& gt = *phi.target;
  JacobianTrend out;
  out.radii = radii;
  out.ratios.resize(radii.size());

  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    // bounding box of the image from forward-mapped ball samples, inflated
    const auto probes = ball_sample(g, CcBall{{x}, r}, 256, mix64(seed, ri));
    const int Nt = gt.total_dim();
    Coords lo = Coords::Constant(Nt, std::numeric_limits<double>::infinity());
    Coords hi = -lo;
    for (const auto& p : probes) {
      const Coords y = phi(p.c);
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    }
    const Coords mid = 0.5 * (lo + hi);
    const Coords half = 0.55 * (hi - lo) + Coords::Constant(Nt, 1e-12);
    Region image_region;
    image_region.bounds = Box{mid - half, mid + half};
    image_region.indicator = [&](const Coords& y) {
      return distance(g, {x}, {phi.inverse(y)}) < r;
    };
    const MeasureEstimate m = measure(gt, image_region, mc_samples, mix64(seed, 77 + ri));
    out.ratios[ri] = m.value / ball_measure(g, r);
  }

  // linear fit ratio ~ J + c r; the intercept is the extrapolated limit
  const std::size_t k = radii.size();
  if (k == 1) {
    out.extrapolated = out.ratios[0];
  } else {
    double sr = 0, srr = 0, sy = 0, sry = 0;
    for (std::size_t i = 0; i < k; ++i) {
      sr += radii[i];
      srr += radii[i] * radii[i];
      sy += out.ratios[i];
      sry += radii[i] * out.ratios[i];
    }
    const double denom = k * srr - sr * sr;
    out.extrapolated =
        denom == 0.0 ? sy / k : (sy * srr - sr * sry) / denom;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distortion
// ---------------------------------------------------------------------------

namespace {

// Degeneracy determinant for the finite-distortion zero set: the product of
// layer-block determinants over layers present in both groups. For same-group
// maps this is det D^ itself; for dimension-reducing targets (the squash into
// R^2) it detects pointwise degeneracy where the bijectivity convention would
// flag the whole domain.
double degeneracy_det(const PansuDifferential& pd, const GroupDescriptor& src,
                      const GroupDescriptor& tgt) {
  if (pd.square) return pd.det;
  double det = 1.0;
  const int shared = std::min(src.step(), tgt.step());
  for (int l = 0; l < shared; ++l) {
    if (src.layer_dims()[l] != tgt.layer_dims()[l]) return 0.0;
    det *= pd.blocks[l].determinant();
  }
  return det;
}

DistortionReport distortion_scan(const GroupMap& phi, const Domain& omega, double p,
                                 double q, const DistortionOptions& opts,
                                 bool want_kp) {
  DistortionReport rep;
  rep.p = p;
  rep.q = q;
  rep.sigma = SigmaExponent::from(q, p);
  rep.samples = opts.samples;
  rep.det_threshold = opts.det_threshold;

  const double h = opts.h.value_or(default_step(omega));
  const auto pts = omega.samples(opts.samples, omega.quadrature().seed);
  std::vector<DistortionSample> rows(pts.size());
  std::vector<char> degenerate(pts.size(), 0);
  parallel_for(pts.size(), [&](std::size_t i) {
    DistortionSample s;
    s.x = pts[i];
    const HorizontalDifferential dh = horizontal_differential(phi, pts[i], h, &omega);
    const PansuDifferential pd = pansu_extend(*phi.source, *phi.target, dh.op);
    s.dh_norm = dh.op_norm;
    s.det = pd.det;
    s.thresholded = std::abs(pd.det) < opts.det_threshold;
    s.kp = s.thresholded ? 0.0 : s.dh_norm / std::pow(std::abs(pd.det), 1.0 / p);
    degenerate[i] =
        std::abs(degeneracy_det(pd, *phi.source, *phi.target)) < opts.det_threshold;
    rows[i] = std::move(s);
  });

  FiniteDistortionVerdict& fd = rep.finite_distortion;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    if (s.thresholded) ++rep.thresholded_count;
    if (!degenerate[i]) continue;
    ++fd.zero_set_samples;
    double gnorm = s.dh_norm;
    if (gnorm > opts.grad_tolerance) {
      // Finite differences smear across fold loci; a genuine violation
      // persists when the stencil shrinks, a kink-shell artifact does not.
      const HorizontalDifferential fine =
          horizontal_differential(phi, s.x, h / 16.0, &omega);
      gnorm = fine.op_norm;
      if (gnorm > opts.grad_tolerance && fd.violations.size() < 10)
        fd.violations.push_back(s.x);
    }
    if (gnorm > fd.worst_dh_on_zero_set) fd.worst_dh_on_zero_set = gnorm;
  }
  fd.pass = fd.worst_dh_on_zero_set <= opts.grad_tolerance;

  if (want_kp) {
    if (rep.sigma.is_inf) {
      for (const auto& s : rows) rep.kp_norm = std::max(rep.kp_norm, s.kp);
    } else {
      const double sig = rep.sigma.value;
      double mean = 0.0;
      for (const auto& s : rows) mean += std::pow(s.kp, sig);
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const auto& s : rows) {
        const double d = std::pow(s.kp, sig) - mean;
        var += d * d;
      }
      var /= static_cast<double>(rows.size());
      const double integral = omega.measure() * mean;
      const double se =
          omega.measure() * std::sqrt(var / static_cast<double>(rows.size()));
      rep.kp_norm = std::pow(integral, 1.0 / sig);
      if (integral > 0.0) rep.kp_norm_error = rep.kp_norm / sig * (se / integral);
    }
  }
  if (opts.keep_table) rep.table = std::move(rows);
  return rep;
}

}  // namespace

DistortionReport distortion_Kp(const GroupMap& phi, const Domain& omega, double p,
                               double q, const DistortionOptions& opts) {
  if (!(p >= 1.0) || !(q >= 1.0) || q > p)
    throw ValidationError("exponents", "need 1 <= q <= p < inf");
  return distortion_scan(phi, omega, p, q, opts, true);
}

FiniteDistortionVerdict finite_distortion_check(const GroupMap& phi, const Domain& omega,
                                                const DistortionOptions& opts) {
  return distortion_scan(phi, omega, 2.0, 2.0, opts, false).finite_distortion;
}

std::string DistortionReport::to_json() const {
  nlohmann::ordered_json j;
  j["p"] = p;
  j["q"] = q;
  j["sigma"] = sigma.is_inf ? nlohmann::json("inf") : nlohmann::json(sigma.value);
  j["samples"] = samples;
  j["Kp_norm"] = kp_norm;
  j["Kp_norm_error"] = kp_norm_error;
  j["thresholded_count"] = thresholded_count;
  j["det_threshold"] = det_threshold;
  nlohmann::ordered_json f;
  f["verdict"] = finite_distortion.pass ? "PASS" : "FAIL";
  f["worst"] = finite_distortion.worst_dh_on_zero_set;
  f["zero_set_samples"] = finite_distortion.zero_set_samples;
  nlohmann::json viol = nlohmann::json::array();
  for (const auto& v : finite_distortion.violations) {
    nlohmann::json row = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
    viol.push_back(row);
  }
  f["violations"] = viol;
  j["finite_distortion"] = f;
  return j.dump(2);
}

std::string DistortionReport::to_csv() const {
  std::ostringstream os;
  if (table.empty()) return "";
  const int N = static_cast<int>(table.front().x.size());
  for (int i = 0; i < N; ++i) os << "x" << i << ",";
  os << "dh_norm,det,kp,thresholded\n";
  os.precision(17);
  for (const auto& s : table) {
    for (int i = 0; i < N; ++i) os << s.x[i] << ",";
    os << s.dh_norm << "," << s.det << "," << s.kp << "," << (s.thresholded ? 1 : 0)
       << "\n";
  }
  return os.str();
}

}  // namespace carnot
