#include "smoothgeo/geometry.hpp"

#include "smoothgeo/attribution.hpp"
#include "smoothgeo/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace smoothgeo::geometry {

using nlohmann::json;

VectorXd jacobi_eigenvalues(const MatrixXd& sym, int max_sweeps) {
  const int n = static_cast<int>(sym.rows());
  if (sym.cols() != n) throw std::runtime_error("jacobi: matrix not square");
  MatrixXd a = 0.5 * (sym + sym.transpose());
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double tol = 1e-14 * scale;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) < tol) {
      VectorXd ev = a.diagonal();
      std::sort(ev.data(), ev.data() + n, std::greater<double>());
      return ev;
    }
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < tol * 1e-2) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  throw std::runtime_error("jacobi: no convergence after " +
                           std::to_string(max_sweeps) + " sweeps");
}

HessianFactorization closed_form_hessian(const Network& net,
                                         const VectorXd& x) {
  HessianFactorization fac;
  fac.W = nn::input_jacobian(net, x);
  {
    ad::Graph g;
    ad::Var logits = nn::forward_logits(net, g, x);
    fac.p = ad::softmax(logits).vector();
  }
  const int c = net.class_count();
  fac.A = MatrixXd(fac.p.asDiagonal()) - fac.p * fac.p.transpose();
  // A is singular (A 1 = 0): symmetric square root with clamped spectrum
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(fac.A);
  VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
  fac.sqrtA = es.eigenvectors() * clamped.cwiseSqrt().asDiagonal() *
              es.eigenvectors().transpose();
  fac.B = fac.W * fac.sqrtA;
  fac.eigvals = hessian_eigenvalues(fac);

  // top eigenvector of B B^T, lifted from the c x c system
  Eigen::SelfAdjointEigenSolver<MatrixXd> small(fac.B.transpose() * fac.B);
  VectorXd v = small.eigenvectors().col(c - 1);  // largest eigenvalue last
  VectorXd u = fac.B * v;
  const double norm = u.norm();
  fac.top_eigvec = norm > 1e-14 ? VectorXd(u / norm)
                                : VectorXd(VectorXd::Unit(fac.W.rows(), 0));
  return fac;
}

VectorXd hessian_eigenvalues(const HessianFactorization& fac) {
  return jacobi_eigenvalues(fac.B.transpose() * fac.B);
}

GradFn qoi_grad_field(const Network& net, const QuantityOfInterest& qoi,
                      const VectorXd& anchor) {
  const QuantityOfInterest fixed =
      attribution::resolve_class(net, anchor, qoi);
  return [net, fixed](const VectorXd& z) {
    return attribution::qoi_gradient(net, z, fixed);
  };
}

VectorXd sample_in_ball(const BallSpec& ball, std::uint64_t seed, int index) {
  if (index == 0) return ball.center;
  rng::Rng r(rng::derive_seed(seed, static_cast<std::uint64_t>(index)));
  const int d = static_cast<int>(ball.center.size());
  if (ball.norm_order == BallSpec::kInf) {
    return ball.center + r.uniform_vector(d, -ball.radius, ball.radius);
  }
  VectorXd dir = r.normal_vector(d);
  const double n = dir.norm();
  if (n < 1e-300) return ball.center;
  const double mag =
      ball.radius * std::pow(r.uniform(0.0, 1.0), 1.0 / d);
  return ball.center + (mag / n) * dir;
}

namespace {
double dual_norm(const VectorXd& g, int ball_order) {
  return ball_order == BallSpec::kInf ? g.lpNorm<1>() : g.norm();
}
}  // namespace

LipschitzEstimate estimate_local_lipschitz(const GradFn& grad,
                                           const BallSpec& ball, int n_samples,
                                           std::uint64_t seed) {
  if (n_samples < 1)
    throw std::runtime_error("estimate_local_lipschitz: n_samples >= 1");
  LipschitzEstimate est;
  est.samples = n_samples;
  for (int i = 0; i < n_samples; ++i) {
    const VectorXd z = sample_in_ball(ball, seed, i);
    const double n = dual_norm(grad(z), ball.norm_order);
    if (n >= est.value) {
      est.value = n;
      est.witness = z;
    }
  }
  return est;
}

RobustnessEstimate estimate_attribution_robustness(const AttrFn& attr,
                                                   const BallSpec& ball,
                                                   int n_samples,
                                                   std::uint64_t seed) {
  if (n_samples < 1)
    throw std::runtime_error("estimate_attribution_robustness: n_samples >= 1");
  RobustnessEstimate est;
  est.norm_order = ball.norm_order;
  est.samples = n_samples;
  est.witness_a = ball.center;
  est.witness_b = ball.center;
  if (ball.radius == 0.0) return est;  // no admissible x' != x
  const VectorXd g0 = attr(ball.center);
  for (int i = 1; i <= n_samples; ++i) {
    const VectorXd z = sample_in_ball(ball, seed, i);
    const double dist = (z - ball.center).norm();
    if (dist < 1e-12) continue;
    const double ratio = (attr(z) - g0).norm() / dist;
    if (ratio > est.lambda_hat) {
      est.lambda_hat = ratio;
      est.witness_b = z;
    }
  }
  return est;
}

double sg_global_bound(double F, double sigma) {
  if (sigma <= 0) throw std::runtime_error("sg_global_bound: sigma must be > 0");
  if (F < 0) throw std::runtime_error("sg_global_bound: F must be >= 0");
  return 2.0 * F / (sigma * sigma);
}

double sg_noise_threshold(double delta2, double F, double L) {
  if (L <= 0) throw std::runtime_error("sg_noise_threshold: L must be > 0");
  return std::sqrt(delta2 * F / L);
}

double theorem3_bound(double delta2, const VectorXd& eigvals) {
  if (eigvals.size() == 0) return 0.0;
  return delta2 * eigvals.cwiseAbs().maxCoeff();
}

CheckReport verify_prop1(const Network& net, const VectorXd& x, double sigma,
                         int n_samples, std::uint64_t seed) {
  CheckReport rep;
  rep.check = "prop1_sg_convolution";
  const QuantityOfInterest qoi = attribution::resolve_class(
      net, x, QuantityOfInterest{QuantityOfInterest::Stage::PreSoftmax, -1});
  const int d = static_cast<int>(x.size());
  json stats;

  if (sigma == 0.0) {
    // degenerate noise: Smooth Gradient is the Saliency Map; compare against
    // plain finite differences of f
    const VectorXd analytic = attribution::qoi_gradient(net, x, qoi);
    const VectorXd fd = ad::finite_diff_gradient(
        [&](const VectorXd& z) {
          ad::Graph g;
          return nn::quantity(net, g, g.leaf_vector(z), qoi).scalar();
        },
        x, 1e-4);
    double maxz = 0.0;
    for (int i = 0; i < d; ++i) {
      const double z =
          std::abs(analytic[i] - fd[i]) / (1e-6 + 1e-4 * std::abs(analytic[i]));
      maxz = std::max(maxz, z);
    }
    rep.pass = maxz < 4.0;
    stats["mode"] = "sigma_zero_sm_comparison";
    stats["max_z"] = maxz;
    rep.details_json = stats.dump();
    return rep;
  }

  // Two independent Monte-Carlo estimates of the same quantity: the sampled
  // gradient mean (Smooth Gradient) and a central-difference derivative of the
  // smoothed score. The noise draws are shared across the stencil (common
  // random numbers), which removes the smoothing noise from each difference
  // quotient; across the two estimators the draws are independent, so the
  // discrepancy is judged against the combined standard error.
  auto f_at = [&](const VectorXd& z) {
    ad::Graph g;
    return nn::quantity(net, g, g.leaf_vector(z), qoi).scalar();
  };
  auto welford = [](double v, double& mean, double& m2, int k) {
    const double delta = v - mean;
    mean += delta / (k + 1);
    m2 += delta * (v - mean);
  };

  rng::Rng ra(rng::derive_seed(seed, 0x9701));
  VectorXd g_mean = VectorXd::Zero(d), g_m2 = VectorXd::Zero(d);
  for (int k = 0; k < n_samples; ++k) {
    const VectorXd gk = attribution::qoi_gradient(
        net, x + sigma * ra.normal_vector(d), qoi);
    for (int i = 0; i < d; ++i) welford(gk[i], g_mean[i], g_m2[i], k);
  }

  rng::Rng rb(rng::derive_seed(seed, 0x9702));
  const double h = 1e-3;
  VectorXd fd_mean = VectorXd::Zero(d), fd_m2 = VectorXd::Zero(d);
  for (int k = 0; k < n_samples; ++k) {
    const VectorXd nv = sigma * rb.normal_vector(d);
    for (int i = 0; i < d; ++i) {
      VectorXd xp = x + nv, xm = x + nv;
      xp[i] += h;
      xm[i] -= h;
      welford((f_at(xp) - f_at(xm)) / (2 * h), fd_mean[i], fd_m2[i], k);
    }
  }

  const double denom =
      double(n_samples) * std::max(1, n_samples - 1);
  double max_abs_z = 0.0;
  int argmax_coord = 0;
  for (int i = 0; i < d; ++i) {
    const double se = std::sqrt(std::max(g_m2[i], 0.0) / denom +
                                std::max(fd_m2[i], 0.0) / denom);
    const double z = std::abs(g_mean[i] - fd_mean[i]) / (se + 1e-12);
    if (z > max_abs_z) {
      max_abs_z = z;
      argmax_coord = i;
    }
  }
  rep.pass = max_abs_z < 4.0;
  stats["mode"] = "crn_z_score";
  stats["max_z"] = max_abs_z;
  stats["argmax_coord"] = argmax_coord;
  stats["samples"] = n_samples;
  rep.details_json = stats.dump();
  return rep;
}

CheckReport triangle_bound_check(const GradFn& grad, const BallSpec& ball,
                                 int n_samples, std::uint64_t seed) {
  CheckReport rep;
  rep.check = "triangle_bound";
  std::vector<VectorXd> grads(n_samples);
  double lhat = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    grads[i] = grad(sample_in_ball(ball, seed, i));
    lhat = std::max(lhat, dual_norm(grads[i], ball.norm_order));
  }
  double worst = 0.0;
  int worst_idx = 0;
  for (int i = 1; i < n_samples; ++i) {
    const double diff = (grads[0] - grads[i]).norm();
    if (diff > worst) {
      worst = diff;
      worst_idx = i;
    }
  }
  rep.pass = worst <= 2.0 * lhat + 1e-12;
  json stats;
  stats["L_hat"] = lhat;
  stats["max_grad_diff"] = worst;
  stats["witness_index"] = worst_idx;
  rep.details_json = stats.dump();
  return rep;
}

}  // namespace smoothgeo::geometry
