#pragma once

// Closed-form input-Hessian factorization W (diag(p) - p p^T) W^T, the c x c
// eigenvalue computation, sampled Lipschitz / attribution-robustness
// estimators, and the empirical verifiers for the analytic bounds.

#include "smoothgeo/nn.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace smoothgeo::geometry {

using ad::MatrixXd;
using ad::VectorXd;
using nn::Network;
using nn::QuantityOfInterest;

struct HessianFactorization {
  MatrixXd W;        // d x c input Jacobian of the logits
  VectorXd p;        // softmax probabilities, length c
  MatrixXd A;        // c x c, diag(p) - p p^T
  MatrixXd sqrtA;    // symmetric PSD square root of A
  MatrixXd B;        // d x c, W * sqrtA
  VectorXd eigvals;  // spectrum of B^T B (== nonzero spectrum of B B^T), descending
  VectorXd top_eigvec;  // unit-norm top eigenvector of W A W^T, length d
};

struct BallSpec {
  VectorXd center;
  double radius = 0.0;
  static constexpr int kInf = 0;  // norm_order value meaning l-infinity
  int norm_order = 2;             // 2 or kInf
};

struct LipschitzEstimate {
  double value = 0.0;
  int samples = 0;
  VectorXd witness;
};

struct RobustnessEstimate {
  double lambda_hat = 0.0;
  int samples = 0;
  VectorXd witness_a, witness_b;
  int norm_order = 2;
};

struct CheckReport {
  std::string check;
  bool pass = false;
  std::string details_json;  // {witnesses, statistics}
};

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
// descending. Throws after `max_sweeps` non-converged sweeps.
VectorXd jacobi_eigenvalues(const MatrixXd& sym, int max_sweeps = 100);

HessianFactorization closed_form_hessian(const Network& net, const VectorXd& x);

// Recomputes the spectrum of fac.B^T fac.B (never materializes d x d).
VectorXd hessian_eigenvalues(const HessianFactorization& fac);

using GradFn = std::function<VectorXd(const VectorXd&)>;

// Gradient field of a network quantity of interest with the class resolved
// at the ball center.
GradFn qoi_grad_field(const Network& net, const QuantityOfInterest& qoi,
                      const VectorXd& anchor);

// Point sampled uniformly in the ball (index 0 is the center itself).
VectorXd sample_in_ball(const BallSpec& ball, std::uint64_t seed, int index);

LipschitzEstimate estimate_local_lipschitz(const GradFn& grad,
                                           const BallSpec& ball, int n_samples,
                                           std::uint64_t seed);

using AttrFn = std::function<VectorXd(const VectorXd&)>;

RobustnessEstimate estimate_attribution_robustness(const AttrFn& attr,
                                                   const BallSpec& ball,
                                                   int n_samples,
                                                   std::uint64_t seed);

// Theorem-level plug-in bounds.
double sg_global_bound(double F, double sigma);              // 2F / sigma^2
double sg_noise_threshold(double delta2, double F, double L);  // sqrt(delta2 F / L)
double theorem3_bound(double delta2, const VectorXd& eigvals);  // delta2 max|xi|

CheckReport verify_prop1(const Network& net, const VectorXd& x, double sigma,
                         int n_samples, std::uint64_t seed);
CheckReport triangle_bound_check(const GradFn& grad, const BallSpec& ball,
                                 int n_samples, std::uint64_t seed);

}  // namespace smoothgeo::geometry
