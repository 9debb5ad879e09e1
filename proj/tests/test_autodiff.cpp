#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smoothgeo/autodiff.hpp"
#include "smoothgeo/nn.hpp"
#include "smoothgeo/rng.hpp"

using namespace smoothgeo;
using ad::Graph;
using ad::Var;
using ad::VectorXd;

TEST_CASE("softplus values and derivative") {
  Graph g;
  // large-beta limit approaches relu
  Var x = g.leaf_scalar(10.0);
  CHECK(ad::softplus(x, 50.0).scalar() == doctest::Approx(10.0).epsilon(1e-9));

  // derivative at 0 with beta=1 is sigmoid(0) = 0.5
  Var v = g.leaf_scalar(0.0, true);
  Var y = ad::softplus(v, 1.0);
  CHECK(g.backward(y, {v})[0].scalar() == doctest::Approx(0.5));
}

TEST_CASE("primitive values") {
  Graph g;
  VectorXd zeros = VectorXd::Zero(2);
  CHECK(ad::softmax(g.leaf_vector(zeros)).vector()(0) == doctest::Approx(0.5));
  CHECK(ad::cross_entropy(g.leaf_vector(zeros), 0).scalar() ==
        doctest::Approx(std::log(2.0)));

  VectorXd x(3);
  x << 1.0, -2.0, 3.0;
  Var mv = ad::matvec(g.leaf_matrix(Eigen::MatrixXd::Identity(3, 3)),
                      g.leaf_vector(x));
  CHECK((mv.vector() - x).norm() == 0.0);
}

TEST_CASE("shape mismatch raises a structured error") {
  Graph g;
  Var a = g.leaf_vector(VectorXd::Zero(2));
  Var b = g.leaf_vector(VectorXd::Zero(3));
  CHECK_THROWS_AS(ad::add(a, b), ad::ShapeError);
  CHECK_THROWS_WITH_AS(ad::dot(a, b), doctest::Contains("dot"),
                       ad::ShapeError);
}

TEST_CASE("backward on polynomials, including double backprop") {
  Graph g;
  Var x = g.leaf_scalar(2.0, true);
  Var cubed = ad::mul(ad::mul(x, x), x);
  Var dx = g.backward(cubed, {x}, /*create_graph=*/true)[0];
  CHECK(dx.scalar() == doctest::Approx(12.0));  // 3 x^2
  Var ddx = g.backward(dx, {x})[0];
  CHECK(ddx.scalar() == doctest::Approx(12.0));  // 6 x
}

TEST_CASE("backward of linear form returns the other factor") {
  Graph g;
  VectorXd wv(3), xv(3);
  wv << 1, 2, 3;
  xv << 4, 5, 6;
  Var w = g.leaf_vector(wv, true);
  Var y = ad::dot(w, g.leaf_vector(xv));
  CHECK((g.backward(y, {w})[0].vector() - xv).norm() == 0.0);
}

TEST_CASE("unreachable wrt gets a zero gradient") {
  Graph g;
  Var x = g.leaf_scalar(1.0, true);
  Var other = g.leaf_vector(VectorXd::Ones(4), true);
  Var y = ad::mul(x, x);
  CHECK(g.backward(y, {other})[0].vector().norm() == 0.0);
}

TEST_CASE("non-scalar backward root is rejected") {
  Graph g;
  Var v = g.leaf_vector(VectorXd::Ones(3), true);
  CHECK_THROWS(g.backward(v, {v}));
}

TEST_CASE("finite difference oracles") {
  auto sq = [](const VectorXd& v) { return v[0] * v[0]; };
  VectorXd x3(1);
  x3 << 3.0;
  CHECK(ad::finite_diff_gradient(sq, x3, 1e-3)[0] ==
        doctest::Approx(6.0).epsilon(1e-5));

  auto constant = [](const VectorXd&) { return 7.0; };
  CHECK(ad::finite_diff_gradient(constant, VectorXd::Zero(4)).norm() == 0.0);

  VectorXd w(3);
  w << 1, -2, 0.5;
  auto lin = [&](const VectorXd& v) { return w.dot(v); };
  CHECK((ad::finite_diff_gradient(lin, VectorXd::Ones(3)) - w).norm() < 1e-9);

  auto prod = [](const VectorXd& v) { return v[0] * v[1]; };
  Eigen::MatrixXd h = ad::finite_diff_hessian(prod, VectorXd::Ones(2), 1e-3);
  CHECK(h(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(h(0, 0) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK((ad::finite_diff_hessian(lin, VectorXd::Zero(3)).cwiseAbs().maxCoeff()) <
        1e-6);

  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 1, 4;
  auto quad = [&](const VectorXd& v) { return 0.5 * v.dot(m * v); };
  VectorXd at(2);
  at << 0.3, -0.7;
  CHECK((ad::finite_diff_hessian(quad, at) - m).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("random softplus nets: backward matches central differences") {
  for (int trial = 0; trial < 25; ++trial) {
    rng::Rng r(rng::derive_seed(11, trial));
    const int d = 2 + int(r.next_u64() % 15);
    const int c = 2 + int(r.next_u64() % 3);
    const double beta = 1.0 + 19.0 * r.uniform(0.0, 1.0);
    nn::Network net = nn::random_network({d, 6, c}, rng::derive_seed(12, trial),
                                         nn::Activation::Softplus, beta);
    const VectorXd x = r.normal_vector(d);

    auto f = [&](const VectorXd& z) {
      Graph g;
      return ad::cross_entropy(nn::forward_logits(net, g, z), 0).scalar();
    };
    Graph g;
    Var xv = g.leaf_vector(x, true);
    Var loss = ad::cross_entropy(nn::forward_logits(net, g, xv), 0);
    const VectorXd analytic = g.backward(loss, {xv})[0].vector();
    const VectorXd fd = ad::finite_diff_gradient(f, x, 1e-4);
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(analytic[i] - fd[i]) /
                std::max(1.0, std::abs(analytic[i])) <
            1e-4);
  }
}

TEST_CASE("relu nets match central differences away from kinks") {
  for (int trial = 0; trial < 10; ++trial) {
    rng::Rng r(rng::derive_seed(21, trial));
    const int d = 3;
    nn::Network net = nn::random_network({d, 5, 2}, rng::derive_seed(22, trial));
    VectorXd x = r.normal_vector(d);
    // keep only points where every hidden pre-activation clears the kink
    const VectorXd pre = net.layers[0].weight * x + net.layers[0].bias;
    if (pre.cwiseAbs().minCoeff() < 1e-2) continue;

    auto f = [&](const VectorXd& z) {
      Graph g;
      return ad::cross_entropy(nn::forward_logits(net, g, z), 1).scalar();
    };
    Graph g;
    Var xv = g.leaf_vector(x, true);
    Var loss = ad::cross_entropy(nn::forward_logits(net, g, xv), 1);
    const VectorXd analytic = g.backward(loss, {xv})[0].vector();
    const VectorXd fd = ad::finite_diff_gradient(f, x, 1e-4);
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(analytic[i] - fd[i]) /
                std::max(1.0, std::abs(analytic[i])) <
            1e-4);
  }
}

TEST_CASE("create_graph: parameter gradient of squared input-gradient norm") {
  rng::Rng r(5);
  const int d = 4;
  nn::Network net =
      nn::random_network({d, 3, 2}, 99, nn::Activation::Softplus, 4.0);
  const VectorXd x = r.normal_vector(d);

  // flatten first-layer weights as the parameter vector under test
  auto norm2_at = [&](const Eigen::MatrixXd& w0) {
    nn::Network tmp = net;
    tmp.layers[0].weight = w0;
    Graph g;
    Var xv = g.leaf_vector(x, true);
    Var f = ad::select(nn::forward_logits(tmp, g, xv), 0);
    Var gx = g.backward(f, {xv}, true)[0];
    return ad::dot(gx, gx).scalar();
  };

  Graph g;
  nn::NetworkVars vars = nn::bind(net, g, true);
  Var xv = g.leaf_vector(x, true);
  Var f = ad::select(nn::forward_from(vars, net, xv), 0);
  Var gx = g.backward(f, {xv}, true)[0];
  Var n2 = ad::dot(gx, gx);
  const Eigen::MatrixXd analytic = g.backward(n2, {vars.weights[0]})[0].matrix();

  const Eigen::MatrixXd w0 = net.layers[0].weight;
  for (int i = 0; i < w0.rows(); ++i)
    for (int j = 0; j < w0.cols(); ++j) {
      Eigen::MatrixXd wp = w0, wm = w0;
      wp(i, j) += 1e-4;
      wm(i, j) -= 1e-4;
      const double fd = (norm2_at(wp) - norm2_at(wm)) / 2e-4;
      CHECK(std::abs(analytic(i, j) - fd) /
                std::max(1.0, std::abs(analytic(i, j))) <
            1e-3);
    }
}

TEST_CASE("evaluation is deterministic") {
  auto run = [] {
    Graph g;
    rng::Rng r(31);
    Var v = g.leaf_vector(r.normal_vector(8), true);
    Var y = ad::sum(ad::mul(ad::softplus(v, 3.0), ad::sigmoid(v, 2.0)));
    return g.backward(y, {v})[0].vector();
  };
  const VectorXd a = run(), b = run();
  CHECK((a - b).norm() == 0.0);
}
