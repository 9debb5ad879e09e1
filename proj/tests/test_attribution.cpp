#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smoothgeo/attribution.hpp"
#include "smoothgeo/rng.hpp"

#include <filesystem>

using namespace smoothgeo;
using ad::MatrixXd;
using ad::VectorXd;
using attribution::AttributionConfig;
using attribution::Method;

namespace {

// logits = (w.x, 0): the class-0 pre-softmax quantity is exactly linear
nn::Network linear_qoi_net(const VectorXd& w) {
  nn::Network net;
  MatrixXd m(2, w.size());
  m.row(0) = w.transpose();
  m.row(1).setZero();
  net.layers.push_back({m, VectorXd::Zero(2)});
  return net;
}

AttributionConfig fixed_class0() {
  AttributionConfig cfg;
  cfg.qoi = {nn::QuantityOfInterest::Stage::PreSoftmax, 0};
  return cfg;
}

}  // namespace

TEST_CASE("saliency map of a linear quantity") {
  VectorXd w(2), x(2);
  w << 1, 2;
  x << 3, 4;
  nn::Network net = linear_qoi_net(w);
  AttributionConfig cfg = fixed_class0();
  CHECK((attribution::saliency_map(net, x, cfg).scores - w).norm() < 1e-12);

  cfg.grad_times_input = true;
  const VectorXd gxi = attribution::saliency_map(net, x, cfg).scores;
  CHECK(gxi(0) == doctest::Approx(3.0));
  CHECK(gxi(1) == doctest::Approx(8.0));
}

TEST_CASE("integrated gradients on a linear model is exact") {
  VectorXd w(2), x(2);
  w << 1, 2;
  x << 3, 4;
  nn::Network net = linear_qoi_net(w);
  for (int m : {1, 3, 50}) {
    AttributionConfig cfg = fixed_class0();
    cfg.ig_steps = m;
    const VectorXd ig = attribution::integrated_gradients(net, x, cfg).scores;
    CHECK(ig(0) == doctest::Approx(3.0));
    CHECK(ig(1) == doctest::Approx(8.0));
    CHECK(ig.sum() == doctest::Approx(11.0));  // f(x) - f(0)
  }
}

TEST_CASE("integrated gradients completeness on softplus nets") {
  for (int trial = 0; trial < 10; ++trial) {
    rng::Rng r(rng::derive_seed(7, trial));
    const int d = 2 + int(r.next_u64() % 7);
    nn::Network net = nn::random_network({d, 6, 3}, rng::derive_seed(8, trial),
                                         nn::Activation::Softplus,
                                         1.0 + 9.0 * r.uniform(0.0, 1.0));
    const VectorXd x = r.normal_vector(d);
    AttributionConfig cfg = fixed_class0();
    cfg.ig_steps = 512;
    const double sum = attribution::integrated_gradients(net, x, cfg).scores.sum();

    auto f = [&](const VectorXd& z) {
      ad::Graph g;
      return nn::forward_logits(net, g, z).vector()(0);
    };
    const double gap = f(x) - f(VectorXd::Zero(d));
    CHECK(std::abs(sum - gap) < 1e-3 * std::abs(gap) + 1e-6);
  }
}

TEST_CASE("smooth gradient reductions and determinism") {
  nn::Network net = nn::random_network({4, 5, 3}, 19);
  rng::Rng r(20);
  const VectorXd x = r.normal_vector(4);
  AttributionConfig cfg = fixed_class0();

  cfg.sg_sigma = 0.0;
  const VectorXd sg0 = attribution::smooth_gradient(net, x, cfg).scores;
  const VectorXd sm = attribution::saliency_map(net, x, cfg).scores;
  CHECK((sg0.array() == sm.array()).all());

  cfg.sg_sigma = 0.3;
  cfg.seed = 77;
  const VectorXd a = attribution::smooth_gradient(net, x, cfg).scores;
  const VectorXd b = attribution::smooth_gradient(net, x, cfg).scores;
  CHECK((a.array() == b.array()).all());

  // linear model: any noise integrates out exactly
  VectorXd w(3);
  w << 2, -1, 0.5;
  nn::Network lin = linear_qoi_net(w);
  AttributionConfig lcfg = fixed_class0();
  lcfg.sg_sigma = 1.0;
  lcfg.sg_samples = 7;
  CHECK((attribution::smooth_gradient(lin, VectorXd::Zero(3), lcfg).scores - w)
            .norm() < 1e-12);
}

TEST_CASE("uniform gradient reductions") {
  nn::Network net = nn::random_network({4, 5, 3}, 29);
  rng::Rng r(30);
  const VectorXd x = r.normal_vector(4);
  AttributionConfig cfg = fixed_class0();
  cfg.ug_radius = 0.0;
  CHECK((attribution::uniform_gradient(net, x, cfg).scores -
         attribution::saliency_map(net, x, cfg).scores)
            .norm() == 0.0);

  VectorXd w(3);
  w << 1, 1, -2;
  nn::Network lin = linear_qoi_net(w);
  cfg = fixed_class0();
  cfg.ug_radius = 0.5;
  CHECK((attribution::uniform_gradient(lin, VectorXd::Ones(3), cfg).scores - w)
            .norm() < 1e-12);
}

TEST_CASE("smooth gradient variance shrinks as 1/sqrt(samples)") {
  nn::Network net =
      nn::random_network({3, 8, 2}, 37, nn::Activation::Softplus, 5.0);
  rng::Rng r(38);
  const VectorXd x = r.normal_vector(3);

  auto variance_with = [&](int samples) {
    AttributionConfig cfg = fixed_class0();
    cfg.sg_sigma = 0.5;
    cfg.sg_samples = samples;
    VectorXd mean = VectorXd::Zero(3);
    std::vector<VectorXd> draws;
    const int reseeds = 100;
    for (int s = 0; s < reseeds; ++s) {
      cfg.seed = 1000 + s;
      draws.push_back(attribution::smooth_gradient(net, x, cfg).scores);
      mean += draws.back();
    }
    mean /= reseeds;
    double var = 0.0;
    for (const VectorXd& z : draws) var += (z - mean).squaredNorm();
    return var / reseeds;
  };

  const double ratio = variance_with(16) / variance_with(64);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("normalize_map") {
  VectorXd z(4);
  z << 4, -3, 2, 1;
  const VectorXd n = attribution::normalize_map(z);
  CHECK(n(0) == doctest::Approx(0.4));
  CHECK(n(1) == doctest::Approx(0.3));
  CHECK(n(2) == doctest::Approx(0.2));
  CHECK(n(3) == doctest::Approx(0.1));

  VectorXd already(3);
  already << 0.2, 0.5, 0.3;
  CHECK((attribution::normalize_map(already) - already).norm() < 1e-15);
  CHECK((attribution::normalize_map(10 * z) - n).norm() < 1e-15);
  CHECK_THROWS_WITH(attribution::normalize_map(VectorXd::Zero(3)),
                    doctest::Contains("degenerate attribution"));
}

TEST_CASE("blob round trip and json shape") {
  rng::Rng r(43);
  const VectorXd z = r.normal_vector(9);
  const auto path =
      (std::filesystem::temp_directory_path() / "sg_blob.f64").string();
  attribution::save_blob(z, path);
  CHECK((attribution::load_blob(path).array() == z.array()).all());
  std::filesystem::remove(path);

  attribution::AttributionMap map;
  map.scores = z;
  map.method = Method::IG;
  const std::string j = attribution::to_json(map);
  CHECK(j.find("\"IG\"") != std::string::npos);
}

TEST_CASE("method names round trip") {
  for (Method m : {Method::SM, Method::IG, Method::SG, Method::UG})
    CHECK(attribution::method_from_name(attribution::method_name(m)) == m);
  CHECK_THROWS(attribution::method_from_name("nope"));
}
