// Acceptance gate: thirteen end-to-end checks over the library, one
// pass/fail line each. Exit code 0 when every check passes, 1 otherwise.

#include "smoothgeo/attacks.hpp"
#include "smoothgeo/harness.hpp"
#include "smoothgeo/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

using namespace smoothgeo;
using ad::Graph;
using ad::Var;
using ad::VectorXd;
using attribution::Method;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int idx, const std::string& what, bool pass,
            const std::string& detail) {
  std::printf("criterion %02d [%s] %s (%s)\n", idx, pass ? "PASS" : "FAIL",
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// --- 1: backward pass vs central differences, plus double backprop ---------

void criterion1() {
  const auto t0 = Clock::now();
  double worst_rel = 0.0, worst_ddx = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    rng::Rng r(rng::derive_seed(101, trial));
    const int d = 2 + static_cast<int>(r.next_u64() % 15);
    const int c = 2 + static_cast<int>(r.next_u64() % 3);
    const double beta = 1.0 + 19.0 * r.uniform(0.0, 1.0);
    nn::Network net = nn::random_network({d, 6, c}, rng::derive_seed(102, trial),
                                         nn::Activation::Softplus, beta);
    const VectorXd x = r.normal_vector(d);

    auto f = [&](const VectorXd& z) {
      Graph g;
      return ad::cross_entropy(nn::forward_logits(net, g, z), 0).scalar();
    };
    Graph g;
    Var xv = g.leaf_vector(x, true);
    Var loss = ad::cross_entropy(nn::forward_logits(net, g, xv), 0);
    const VectorXd analytic = g.backward(loss, {xv}, true)[0].vector();
    const VectorXd fd = ad::finite_diff_gradient(f, x, 1e-4);
    for (int i = 0; i < d; ++i)
      worst_rel = std::max(worst_rel,
                           std::abs(analytic[i] - fd[i]) /
                               std::max(1.0, std::abs(analytic[i])));

    // double backprop: d/dx of ||grad_x f||^2 against central differences
    auto norm2 = [&](const VectorXd& z) {
      Graph gg;
      Var zv = gg.leaf_vector(z, true);
      Var l = ad::cross_entropy(nn::forward_logits(net, gg, zv), 0);
      Var gx = gg.backward(l, {zv}, true)[0];
      return ad::dot(gx, gx).scalar();
    };
    Var gx = g.backward(loss, {xv}, true)[0];
    Var n2 = ad::dot(gx, gx);
    const VectorXd ddx = g.backward(n2, {xv})[0].vector();
    const VectorXd ddx_fd = ad::finite_diff_gradient(norm2, x, 1e-4);
    for (int i = 0; i < d; ++i)
      worst_ddx = std::max(worst_ddx,
                           std::abs(ddx[i] - ddx_fd[i]) /
                               std::max(1.0, std::abs(ddx[i])));
  }
  const double wall = seconds_since(t0);
  report(1, "gradients match central differences on 100 softplus nets",
         worst_rel < 1e-4 && worst_ddx < 1e-3 && wall < 30.0,
         "max rel err " + fmt(worst_rel) + ", double-backprop err " +
             fmt(worst_ddx) + ", " + fmt(wall) + "s");
}

// --- 2: integrated-gradients completeness ----------------------------------

void criterion2() {
  double worst_excess = 0.0;  // violation of the tolerance, <= 0 when passing
  for (int trial = 0; trial < 50; ++trial) {
    rng::Rng r(rng::derive_seed(201, trial));
    const int d = 2 + static_cast<int>(r.next_u64() % 10);
    const int c = 2 + static_cast<int>(r.next_u64() % 3);
    nn::Network net = nn::random_network({d, 6, c}, rng::derive_seed(202, trial),
                                         nn::Activation::Softplus,
                                         r.uniform(2.0, 20.0));
    const VectorXd x = r.normal_vector(d);
    const VectorXd xb = r.normal_vector(d);

    attribution::AttributionConfig cfg;
    cfg.qoi = attribution::resolve_class(net, x, {});
    cfg.ig_baseline = xb;
    cfg.ig_steps = 512;
    const VectorXd ig =
        attribution::integrated_gradients(net, x, cfg).scores;

    auto f = [&](const VectorXd& z) {
      Graph g;
      return nn::quantity(nn::forward_logits(net, g, z), cfg.qoi).scalar();
    };
    const double delta = f(x) - f(xb);
    const double err = std::abs(ig.sum() - delta);
    worst_excess =
        std::max(worst_excess, err - (1e-3 * std::abs(delta) + 1e-6));
  }
  report(2, "integrated gradients completeness at 512 steps on 50 nets",
         worst_excess <= 0.0, "worst tolerance excess " + fmt(worst_excess));
}

// --- 3-7: analytic checks at full trial counts ------------------------------

void theory_criterion(int idx, const std::string& what,
                      const geometry::CheckReport& rep) {
  report(idx, what, rep.pass, rep.details_json.substr(0, 120));
}

// --- 8: metric reference values ---------------------------------------------

void criterion8() {
  auto vec = [](std::initializer_list<double> v) {
    VectorXd out(static_cast<int>(v.size()));
    int i = 0;
    for (double x : v) out(i++) = x;
    return out;
  };
  bool ok = true;
  auto expect = [&](double got, double want) {
    if (std::abs(got - want) > 1e-12) ok = false;
  };
  const VectorXd z = vec({4, 3, 2, 1});
  expect(metrics::topk_intersection(z, z, 2), 0.7);
  expect(metrics::topk_intersection(z, vec({1, 2, 3, 4}), 2), 0.3);
  expect(metrics::spearman_correlation(vec({1, 2, 3}), vec({2, 1, 3})), 0.5);
  expect(metrics::spearman_correlation(vec({1, 2, 3, 4}), vec({4, 3, 2, 1})),
         -1.0);
  expect(metrics::cosine_distance(vec({1, -2, 3}), vec({-1, 2, -3})), 2.0);
  expect(metrics::cosine_distance(vec({1, 0}), vec({0, 5})), 1.0);
  expect(metrics::center_dislocation(vec({1, 0, 0}), vec({0, 0, 1}),
                                     metrics::GridGeometry{1, 3}),
         2.0);
  expect(metrics::log_auc({{2, 5}, {4, 5}, {8, 5}, {16, 5}}), 15.0);
  expect(metrics::log_auc({{2, 0}, {4, 1}}), 0.5);
  report(8, "metric reference values are exact", ok,
         ok ? "9 hand-computed cases" : "a hand-computed case deviated");
}

// --- shared image preset for criteria 9-13 ----------------------------------

struct ImagePreset {
  data::Dataset ds;           // round-tripped through the IDX format
  nn::Network natural;
  nn::Network ssr;
  double acc_natural = 0.0;
  double acc_ssr = 0.0;
};

training::TrainConfig digit_train_config() {
  training::TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 32;
  tc.learning_rate = 0.1;
  tc.momentum = 0.9;
  tc.hidden = {32};
  tc.seed = 9;
  return tc;
}

ImagePreset build_preset() {
  const auto dir = std::filesystem::temp_directory_path();
  const auto images = dir / "sg_accept_images.idx";
  const auto labels = dir / "sg_accept_labels.idx";
  const data::Dataset generated = data::synth_digits(400, 10, 9);
  data::save_idx(generated, images, labels);

  ImagePreset p;
  p.ds = data::load_idx(images, labels);
  std::filesystem::remove(images);
  std::filesystem::remove(labels);

  training::TrainConfig tc = digit_train_config();
  p.natural = training::train_natural(p.ds, tc).first;
  tc.ssr.beta = 0.3;
  tc.ssr.s = 3.0;
  p.ssr = training::train_ssr(p.ds, tc).first;
  p.acc_natural = training::accuracy(p.natural, p.ds);
  p.acc_ssr = training::accuracy(p.ssr, p.ds);
  return p;
}

harness::ExperimentSpec image_spec(nn::QuantityOfInterest::Stage stage) {
  harness::ExperimentSpec spec;
  spec.seed = 9;
  spec.image_count = 100;
  spec.qoi_stage = stage;
  return spec;
}

double auc_cosd(const harness::RobustnessResult& res, const std::string& key) {
  return res.reports.at(key).auc.cosd;
}

// --- 9: targeted attack beats a random perturbation of the same budget -----

void criterion9(const ImagePreset& p) {
  const auto t0 = Clock::now();
  const harness::ExperimentSpec spec =
      image_spec(nn::QuantityOfInterest::Stage::PreSoftmax);
  const auto inputs = harness::select_inputs(p.natural, p.ds, 100);
  const double eps = p.ds.scale_epsilon(8.0);  // 8/255 on the model scale
  const attribution::AttributionConfig acfg =
      harness::make_attribution_config(p.ds, Method::SG, spec);

  // manipulate targets: each input aims at the next input's map
  std::vector<VectorXd> maps(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    attribution::AttributionConfig c = acfg;
    c.seed = rng::derive_seed(spec.seed, 0x3A90 + inputs[i]);
    maps[i] = attribution::compute(Method::SG, p.natural,
                                   p.ds.scaled_input(inputs[i]), c)
                  .scores;
  }

  int wins = 0;
  bool invariants = true;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const VectorXd x = p.ds.scaled_input(inputs[i]);
    attacks::AttackConfig ac;
    ac.kind = attacks::AttackKind::Manipulate;
    ac.epsilon_inf = eps;
    ac.steps = spec.attack_steps;
    ac.surrogate_beta = spec.surrogate_beta;
    ac.k = spec.k;
    ac.data_range = {0.0, 1.0};
    ac.geometry = p.ds.geometry;
    ac.seed = rng::derive_seed(spec.seed, inputs[i]);
    ac.attacked_method = Method::SG;
    ac.attribution = acfg;
    ac.attribution.sg_samples = spec.attack_mc_samples;
    ac.target_map = maps[(i + 1) % inputs.size()];
    const attacks::AttackResult res = attacks::pgd_attack(p.natural, x, ac);

    if (res.linf_norm > eps + 1e-12) invariants = false;
    if (res.x_adv.minCoeff() < -1e-12 || res.x_adv.maxCoeff() > 1.0 + 1e-12)
      invariants = false;
    if (res.feasible &&
        nn::predict(p.natural, res.x_adv) != nn::predict(p.natural, x))
      invariants = false;
    if (!res.feasible) continue;

    attribution::AttributionConfig ecfg = acfg;
    ecfg.qoi = attribution::resolve_class(p.natural, x, acfg.qoi);
    const VectorXd z =
        attribution::compute(Method::SG, p.natural, x, ecfg).scores;
    const VectorXd z_adv =
        attribution::compute(Method::SG, p.natural, res.x_adv, ecfg).scores;
    const VectorXd xr = attacks::random_perturbation(
        x, eps, {0.0, 1.0}, rng::derive_seed(spec.seed, 0x9A7D + inputs[i]));
    const VectorXd z_rand =
        attribution::compute(Method::SG, p.natural, xr, ecfg).scores;
    if (metrics::cosine_distance(z, z_adv) >
        metrics::cosine_distance(z, z_rand))
      ++wins;
  }
  const double wall = seconds_since(t0);
  report(9,
         "manipulate attack at 8/255 beats a random same-budget perturbation",
         wins >= 90 && invariants && wall < 600.0,
         std::to_string(wins) + "/100 wins, invariants " +
             (invariants ? "hold" : "VIOLATED") + ", " + fmt(wall) + "s");
}

// --- 10: curvature regularization lowers attack success ---------------------

void criterion10(const ImagePreset& p) {
  const auto t0 = Clock::now();
  const harness::ExperimentSpec spec =
      image_spec(nn::QuantityOfInterest::Stage::PostSoftmax);
  const harness::RegularizationResult reg =
      harness::run_regularization_experiment(
          {{"natural", p.natural}, {"ssr", p.ssr}}, p.ds, spec);

  auto mean_top_eig = [&](const nn::Network& net) {
    const auto inputs = harness::select_inputs(net, p.ds, spec.image_count);
    double mean = 0.0;
    for (int i : inputs)
      mean += geometry::closed_form_hessian(net, p.ds.scaled_input(i))
                  .eigvals(0);
    return mean / inputs.size();
  };
  const double eig_nat = mean_top_eig(p.natural);
  const double eig_ssr = mean_top_eig(p.ssr);

  bool all_lower = true;
  std::string deltas;
  for (Method m : spec.methods) {
    const std::string key = attribution::method_name(m) + "_topk";
    const double nat = auc_cosd(reg.per_model.at("natural"), key);
    const double ssr = auc_cosd(reg.per_model.at("ssr"), key);
    if (!(ssr < nat)) all_lower = false;
    deltas += attribution::method_name(m) + " " + fmt(ssr) + "<" + fmt(nat) +
              " ";
  }
  const bool acc_close = std::abs(p.acc_natural - p.acc_ssr) <= 0.05;
  const double wall = seconds_since(t0);
  report(10, "curvature regularization lowers attack success on all methods",
         (eig_ssr < eig_nat) && all_lower && acc_close && wall < 900.0,
         "top eig " + fmt(eig_ssr) + "<" + fmt(eig_nat) + ", " + deltas +
             "acc " + fmt(p.acc_ssr) + " vs " + fmt(p.acc_natural) + ", " +
             fmt(wall) + "s");
}

// --- 11/12: transfer ordering and smoothing direction -----------------------

void criterion11(const ImagePreset& p) {
  const harness::ExperimentSpec spec =
      image_spec(nn::QuantityOfInterest::Stage::PreSoftmax);
  const harness::RobustnessResult res =
      harness::run_transfer_experiment(p.natural, p.ds, spec);
  const double sm = auc_cosd(res, "SM_transfer");
  const double ig = auc_cosd(res, "IG_transfer");
  const double sg = auc_cosd(res, "SG_transfer");
  const double ug = auc_cosd(res, "UG_transfer");
  report(11, "transferred perturbations rank SM > IG > SG and SM > UG",
         sm > ig && ig > sg && sm > ug,
         "SM " + fmt(sm) + ", IG " + fmt(ig) + ", SG " + fmt(sg) + ", UG " +
             fmt(ug));
}

harness::RobustnessResult criterion12(const ImagePreset& p) {
  const harness::ExperimentSpec spec =
      image_spec(nn::QuantityOfInterest::Stage::PreSoftmax);
  const harness::RobustnessResult res =
      harness::run_robustness_experiment(p.natural, p.ds, spec);
  const double sm = auc_cosd(res, "SM_topk");
  const double sg = auc_cosd(res, "SG_topk");
  const double ug = auc_cosd(res, "UG_topk");
  report(12, "noise-averaged attributions resist the top-k attack better",
         sg < sm && ug < sm,
         "SM " + fmt(sm) + ", SG " + fmt(sg) + ", UG " + fmt(ug));
  return res;
}

void criterion13(const ImagePreset& p, const harness::RobustnessResult& first) {
  const harness::ExperimentSpec spec =
      image_spec(nn::QuantityOfInterest::Stage::PreSoftmax);
  const harness::RobustnessResult second =
      harness::run_robustness_experiment(p.natural, p.ds, spec);
  const bool identical = first.to_csv() == second.to_csv();
  report(13, "identical spec and seed reproduce byte-identical CSV output",
         identical,
         identical ? std::to_string(first.to_csv().size()) + " bytes"
                   : "reruns diverged");
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  theory_criterion(3, "closed-form hessian matches the finite-difference oracle",
                   harness::check_prop3_exactness(7, 50));
  theory_criterion(4, "small-system eigenvalues match the dense spectrum",
                   harness::check_eigen_trick(7, 100));
  theory_criterion(5, "smoothed-gradient robustness never exceeds 2/sigma^2",
                   harness::check_theorem2_bound(7, 1000));
  theory_criterion(6, "gradient drift obeys the top-eigenvalue bound",
                   harness::check_theorem3(7, 5, 1000));
  theory_criterion(7, "noise-averaged gradient equals the smoothed-score gradient",
                   harness::check_prop1(7, 20, 10000));
  criterion8();

  const ImagePreset preset = build_preset();
  criterion9(preset);
  criterion10(preset);
  criterion11(preset);
  const harness::RobustnessResult robustness = criterion12(preset);
  criterion13(preset, robustness);

  std::printf("%s: %d/13 criteria passed\n",
              failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              13 - failures);
  return failures == 0 ? 0 : 1;
}
