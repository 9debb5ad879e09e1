#include "smoothgeo/attacks.hpp"

#include "smoothgeo/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace smoothgeo::attacks {

std::string attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::TopK: return "topk";
    case AttackKind::MassCenter: return "mass_center";
    case AttackKind::Manipulate: return "manipulate";
  }
  return "?";
}

AttackKind attack_from_name(const std::string& name) {
  if (name == "topk") return AttackKind::TopK;
  if (name == "mass_center") return AttackKind::MassCenter;
  if (name == "manipulate") return AttackKind::Manipulate;
  throw std::runtime_error("unknown attack kind: " + name);
}

Var topk_loss(Var z_adv, const std::vector<int>& topk_set) {
  ad::Graph* g = z_adv.graph();
  const int d = z_adv.shape().size();
  ad::ArrayXd mask = ad::ArrayXd::Zero(d);
  for (int i : topk_set) mask[i] = 1.0;
  Var sabs = ad::smooth_abs(z_adv);
  Var num = ad::dot(g->leaf(mask, z_adv.shape()), sabs);
  return ad::div(num, ad::sum(sabs));
}

Var mass_center_loss(Var z_adv, const Eigen::Vector2d& original_center,
                     const metrics::GridGeometry& geom) {
  ad::Graph* g = z_adv.graph();
  const int d = z_adv.shape().size();
  if (geom.size() != d)
    throw std::runtime_error("mass_center_loss: geometry mismatch");
  ad::ArrayXd rowc(d), colc(d);
  for (int i = 0; i < d; ++i) {
    rowc[i] = geom.flat() ? 0.0 : i / geom.width;
    colc[i] = geom.flat() ? i : i % geom.width;
  }
  Var sabs = ad::smooth_abs(z_adv);
  Var inv = ad::div(g->leaf_scalar(1.0), ad::sum(sabs));
  Var nz = ad::smul(inv, sabs);
  Var dr = ad::caffine(ad::dot(g->leaf(rowc, z_adv.shape()), nz), 1.0,
                       -original_center[0]);
  Var dc = ad::caffine(ad::dot(g->leaf(colc, z_adv.shape()), nz), 1.0,
                       -original_center[1]);
  Var dist = ad::sqrt(
      ad::caffine(ad::add(ad::square(dr), ad::square(dc)), 1.0, 1e-12));
  return ad::neg(dist);  // minimizing maximizes the displacement
}

Var manipulate_loss(Var z_adv, const VectorXd& target_map, Var h_adv,
                    const VectorXd& h_orig, double beta0, double beta1) {
  ad::Graph* g = z_adv.graph();
  if (target_map.size() != z_adv.shape().size())
    throw std::runtime_error("manipulate_loss: target map length mismatch");
  Var rz = ad::sub(z_adv, g->leaf_vector(target_map));
  Var rh = ad::sub(h_adv, g->leaf_vector(h_orig));
  return ad::add(ad::scale(ad::dot(rz, rz), beta0),
                 ad::scale(ad::dot(rh, rh), beta1));
}

VectorXd random_perturbation(const VectorXd& x, double epsilon_inf,
                             const DataRange& range, std::uint64_t seed) {
  if (epsilon_inf < 0) throw std::runtime_error("epsilon must be >= 0");
  rng::Rng r(rng::derive_seed(seed, 0x7A4D));
  VectorXd out = x + r.uniform_vector(static_cast<int>(x.size()),
                                      -epsilon_inf, epsilon_inf);
  return out.cwiseMax(range.lo).cwiseMin(range.hi);
}

namespace {

struct AttackContext {
  Network surrogate;
  nn::QuantityOfInterest qoi;            // class resolved at the clean input
  std::vector<VectorXd> frozen_noise;    // SG/UG common random numbers
  std::vector<int> topk_set;
  Eigen::Vector2d original_center;
  VectorXd h_orig;
  VectorXd ig_baseline;
};

// Builds the attacked attribution as a differentiable function of `xv` on
// the surrogate network; gradients of gradients come from create_graph.
Var attribution_node(const AttackContext& ctx, const AttackConfig& cfg,
                     ad::Graph& g, Var xv) {
  const Network& net = ctx.surrogate;
  auto grad_at = [&](Var point) {
    Var q = nn::quantity(net, g, point, ctx.qoi);
    return g.backward(q, {point}, /*create_graph=*/true)[0];
  };

  Var z;
  switch (cfg.attacked_method) {
    case Method::SM:
      z = grad_at(xv);
      break;
    case Method::IG: {
      Var base = g.leaf_vector(ctx.ig_baseline);
      Var diff = ad::sub(xv, base);
      const int m = cfg.attribution.ig_steps;
      Var acc;
      for (int t = 1; t <= m; ++t) {
        Var point = ad::add(base, ad::scale(diff, (t - 0.5) / m));
        Var gi = grad_at(point);
        acc = acc.valid() ? ad::add(acc, gi) : gi;
      }
      return ad::mul(diff, ad::scale(acc, 1.0 / m));
    }
    case Method::SG:
    case Method::UG: {
      Var acc;
      for (const VectorXd& nz : ctx.frozen_noise) {
        Var gi = grad_at(ad::add(xv, g.leaf_vector(nz)));
        acc = acc.valid() ? ad::add(acc, gi) : gi;
      }
      z = acc.valid() ? ad::scale(acc, 1.0 / ctx.frozen_noise.size())
                      : grad_at(xv);
      break;
    }
  }
  if (cfg.attribution.grad_times_input) z = ad::mul(z, xv);
  return z;
}

Var attack_loss(const AttackContext& ctx, const AttackConfig& cfg,
                ad::Graph& g, Var xv, Var z) {
  switch (cfg.kind) {
    case AttackKind::TopK:
      return topk_loss(z, ctx.topk_set);
    case AttackKind::MassCenter:
      return mass_center_loss(z, ctx.original_center, cfg.geometry);
    case AttackKind::Manipulate: {
      Var h = ad::softmax(nn::forward_logits(ctx.surrogate, g, xv));
      return manipulate_loss(z, cfg.target_map, h, ctx.h_orig, cfg.beta0,
                             cfg.beta1);
    }
  }
  throw std::runtime_error("unreachable");
}

}  // namespace

AttackResult pgd_attack(const Network& net, const VectorXd& x,
                        const AttackConfig& cfg) {
  if (cfg.epsilon_inf < 0) throw std::runtime_error("epsilon must be >= 0");
  if (cfg.steps < 0) throw std::runtime_error("steps must be >= 0");
  if (cfg.kind == AttackKind::Manipulate && cfg.target_map.size() != x.size())
    throw std::runtime_error("manipulate attack requires a target map");

  AttackContext ctx;
  ctx.surrogate = nn::with_softplus(net, cfg.surrogate_beta);
  ctx.qoi = attribution::resolve_class(net, x, cfg.attribution.qoi);
  ctx.ig_baseline = cfg.attribution.ig_baseline.size()
                        ? cfg.attribution.ig_baseline
                        : VectorXd::Zero(x.size());
  const int y0 = nn::predict(net, x);

  if (cfg.attacked_method == Method::SG) {
    rng::Rng r(rng::derive_seed(cfg.attribution.seed, 0x5601));
    for (int s = 0; s < cfg.attribution.sg_samples; ++s)
      ctx.frozen_noise.push_back(
          cfg.attribution.sg_sigma *
          r.normal_vector(static_cast<int>(x.size())));
  } else if (cfg.attacked_method == Method::UG) {
    rng::Rng r(rng::derive_seed(cfg.attribution.seed, 0x0603));
    for (int s = 0; s < cfg.attribution.ug_samples; ++s)
      ctx.frozen_noise.push_back(
          r.uniform_vector(static_cast<int>(x.size()),
                           -cfg.attribution.ug_radius,
                           cfg.attribution.ug_radius));
  }

  // the attacked loss references quantities of the clean input
  {
    attribution::AttributionConfig acfg = cfg.attribution;
    acfg.qoi = ctx.qoi;
    const attribution::AttributionMap orig =
        attribution::compute(cfg.attacked_method, net, x, acfg);
    if (cfg.kind == AttackKind::TopK)
      ctx.topk_set = metrics::topk_indices(orig.scores, cfg.k);
    if (cfg.kind == AttackKind::MassCenter)
      ctx.original_center = metrics::mass_center(orig.scores, cfg.geometry);
  }
  if (cfg.kind == AttackKind::Manipulate) {
    ad::Graph g;
    ctx.h_orig = ad::softmax(nn::forward_logits(ctx.surrogate, g, x)).vector();
  }

  const double step_size =
      cfg.step_size > 0 ? cfg.step_size
                        : 2.0 * cfg.epsilon_inf / std::max(1, cfg.steps);
  const VectorXd lo =
      (x.array() - cfg.epsilon_inf).max(cfg.data_range.lo).matrix();
  const VectorXd hi =
      (x.array() + cfg.epsilon_inf).min(cfg.data_range.hi).matrix();

  AttackResult result;
  result.x_adv = x;
  VectorXd xt = x;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int t = 0; t <= cfg.steps; ++t) {
    ad::Graph g;
    Var xv = g.leaf_vector(xt, /*requires_grad=*/true);
    Var z = attribution_node(ctx, cfg, g, xv);
    Var loss = attack_loss(ctx, cfg, g, xv, z);
    result.loss_trace.push_back(loss.scalar());

    if (t == 0) {
      // the clean input is the fallback candidate; iterates must beat it
      best_loss = loss.scalar();
    } else if (nn::predict(net, xt) == y0 && loss.scalar() < best_loss) {
      best_loss = loss.scalar();
      result.x_adv = xt;
      result.feasible = true;
      result.best_step = t;
    }
    if (t == cfg.steps) break;

    const VectorXd grad = g.backward(loss, {xv})[0].vector();
    xt = (xt - step_size * grad.cwiseSign()).cwiseMax(lo).cwiseMin(hi);
  }

  result.linf_norm = (result.x_adv - x).lpNorm<Eigen::Infinity>();
  return result;
}

std::string to_json(const AttackResult& result) {
  nlohmann::json j;
  j["feasible"] = result.feasible;
  j["best_step"] = result.best_step;
  j["linf_norm"] = result.linf_norm;
  j["loss_trace"] = result.loss_trace;
  j["x_adv"] = std::vector<double>(
      result.x_adv.data(), result.x_adv.data() + result.x_adv.size());
  return j.dump();
}

}  // namespace smoothgeo::attacks
