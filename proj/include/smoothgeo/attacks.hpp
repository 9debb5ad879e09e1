#pragma once

// Attribution attacks: projected signed-gradient descent of an attack loss
// evaluated on a softplus surrogate, constrained to keep the ReLU model's
// prediction and the l-infinity budget.

#include "smoothgeo/attribution.hpp"
#include "smoothgeo/metrics.hpp"

#include <optional>

namespace smoothgeo::attacks {

using ad::Var;
using ad::VectorXd;
using attribution::AttributionConfig;
using attribution::Method;
using nn::Network;

enum class AttackKind { TopK, MassCenter, Manipulate };

std::string attack_name(AttackKind k);
AttackKind attack_from_name(const std::string& name);

struct DataRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct AttackConfig {
  AttackKind kind = AttackKind::TopK;
  double epsilon_inf = 0.0;     // in the same units as x
  int steps = 50;
  double step_size = -1.0;      // <= 0 selects 2 * epsilon / steps
  double surrogate_beta = 50.0;
  int k = 1;                    // top-k attack
  double beta0 = 1e11;          // manipulate residual weight on the map
  double beta1 = 1e6;           // manipulate residual weight on the output
  VectorXd target_map;          // manipulate only
  DataRange data_range;
  metrics::GridGeometry geometry;  // mass-center attack
  std::uint64_t seed = 0;
  Method attacked_method = Method::SM;
  AttributionConfig attribution;
};

struct AttackResult {
  VectorXd x_adv;
  bool feasible = false;
  std::vector<double> loss_trace;  // index 0 is the unperturbed input
  int best_step = 0;
  double linf_norm = 0.0;
};

AttackResult pgd_attack(const Network& net, const VectorXd& x,
                        const AttackConfig& cfg);

// Differentiable attack losses over graph nodes (exposed for tests).
Var topk_loss(Var z_adv, const std::vector<int>& topk_set);
Var mass_center_loss(Var z_adv, const Eigen::Vector2d& original_center,
                     const metrics::GridGeometry& geom);
Var manipulate_loss(Var z_adv, const VectorXd& target_map, Var h_adv,
                    const VectorXd& h_orig, double beta0, double beta1);

VectorXd random_perturbation(const VectorXd& x, double epsilon_inf,
                             const DataRange& range, std::uint64_t seed);

std::string to_json(const AttackResult& result);

}  // namespace smoothgeo::attacks
