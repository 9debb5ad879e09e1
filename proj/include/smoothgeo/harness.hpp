#pragma once

// Experiment drivers, theory-check runner, figure emitters and the
// key=value config file used by the CLI.

#include "smoothgeo/attacks.hpp"
#include "smoothgeo/dataset.hpp"
#include "smoothgeo/geometry.hpp"
#include "smoothgeo/training.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>

namespace smoothgeo::harness {

using attribution::Method;
using metrics::MetricReport;
using nn::Network;

// Fans indexed work out to SMOOTHGEO_WORKERS threads (default: hardware
// concurrency); results must be written to per-index slots.
int worker_count();
void parallel_for(int n, const std::function<void(int)>& fn);

struct ExperimentSpec {
  std::vector<double> epsilon_grid{2, 4, 8, 16};  // in data-range units
  int k = 4;
  int image_count = 100;
  std::uint64_t seed = 0;
  int attack_steps = 50;
  double surrogate_beta = 50.0;
  int mc_samples = 50;       // SG/UG/IG sample counts for evaluation
  int attack_mc_samples = 8;  // frozen-noise samples inside the attack loop
  std::vector<Method> methods{Method::SM, Method::IG, Method::SG, Method::UG};
  std::vector<attacks::AttackKind> attack_kinds{attacks::AttackKind::TopK};
  // Attribution quantity: the predicted class's pre- or post-softmax score.
  // The regularization comparison reads the post-softmax score, the
  // quantity whose input curvature the Hessian penalty controls.
  nn::QuantityOfInterest::Stage qoi_stage =
      nn::QuantityOfInterest::Stage::PreSoftmax;
};

// Evaluation preset for one dataset: noise scales on the [0,1] model scale.
attribution::AttributionConfig make_attribution_config(
    const data::Dataset& ds, Method m, const ExperimentSpec& spec);

// Inputs used for evaluation: the first N correctly-classified examples.
std::vector<int> select_inputs(const Network& net, const data::Dataset& ds,
                               int count);

struct RobustnessResult {
  // key "<method>_<attack>", e.g. "SM_topk"
  std::map<std::string, MetricReport> reports;
  std::string to_csv() const;
  std::string to_json() const;
};

RobustnessResult run_robustness_experiment(const Network& net,
                                           const data::Dataset& ds,
                                           const ExperimentSpec& spec);

struct RegularizationResult {
  std::map<std::string, RobustnessResult> per_model;  // keyed by model name
  std::map<std::string, training::TrainHistory> histories;
  std::map<std::string, double> accuracies;
  std::string to_csv() const;
};

RegularizationResult run_regularization_experiment(
    const std::map<std::string, Network>& models, const data::Dataset& ds,
    const ExperimentSpec& spec);

// Attacks target SM; the found perturbation is scored under every method.
RobustnessResult run_transfer_experiment(const Network& net,
                                         const data::Dataset& ds,
                                         const ExperimentSpec& spec);

struct TheoryCheckSpec {
  std::uint64_t seed = 0;
  int prop3_trials = 10;
  int eigen_trick_trials = 20;
  int thm2_trials = 50;
  int thm3_nets = 3;
  int thm3_pairs = 200;
  int prop1_nets = 3;
  int prop1_samples = 2000;
  int prop2_trials = 200;
  int triangle_trials = 10;
};

std::vector<geometry::CheckReport> run_theory_checks(
    const TheoryCheckSpec& spec);
std::string checks_to_json(const std::vector<geometry::CheckReport>& checks);
bool all_pass(const std::vector<geometry::CheckReport>& checks);

// Individual checks (the acceptance suite drives them at full sample counts).
geometry::CheckReport check_prop3_exactness(std::uint64_t seed, int trials);
geometry::CheckReport check_eigen_trick(std::uint64_t seed, int trials);
geometry::CheckReport check_theorem2_bound(std::uint64_t seed, int trials);
geometry::CheckReport check_theorem3(std::uint64_t seed, int nets, int pairs);
geometry::CheckReport check_prop1(std::uint64_t seed, int nets, int samples);
geometry::CheckReport check_prop2_algebra(std::uint64_t seed, int trials);
geometry::CheckReport check_triangle(std::uint64_t seed, int trials);

// ----- figure emitters --------------------------------------------------

void emit_heatmap(const Eigen::VectorXd& scores,
                  const metrics::GridGeometry& geom,
                  const std::filesystem::path& path);

void emit_contour_field(const Network& net,
                        const Eigen::Vector2d& region_lo,
                        const Eigen::Vector2d& region_hi,
                        const std::vector<Method>& methods,
                        const std::filesystem::path& path);

// ----- key=value config ---------------------------------------------------

class KvConfig {
 public:
  static KvConfig from_file(const std::filesystem::path& path);
  static KvConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_list(const std::string& key,
                               std::vector<double> fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace smoothgeo::harness
