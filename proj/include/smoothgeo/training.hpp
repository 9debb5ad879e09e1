#pragma once

// Trainers over the dense networks: natural cross-entropy minimization,
// Smooth Surface Regularization on the top input-Hessian eigenvalue, and a
// PGD adversarial-training baseline.

#include "smoothgeo/dataset.hpp"
#include "smoothgeo/nn.hpp"

namespace smoothgeo::training {

using ad::Graph;
using ad::Var;
using ad::VectorXd;
using nn::Network;
using nn::NetworkVars;

enum class TrainMode { Natural, Ssr, PgdAt };

struct TrainConfig {
  TrainMode mode = TrainMode::Natural;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.0;  // 0 selects plain SGD
  std::uint64_t seed = 0;

  struct Ssr {
    double beta = 0.3;
    double s = 1.0;  // 1 for [0,1]-scaled inputs, 1e6 for raw [0,255] data
  } ssr;
  struct PgdAt {
    double delta2 = 0.25;
    int inner_steps = 30;
  } pgd_at;

  std::vector<int> hidden;  // hidden layer widths of the fresh network
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_top_eigenvalue = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::string to_csv() const;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& msg)
      : std::runtime_error(msg), epoch(epoch) {}
  int epoch;
};

// Per-batch SSR penalty node: beta * s * mean over the batch of the top
// eigenvalue of W (diag(p) - p p^T) W^T, realized as u^T H u with the top
// eigenvector u held constant so the node stays differentiable in the
// parameters.
Var ssr_penalty_node(const Network& net, const NetworkVars& vars, Graph& g,
                     const std::vector<VectorXd>& batch, double s, double beta);
double ssr_penalty(const Network& net, const std::vector<VectorXd>& batch,
                   double s, double beta);

std::pair<Network, TrainHistory> train(const data::Dataset& dataset,
                                       const TrainConfig& cfg);

std::pair<Network, TrainHistory> train_natural(const data::Dataset& dataset,
                                               TrainConfig cfg);
std::pair<Network, TrainHistory> train_ssr(const data::Dataset& dataset,
                                           TrainConfig cfg);
std::pair<Network, TrainHistory> train_pgd_at(const data::Dataset& dataset,
                                              TrainConfig cfg);

double accuracy(const Network& net, const data::Dataset& dataset);

}  // namespace smoothgeo::training
