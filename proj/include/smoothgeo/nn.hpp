#pragma once

// Dense feed-forward networks with switchable ReLU/softplus activations,
// prediction, quantity-of-interest selection, input Jacobians and
// checkpoint I/O.

#include "smoothgeo/autodiff.hpp"

#include <filesystem>
#include <vector>

namespace smoothgeo::nn {

using ad::Graph;
using ad::MatrixXd;
using ad::Var;
using ad::VectorXd;

enum class Activation { ReLU, Softplus };

struct Layer {
  MatrixXd weight;  // out x in
  VectorXd bias;
};

struct Network {
  std::vector<Layer> layers;
  Activation activation = Activation::ReLU;
  double beta = 50.0;  // softplus sharpness, ignored in ReLU mode

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int class_count() const { return static_cast<int>(layers.back().weight.rows()); }
  void validate() const;  // dimension chaining, c >= 2, d >= 1
};

struct QuantityOfInterest {
  enum class Stage { PreSoftmax, PostSoftmax };
  Stage stage = Stage::PreSoftmax;
  int fixed_class = -1;  // -1 selects the predicted class
};

// Per-graph handles to a network's parameters; trainable when requested.
struct NetworkVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

NetworkVars bind(const Network& net, Graph& g, bool trainable);

// Forward pass from already-bound parameters; x is any graph vector node.
Var forward_from(const NetworkVars& vars, const Network& net, Var x);

// Convenience: bind constants and run; x given as plain data.
Var forward_logits(const Network& net, Graph& g, const VectorXd& x,
                   bool input_grad = false);
Var forward_logits(const Network& net, Graph& g, Var x);

int predict(const Network& net, const VectorXd& x);
int argmax_smallest_tie(const VectorXd& v);

// Scalar quantity-of-interest node built on `logits`.
Var quantity(Var logits, const QuantityOfInterest& qoi);
Var quantity(const Network& net, Graph& g, Var x, const QuantityOfInterest& qoi);

// Surrogate sharing the same weights with Softplus(beta) activations.
Network with_softplus(const Network& net, double beta);

// d x c matrix whose column i is the gradient of logit i w.r.t. the input.
MatrixXd input_jacobian(const Network& net, const VectorXd& x);

struct CheckpointMeta {
  std::string mode = "untrained";
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { CorruptHeader, TruncatedPayload, VersionMismatch, Io };
  CheckpointError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind(kind) {}
  Kind kind;
};

void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});
Network load_checkpoint(const std::filesystem::path& path,
                        CheckpointMeta* meta = nullptr);

// Random dense network, He-style initialization.
Network random_network(const std::vector<int>& dims, std::uint64_t seed,
                       Activation act = Activation::ReLU, double beta = 50.0);

}  // namespace smoothgeo::nn
