#pragma once

// Gradient-based attribution methods: Saliency Map, Integrated Gradients,
// Smooth Gradient and Uniform Gradient, plus the shared normalization n(z).

#include "smoothgeo/nn.hpp"

#include <cstdint>
#include <string>

namespace smoothgeo::attribution {

using ad::VectorXd;
using nn::Network;
using nn::QuantityOfInterest;

enum class Method { SM, IG, SG, UG };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct AttributionConfig {
  QuantityOfInterest qoi;
  VectorXd ig_baseline;     // defaults to zeros when empty
  int ig_steps = 50;
  double sg_sigma = 0.1;
  int sg_samples = 50;
  double ug_radius = 0.2;
  int ug_samples = 50;
  std::uint64_t seed = 0;
  bool grad_times_input = false;
};

struct AttributionMap {
  VectorXd scores;
  Method method = Method::SM;
  bool grad_times_input = false;
};

// Gradient of the quantity of interest at `x`, with the class selector
// resolved once at `anchor` (the unperturbed input) so sampled evaluations
// explain one consistent class.
VectorXd qoi_gradient(const Network& net, const VectorXd& x,
                      const QuantityOfInterest& qoi);
QuantityOfInterest resolve_class(const Network& net, const VectorXd& anchor,
                                 const QuantityOfInterest& qoi);

AttributionMap saliency_map(const Network& net, const VectorXd& x,
                            const AttributionConfig& cfg);
AttributionMap integrated_gradients(const Network& net, const VectorXd& x,
                                    const AttributionConfig& cfg);
AttributionMap smooth_gradient(const Network& net, const VectorXd& x,
                               const AttributionConfig& cfg);
AttributionMap uniform_gradient(const Network& net, const VectorXd& x,
                                const AttributionConfig& cfg);

AttributionMap compute(Method m, const Network& net, const VectorXd& x,
                       const AttributionConfig& cfg);

// n(z) = |z| / sum_j |z_j|; throws on an all-zero map.
VectorXd normalize_map(const VectorXd& z);

std::string to_json(const AttributionMap& map);
void save_blob(const VectorXd& scores, const std::string& path);
VectorXd load_blob(const std::string& path);

}  // namespace smoothgeo::attribution
