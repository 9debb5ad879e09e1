#include "smoothgeo/attribution.hpp"

#include "smoothgeo/rng.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace smoothgeo::attribution {

std::string method_name(Method m) {
  switch (m) {
    case Method::SM: return "SM";
    case Method::IG: return "IG";
    case Method::SG: return "SG";
    case Method::UG: return "UG";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "SM") return Method::SM;
  if (name == "IG") return Method::IG;
  if (name == "SG") return Method::SG;
  if (name == "UG") return Method::UG;
  throw std::runtime_error("unknown attribution method: " + name);
}

QuantityOfInterest resolve_class(const Network& net, const VectorXd& anchor,
                                 const QuantityOfInterest& qoi) {
  QuantityOfInterest fixed = qoi;
  if (fixed.fixed_class < 0) fixed.fixed_class = nn::predict(net, anchor);
  return fixed;
}

VectorXd qoi_gradient(const Network& net, const VectorXd& x,
                      const QuantityOfInterest& qoi) {
  ad::Graph g;
  ad::Var xv = g.leaf_vector(x, true);
  ad::Var q = nn::quantity(net, g, xv, qoi);
  return g.backward(q, {xv})[0].vector();
}

namespace {
AttributionMap finish(VectorXd scores, Method m, const VectorXd& x,
                      const AttributionConfig& cfg) {
  AttributionMap map;
  // IG carries its own (x - x_b) factor; the flag applies to the others
  if (cfg.grad_times_input && m != Method::IG)
    scores = scores.cwiseProduct(x);
  map.scores = std::move(scores);
  map.method = m;
  map.grad_times_input = cfg.grad_times_input;
  return map;
}
}  // namespace

AttributionMap saliency_map(const Network& net, const VectorXd& x,
                            const AttributionConfig& cfg) {
  const QuantityOfInterest qoi = resolve_class(net, x, cfg.qoi);
  return finish(qoi_gradient(net, x, qoi), Method::SM, x, cfg);
}

AttributionMap integrated_gradients(const Network& net, const VectorXd& x,
                                    const AttributionConfig& cfg) {
  if (cfg.ig_steps < 1)
    throw std::runtime_error("integrated_gradients: ig_steps must be >= 1");
  const QuantityOfInterest qoi = resolve_class(net, x, cfg.qoi);
  VectorXd base = cfg.ig_baseline.size() ? cfg.ig_baseline
                                         : VectorXd::Zero(x.size());
  if (base.size() != x.size())
    throw std::runtime_error("integrated_gradients: baseline length mismatch");
  const VectorXd diff = x - base;
  VectorXd acc = VectorXd::Zero(x.size());
  const int m = cfg.ig_steps;
  for (int t = 1; t <= m; ++t) {
    const double alpha = (t - 0.5) / m;  // midpoint rule
    acc += qoi_gradient(net, base + alpha * diff, qoi);
  }
  AttributionMap map;
  map.scores = diff.cwiseProduct(acc / m);
  map.method = Method::IG;
  map.grad_times_input = cfg.grad_times_input;
  return map;
}

AttributionMap smooth_gradient(const Network& net, const VectorXd& x,
                               const AttributionConfig& cfg) {
  if (cfg.sg_samples < 1)
    throw std::runtime_error("smooth_gradient: sg_samples must be >= 1");
  const QuantityOfInterest qoi = resolve_class(net, x, cfg.qoi);
  if (cfg.sg_sigma == 0.0)
    return finish(qoi_gradient(net, x, qoi), Method::SG, x, cfg);
  rng::Rng r(rng::derive_seed(cfg.seed, 0x5601));
  VectorXd acc = VectorXd::Zero(x.size());
  for (int s = 0; s < cfg.sg_samples; ++s) {
    const VectorXd z = x + cfg.sg_sigma * r.normal_vector(static_cast<int>(x.size()));
    acc += qoi_gradient(net, z, qoi);
  }
  return finish(acc / cfg.sg_samples, Method::SG, x, cfg);
}

AttributionMap uniform_gradient(const Network& net, const VectorXd& x,
                                const AttributionConfig& cfg) {
  if (cfg.ug_samples < 1)
    throw std::runtime_error("uniform_gradient: ug_samples must be >= 1");
  const QuantityOfInterest qoi = resolve_class(net, x, cfg.qoi);
  if (cfg.ug_radius == 0.0)
    return finish(qoi_gradient(net, x, qoi), Method::UG, x, cfg);
  rng::Rng r(rng::derive_seed(cfg.seed, 0x0603));
  VectorXd acc = VectorXd::Zero(x.size());
  for (int s = 0; s < cfg.ug_samples; ++s) {
    const VectorXd z =
        x + r.uniform_vector(static_cast<int>(x.size()), -cfg.ug_radius,
                             cfg.ug_radius);
    acc += qoi_gradient(net, z, qoi);
  }
  return finish(acc / cfg.ug_samples, Method::UG, x, cfg);
}

AttributionMap compute(Method m, const Network& net, const VectorXd& x,
                       const AttributionConfig& cfg) {
  switch (m) {
    case Method::SM: return saliency_map(net, x, cfg);
    case Method::IG: return integrated_gradients(net, x, cfg);
    case Method::SG: return smooth_gradient(net, x, cfg);
    case Method::UG: return uniform_gradient(net, x, cfg);
  }
  throw std::runtime_error("unreachable");
}

VectorXd normalize_map(const VectorXd& z) {
  const VectorXd a = z.cwiseAbs();
  const double total = a.sum();
  if (total == 0.0) throw std::runtime_error("degenerate attribution");
  return a / total;
}

std::string to_json(const AttributionMap& map) {
  nlohmann::json j;
  j["method"] = method_name(map.method);
  j["d"] = map.scores.size();
  j["grad_times_input"] = map.grad_times_input;
  j["scores"] = std::vector<double>(map.scores.data(),
                                    map.scores.data() + map.scores.size());
  return j.dump();
}

void save_blob(const VectorXd& scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(reinterpret_cast<const char*>(scores.data()),
            static_cast<std::streamsize>(scores.size() * sizeof(double)));
}

VectorXd load_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto bytes = in.tellg();
  if (bytes % sizeof(double) != 0)
    throw std::runtime_error("blob size not a multiple of 8: " + path);
  in.seekg(0);
  VectorXd v(bytes / sizeof(double));
  in.read(reinterpret_cast<char*>(v.data()), bytes);
  return v;
}

}  // namespace smoothgeo::attribution
