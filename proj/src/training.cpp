#include "smoothgeo/training.hpp"

#include "smoothgeo/geometry.hpp"
#include "smoothgeo/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace smoothgeo::training {

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,accuracy,mean_top_eigenvalue,wall_seconds\n";
  for (std::size_t i = 0; i < epochs.size(); ++i)
    out << i + 1 << ',' << epochs[i].loss << ',' << epochs[i].accuracy << ','
        << epochs[i].mean_top_eigenvalue << ',' << epochs[i].wall_seconds
        << '\n';
  return out.str();
}

double accuracy(const Network& net, const data::Dataset& dataset) {
  int correct = 0;
  for (int i = 0; i < dataset.size(); ++i)
    if (nn::predict(net, dataset.scaled_input(i)) == dataset.labels[i])
      ++correct;
  return dataset.size() ? double(correct) / dataset.size() : 0.0;
}

Var ssr_penalty_node(const Network& net, const NetworkVars& vars, Graph& g,
                     const std::vector<VectorXd>& batch, double s,
                     double beta) {
  if (beta < 0) throw std::runtime_error("ssr_penalty: beta must be >= 0");
  if (s <= 0) throw std::runtime_error("ssr_penalty: s must be > 0");
  if (batch.empty()) throw std::runtime_error("ssr_penalty: empty batch");
  if (beta == 0.0) return g.leaf_scalar(0.0);

  const int c = net.class_count();
  Var acc;
  for (const VectorXd& x : batch) {
    // top eigenvector from the c x c system, held constant in the graph
    const geometry::HessianFactorization fac =
        geometry::closed_form_hessian(net, x);
    Var u = g.leaf_vector(fac.top_eigvec);

    Var xv = g.leaf_vector(x, /*requires_grad=*/true);
    Var logits = nn::forward_from(vars, net, xv);
    Var p = ad::softmax(logits);

    // u^T W A W^T u = sum_i p_i v_i^2 - (sum_i p_i v_i)^2 with v = W^T u
    Var t1, t2;
    for (int i = 0; i < c; ++i) {
      Var gi = g.backward(ad::select(logits, i), {xv},
                          /*create_graph=*/true)[0];
      Var vi = ad::dot(gi, u);
      Var pi = ad::select(p, i);
      Var a = ad::mul(pi, ad::square(vi));
      Var b = ad::mul(pi, vi);
      t1 = t1.valid() ? ad::add(t1, a) : a;
      t2 = t2.valid() ? ad::add(t2, b) : b;
    }
    Var pen = ad::sub(t1, ad::square(t2));
    acc = acc.valid() ? ad::add(acc, pen) : pen;
  }
  return ad::scale(acc, beta * s / batch.size());
}

double ssr_penalty(const Network& net, const std::vector<VectorXd>& batch,
                   double s, double beta) {
  Graph g;
  NetworkVars vars = nn::bind(net, g, /*trainable=*/true);
  return ssr_penalty_node(net, vars, g, batch, s, beta).scalar();
}

namespace {

struct Sgd {
  double lr;
  double momentum;
  std::vector<ad::MatrixXd> vel_w;
  std::vector<VectorXd> vel_b;

  void init(const Network& net) {
    for (const nn::Layer& l : net.layers) {
      vel_w.push_back(ad::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      vel_b.push_back(VectorXd::Zero(l.bias.size()));
    }
  }

  void step(Network& net, const std::vector<Var>& wgrads,
            const std::vector<Var>& bgrads) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (momentum > 0) {
        vel_w[i] = momentum * vel_w[i] + wgrads[i].matrix();
        vel_b[i] = momentum * vel_b[i] + bgrads[i].vector();
        net.layers[i].weight -= lr * vel_w[i];
        net.layers[i].bias -= lr * vel_b[i];
      } else {
        net.layers[i].weight -= lr * wgrads[i].matrix();
        net.layers[i].bias -= lr * bgrads[i].vector();
      }
    }
  }
};

VectorXd pgd_l2_example(const Network& net, const VectorXd& x, int label,
                        double delta2, int inner_steps) {
  if (delta2 <= 0 || inner_steps <= 0) return x;
  const Network surrogate = nn::with_softplus(net, 50.0);
  const double alpha = 2.5 * delta2 / inner_steps;
  VectorXd xt = x;
  for (int t = 0; t < inner_steps; ++t) {
    Graph g;
    Var xv = g.leaf_vector(xt, true);
    Var loss = ad::cross_entropy(nn::forward_logits(surrogate, g, xv), label);
    VectorXd grad = g.backward(loss, {xv})[0].vector();
    const double n = grad.norm();
    if (n < 1e-12) break;
    xt += alpha * grad / n;  // ascend the loss
    VectorXd diff = xt - x;
    const double dn = diff.norm();
    if (dn > delta2) xt = x + diff * (delta2 / dn);
    xt = xt.cwiseMax(0.0).cwiseMin(1.0);
  }
  return xt;
}

double mean_top_eigenvalue(const Network& net, const data::Dataset& ds,
                           int limit) {
  const int n = std::min(limit, ds.size());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const geometry::HessianFactorization fac =
        geometry::closed_form_hessian(net, ds.scaled_input(i));
    acc += fac.eigvals[0];
  }
  return n ? acc / n : 0.0;
}

std::pair<Network, TrainHistory> run_training(const data::Dataset& dataset,
                                              const TrainConfig& cfg) {
  if (dataset.size() == 0) throw std::runtime_error("train: empty dataset");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::runtime_error("train: bad epochs/batch size");
  const int c = dataset.class_count();
  for (int l : dataset.labels)
    if (l < 0 || l >= c) throw std::runtime_error("train: label out of range");

  std::vector<int> dims;
  dims.push_back(dataset.dim());
  for (int h : cfg.hidden) dims.push_back(h);
  if (cfg.hidden.empty()) dims.push_back(32);
  dims.push_back(c);
  Network net = nn::random_network(dims, cfg.seed);

  Sgd opt{cfg.learning_rate, cfg.momentum, {}, {}};
  opt.init(net);

  std::mt19937_64 shuffle_rng(rng::derive_seed(cfg.seed, 0x54A1));
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int batches = 0;

    for (int start = 0; start < dataset.size(); start += cfg.batch_size) {
      const int end = std::min(start + cfg.batch_size, dataset.size());
      std::vector<VectorXd> xs;
      std::vector<int> ys;
      for (int i = start; i < end; ++i) {
        VectorXd x = dataset.scaled_input(order[i]);
        const int y = dataset.labels[order[i]];
        if (cfg.mode == TrainMode::PgdAt)
          x = pgd_l2_example(net, x, y, cfg.pgd_at.delta2,
                             cfg.pgd_at.inner_steps);
        xs.push_back(std::move(x));
        ys.push_back(y);
      }

      Graph g;
      NetworkVars vars = nn::bind(net, g, /*trainable=*/true);
      Var loss;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Var ce = ad::cross_entropy(
            nn::forward_from(vars, net, g.leaf_vector(xs[i])), ys[i]);
        loss = loss.valid() ? ad::add(loss, ce) : ce;
      }
      loss = ad::scale(loss, 1.0 / xs.size());
      if (cfg.mode == TrainMode::Ssr && cfg.ssr.beta > 0)
        loss = ad::add(loss, ssr_penalty_node(net, vars, g, xs, cfg.ssr.s,
                                              cfg.ssr.beta));

      const double lval = loss.scalar();
      if (!std::isfinite(lval))
        throw DivergenceError(epoch, "training diverged at epoch " +
                                         std::to_string(epoch));
      epoch_loss += lval;
      ++batches;

      std::vector<Var> wrt;
      for (Var w : vars.weights) wrt.push_back(w);
      for (Var b : vars.biases) wrt.push_back(b);
      std::vector<Var> grads = g.backward(loss, wrt);
      std::vector<Var> wgrads(grads.begin(),
                              grads.begin() + vars.weights.size());
      std::vector<Var> bgrads(grads.begin() + vars.weights.size(),
                              grads.end());
      opt.step(net, wgrads, bgrads);
    }

    EpochStats stats;
    stats.loss = batches ? epoch_loss / batches : 0.0;
    stats.accuracy = accuracy(net, dataset);
    stats.mean_top_eigenvalue = mean_top_eigenvalue(net, dataset, 32);
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    history.epochs.push_back(stats);
  }
  return {net, history};
}

}  // namespace

std::pair<Network, TrainHistory> train(const data::Dataset& dataset,
                                       const TrainConfig& cfg) {
  return run_training(dataset, cfg);
}

std::pair<Network, TrainHistory> train_natural(const data::Dataset& dataset,
                                               TrainConfig cfg) {
  cfg.mode = TrainMode::Natural;
  return run_training(dataset, cfg);
}

std::pair<Network, TrainHistory> train_ssr(const data::Dataset& dataset,
                                           TrainConfig cfg) {
  cfg.mode = TrainMode::Ssr;
  return run_training(dataset, cfg);
}

std::pair<Network, TrainHistory> train_pgd_at(const data::Dataset& dataset,
                                              TrainConfig cfg) {
  cfg.mode = TrainMode::PgdAt;
  return run_training(dataset, cfg);
}

}  // namespace smoothgeo::training
