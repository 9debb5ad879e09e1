#include "smoothgeo/autodiff.hpp"

#include <cmath>

namespace smoothgeo::ad {

namespace {
using RowMajorMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMat> as_matrix(const Node& n) {
  return Eigen::Map<const RowMajorMat>(n.values.data(), n.shape.rows,
                                       n.shape.cols);
}

void require_same_shape(const char* prim, const Node& a, const Node& b) {
  if (!(a.shape == b.shape)) throw ShapeError(prim, a.shape, b.shape);
}
}  // namespace

std::string Shape::str() const {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

ShapeError::ShapeError(const std::string& primitive, const Shape& a,
                       const Shape& b)
    : std::runtime_error("shape mismatch in " + primitive + ": " + a.str() +
                         " vs " + b.str()) {}

const Shape& Var::shape() const { return graph_->node(idx_).shape; }
const ArrayXd& Var::values() const { return graph_->node(idx_).values; }
bool Var::requires_grad() const { return graph_->node(idx_).requires_grad; }

double Var::scalar() const {
  const Node& n = graph_->node(idx_);
  if (!n.shape.is_scalar())
    throw std::runtime_error("scalar() on non-scalar node " + n.shape.str());
  return n.values[0];
}

VectorXd Var::vector() const { return values().matrix(); }

MatrixXd Var::matrix() const { return as_matrix(graph_->node(idx_)); }

Var Graph::leaf(const ArrayXd& values, Shape shape, bool requires_grad) {
  if (values.size() != shape.size())
    throw std::runtime_error("leaf: values length " +
                             std::to_string(values.size()) +
                             " does not match shape " + shape.str());
  Node n;
  n.shape = shape;
  n.values = values;
  n.op = Op::Leaf;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, size() - 1);
}

Var Graph::leaf_scalar(double v, bool requires_grad) {
  ArrayXd a(1);
  a[0] = v;
  return leaf(a, Shape{1, 1}, requires_grad);
}

Var Graph::leaf_vector(const VectorXd& v, bool requires_grad) {
  return leaf(v.array(), Shape{static_cast<int>(v.size()), 1}, requires_grad);
}

Var Graph::leaf_matrix(const MatrixXd& m, bool requires_grad) {
  RowMajorMat rm = m;
  return leaf(Eigen::Map<const ArrayXd>(rm.data(), rm.size()),
              Shape{static_cast<int>(m.rows()), static_cast<int>(m.cols())},
              requires_grad);
}

Var Graph::emit(Op op, Shape shape, int p0, int p1, double attr0, double attr1,
                ArrayXd payload) {
  Node n;
  n.shape = shape;
  n.op = op;
  n.parents = {p0, p1};
  n.attr0 = attr0;
  n.attr1 = attr1;
  n.payload = std::move(payload);
  n.requires_grad = (p0 >= 0 && nodes_[p0].requires_grad) ||
                    (p1 >= 0 && nodes_[p1].requires_grad);
  eval(n);
  nodes_.push_back(std::move(n));
  return Var(this, size() - 1);
}

void Graph::eval(Node& n) {
  const Node* a = n.parents[0] >= 0 ? &nodes_[n.parents[0]] : nullptr;
  const Node* b = n.parents[1] >= 0 ? &nodes_[n.parents[1]] : nullptr;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      n.values = a->values + b->values;
      break;
    case Op::Sub:
      n.values = a->values - b->values;
      break;
    case Op::Mul:
      n.values = a->values * b->values;
      break;
    case Op::Div:
      n.values = a->values / b->values;
      break;
    case Op::Caffine:
      n.values = n.attr0 * a->values + n.attr1;
      break;
    case Op::Smul:
      n.values = a->values[0] * b->values;
      break;
    case Op::MatVec:
      n.values = (as_matrix(*a) * b->values.matrix()).array();
      break;
    case Op::MatTVec:
      n.values = (as_matrix(*a).transpose() * b->values.matrix()).array();
      break;
    case Op::Outer: {
      RowMajorMat o = a->values.matrix() * b->values.matrix().transpose();
      n.values = Eigen::Map<const ArrayXd>(o.data(), o.size());
      break;
    }
    case Op::Sum: {
      ArrayXd s(1);
      s[0] = a->values.sum();
      n.values = s;
      break;
    }
    case Op::Dot: {
      ArrayXd s(1);
      s[0] = (a->values * b->values).sum();
      n.values = s;
      break;
    }
    case Op::Select: {
      ArrayXd s(1);
      s[0] = a->values[static_cast<int>(n.attr0)];
      n.values = s;
      break;
    }
    case Op::Scatter:
      n.values = ArrayXd::Zero(n.shape.size());
      n.values[static_cast<int>(n.attr0)] = a->values[0];
      break;
    case Op::Relu:
      n.values = a->values.max(0.0);
      break;
    case Op::Softplus: {
      // overflow-safe: max(v,0) + log1p(exp(-beta*|v|)) / beta
      const double beta = n.attr0;
      n.values = a->values.max(0.0) +
                 (-beta * a->values.abs()).exp().log1p() / beta;
      break;
    }
    case Op::Sigmoid: {
      const double beta = n.attr0;
      n.values = 0.5 * (0.5 * beta * a->values).tanh() + 0.5;
      break;
    }
    case Op::Exp:
      n.values = a->values.exp();
      break;
    case Op::Log:
      n.values = a->values.log();
      break;
    case Op::Sqrt:
      n.values = a->values.sqrt();
      break;
    case Op::MaskMul:
      n.values = a->values * n.payload;
      break;
  }
}

// ----- builders -------------------------------------------------------------

namespace {
Graph* common_graph(Var a, Var b) {
  if (a.graph() != b.graph())
    throw std::runtime_error("operands belong to different graphs");
  return a.graph();
}
}  // namespace

Var add(Var a, Var b) {
  Graph* g = common_graph(a, b);
  require_same_shape("add", g->node(a.index()), g->node(b.index()));
  return g->emit(Op::Add, a.shape(), a.index(), b.index());
}

Var sub(Var a, Var b) {
  Graph* g = common_graph(a, b);
  require_same_shape("sub", g->node(a.index()), g->node(b.index()));
  return g->emit(Op::Sub, a.shape(), a.index(), b.index());
}

Var mul(Var a, Var b) {
  Graph* g = common_graph(a, b);
  require_same_shape("mul", g->node(a.index()), g->node(b.index()));
  return g->emit(Op::Mul, a.shape(), a.index(), b.index());
}

Var div(Var a, Var b) {
  Graph* g = common_graph(a, b);
  require_same_shape("div", g->node(a.index()), g->node(b.index()));
  return g->emit(Op::Div, a.shape(), a.index(), b.index());
}

Var caffine(Var a, double c1, double c0) {
  return a.graph()->emit(Op::Caffine, a.shape(), a.index(), -1, c1, c0);
}

Var neg(Var a) { return caffine(a, -1.0, 0.0); }
Var scale(Var a, double c) { return caffine(a, c, 0.0); }

Var smul(Var s, Var a) {
  Graph* g = common_graph(s, a);
  if (!s.shape().is_scalar())
    throw ShapeError("smul", s.shape(), Shape{1, 1});
  return g->emit(Op::Smul, a.shape(), s.index(), a.index());
}

Var matvec(Var w, Var x) {
  Graph* g = common_graph(w, x);
  if (w.shape().cols != x.shape().rows || !x.shape().is_vector())
    throw ShapeError("matvec", w.shape(), x.shape());
  return g->emit(Op::MatVec, Shape{w.shape().rows, 1}, w.index(), x.index());
}

Var mat_t_vec(Var w, Var y) {
  Graph* g = common_graph(w, y);
  if (w.shape().rows != y.shape().rows || !y.shape().is_vector())
    throw ShapeError("mat_t_vec", w.shape(), y.shape());
  return g->emit(Op::MatTVec, Shape{w.shape().cols, 1}, w.index(), y.index());
}

Var outer(Var a, Var b) {
  Graph* g = common_graph(a, b);
  if (!a.shape().is_vector() || !b.shape().is_vector())
    throw ShapeError("outer", a.shape(), b.shape());
  return g->emit(Op::Outer, Shape{a.shape().rows, b.shape().rows}, a.index(),
                 b.index());
}

Var sum(Var a) { return a.graph()->emit(Op::Sum, Shape{1, 1}, a.index(), -1); }

Var dot(Var a, Var b) {
  Graph* g = common_graph(a, b);
  require_same_shape("dot", g->node(a.index()), g->node(b.index()));
  return g->emit(Op::Dot, Shape{1, 1}, a.index(), b.index());
}

Var select(Var a, int i) {
  if (i < 0 || i >= a.shape().size())
    throw std::runtime_error("select: index " + std::to_string(i) +
                             " out of range for shape " + a.shape().str());
  return a.graph()->emit(Op::Select, Shape{1, 1}, a.index(), -1,
                         static_cast<double>(i));
}

Var scatter(Var s, int i, int size) {
  if (!s.shape().is_scalar()) throw ShapeError("scatter", s.shape(), Shape{1, 1});
  if (i < 0 || i >= size)
    throw std::runtime_error("scatter: index out of range");
  return s.graph()->emit(Op::Scatter, Shape{size, 1}, s.index(), -1,
                         static_cast<double>(i));
}

Var relu(Var a) { return a.graph()->emit(Op::Relu, a.shape(), a.index(), -1); }

Var softplus(Var a, double beta) {
  if (beta <= 0) throw std::runtime_error("softplus: beta must be positive");
  return a.graph()->emit(Op::Softplus, a.shape(), a.index(), -1, beta);
}

Var sigmoid(Var a, double beta) {
  return a.graph()->emit(Op::Sigmoid, a.shape(), a.index(), -1, beta);
}

Var exp(Var a) { return a.graph()->emit(Op::Exp, a.shape(), a.index(), -1); }
Var log(Var a) { return a.graph()->emit(Op::Log, a.shape(), a.index(), -1); }
Var sqrt(Var a) { return a.graph()->emit(Op::Sqrt, a.shape(), a.index(), -1); }

Var mask_mul(Var a, const ArrayXd& mask) {
  if (mask.size() != a.shape().size())
    throw ShapeError("mask_mul", a.shape(),
                     Shape{static_cast<int>(mask.size()), 1});
  return a.graph()->emit(Op::MaskMul, a.shape(), a.index(), -1, 0, 0, mask);
}

// ----- composites -----------------------------------------------------------

Var softmax(Var logits) {
  // the shift is a constant; softmax is invariant to it so the derivative
  // through `logits` stays exact
  const double m = logits.values().maxCoeff();
  Var e = exp(caffine(logits, 1.0, -m));
  Var inv = div(logits.graph()->leaf_scalar(1.0), sum(e));
  return smul(inv, e);
}

Var cross_entropy(Var logits, int label) {
  if (label < 0 || label >= logits.shape().size())
    throw std::runtime_error("cross_entropy: label out of range");
  const double m = logits.values().maxCoeff();
  Var lse = caffine(log(sum(exp(caffine(logits, 1.0, -m)))), 1.0, m);
  return sub(lse, select(logits, label));
}

Var square(Var a) { return mul(a, a); }

Var smooth_abs(Var a, double eps) {
  return sqrt(caffine(square(a), 1.0, eps));
}

// ----- backward -------------------------------------------------------------

std::vector<Var> Graph::backward(Var root, const std::vector<Var>& wrt,
                                 bool create_graph) {
  if (root.graph() != this)
    throw std::runtime_error("backward: root belongs to a different graph");
  if (!root.shape().is_scalar())
    throw std::runtime_error("backward: root must be scalar, got " +
                             root.shape().str());

  const int root_idx = root.index();
  std::vector<Var> adj(root_idx + 1);
  adj[root_idx] = leaf_scalar(1.0, create_graph);

  auto accumulate = [&](int parent, Var grad) {
    if (parent < 0) return;
    if (!nodes_[parent].requires_grad) return;
    adj[parent] = adj[parent].valid() ? add(adj[parent], grad) : grad;
  };

  for (int i = root_idx; i >= 0; --i) {
    if (!adj[i].valid()) continue;
    const Op op = nodes_[i].op;
    if (op == Op::Leaf) continue;
    Var u = adj[i];
    Var out(this, i);
    const int p0 = nodes_[i].parents[0];
    const int p1 = nodes_[i].parents[1];
    Var a = p0 >= 0 ? Var(this, p0) : Var();
    Var b = p1 >= 0 ? Var(this, p1) : Var();
    const double attr0 = nodes_[i].attr0;
    switch (op) {
      case Op::Leaf:
        break;
      case Op::Add:
        accumulate(p0, u);
        accumulate(p1, u);
        break;
      case Op::Sub:
        accumulate(p0, u);
        accumulate(p1, neg(u));
        break;
      case Op::Mul:
        accumulate(p0, mul(u, b));
        accumulate(p1, mul(u, a));
        break;
      case Op::Div:
        accumulate(p0, div(u, b));
        accumulate(p1, neg(mul(u, div(out, b))));
        break;
      case Op::Caffine:
        accumulate(p0, scale(u, attr0));
        break;
      case Op::Smul:
        accumulate(p0, dot(u, b));
        accumulate(p1, smul(a, u));
        break;
      case Op::MatVec:
        accumulate(p0, outer(u, b));
        accumulate(p1, mat_t_vec(a, u));
        break;
      case Op::MatTVec:
        accumulate(p0, outer(b, u));
        accumulate(p1, matvec(a, u));
        break;
      case Op::Outer:
        accumulate(p0, matvec(u, b));
        accumulate(p1, mat_t_vec(u, a));
        break;
      case Op::Sum:
        accumulate(p0, smul(u, leaf(ArrayXd::Ones(a.shape().size()),
                                    a.shape())));
        break;
      case Op::Dot:
        accumulate(p0, smul(u, b));
        accumulate(p1, smul(u, a));
        break;
      case Op::Select:
        accumulate(p0, scatter(u, static_cast<int>(attr0), a.shape().size()));
        break;
      case Op::Scatter:
        accumulate(p0, select(u, static_cast<int>(attr0)));
        break;
      case Op::Relu:
        accumulate(p0,
                   mask_mul(u, (a.values() > 0.0).cast<double>()));
        break;
      case Op::Softplus:
        accumulate(p0, mul(u, sigmoid(a, attr0)));
        break;
      case Op::Sigmoid:
        // d sigmoid(beta x) = beta s (1 - s)
        accumulate(p0,
                   scale(mul(u, mul(out, caffine(out, -1.0, 1.0))), attr0));
        break;
      case Op::Exp:
        accumulate(p0, mul(u, out));
        break;
      case Op::Log:
        accumulate(p0, div(u, a));
        break;
      case Op::Sqrt:
        accumulate(p0, div(u, scale(out, 2.0)));
        break;
      case Op::MaskMul:
        accumulate(p0, mask_mul(u, nodes_[i].payload));
        break;
    }
  }

  std::vector<Var> grads;
  grads.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.graph() != this)
      throw std::runtime_error("backward: wrt node from a different graph");
    Var gv = (w.index() <= root_idx && adj[w.index()].valid())
                 ? adj[w.index()]
                 : leaf(ArrayXd::Zero(w.shape().size()), w.shape());
    if (!create_graph) node(gv.index()).requires_grad = false;
    grads.push_back(gv);
  }
  return grads;
}

// ----- finite differences ---------------------------------------------------

VectorXd finite_diff_gradient(const ScalarFn& fn, const VectorXd& x, double h) {
  if (h <= 0) throw std::runtime_error("finite_diff_gradient: h must be > 0");
  VectorXd g(x.size());
  VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = fn(xp);
    xp[i] = x[i] - h;
    const double fm = fn(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

MatrixXd finite_diff_hessian(const ScalarFn& fn, const VectorXd& x, double h) {
  if (h <= 0) throw std::runtime_error("finite_diff_hessian: h must be > 0");
  const int d = static_cast<int>(x.size());
  MatrixXd hess(d, d);
  const double f0 = fn(x);
  VectorXd xp = x;
  for (int i = 0; i < d; ++i) {
    xp[i] = x[i] + h;
    const double fp = fn(xp);
    xp[i] = x[i] - h;
    const double fm = fn(xp);
    xp[i] = x[i];
    hess(i, i) = (fp - 2 * f0 + fm) / (h * h);
    for (int j = i + 1; j < d; ++j) {
      xp[i] = x[i] + h;
      xp[j] = x[j] + h;
      const double fpp = fn(xp);
      xp[j] = x[j] - h;
      const double fpm = fn(xp);
      xp[i] = x[i] - h;
      const double fmm = fn(xp);
      xp[j] = x[j] + h;
      const double fmp = fn(xp);
      xp[i] = x[i];
      xp[j] = x[j];
      hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4 * h * h);
    }
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace smoothgeo::ad
