#pragma once

// Reverse-mode automatic differentiation on dense double tensors.
// The tape records whole-tensor primitives; backward() emits the adjoint
// computation as new tape nodes, so gradients are differentiable again
// (double backprop) without any special casing.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothgeo::ad {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Shape {
  int rows = 0;
  int cols = 1;

  int size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool is_vector() const { return cols == 1; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Thrown on primitive shape mismatches; message names the primitive and the
// offending shapes.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& primitive, const Shape& a, const Shape& b);
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,       // elementwise, same shape
  Div,       // elementwise, same shape
  Caffine,   // c1 * a + c0, elementwise with scalar constants
  Smul,      // scalar node * tensor node
  MatVec,    // (m x n) * (n) -> (m)
  MatTVec,   // (m x n)^T * (m) -> (n)
  Outer,     // (m) x (n) -> (m x n)
  Sum,       // -> scalar
  Dot,       // -> scalar
  Select,    // pick one entry -> scalar
  Scatter,   // place scalar at index in a zero vector
  Relu,
  Softplus,  // attr = beta
  Sigmoid,   // attr = beta, sigmoid(beta * a)
  Exp,
  Log,
  Sqrt,
  MaskMul,   // elementwise product with a constant array
};

struct Node {
  Shape shape;
  ArrayXd values;  // row-major flattening for matrices
  Op op = Op::Leaf;
  std::array<int, 2> parents{-1, -1};
  bool requires_grad = false;
  double attr0 = 0.0;  // beta / c1 / index
  double attr1 = 0.0;  // c0
  ArrayXd payload;     // constant mask for MaskMul
};

class Graph;

// Lightweight handle into a Graph's tape.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int idx) : graph_(g), idx_(idx) {}

  bool valid() const { return graph_ != nullptr; }
  int index() const { return idx_; }
  Graph* graph() const { return graph_; }
  const Shape& shape() const;
  const ArrayXd& values() const;
  double scalar() const;
  VectorXd vector() const;
  MatrixXd matrix() const;
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  int idx_ = -1;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(const ArrayXd& values, Shape shape, bool requires_grad = false);
  Var leaf_scalar(double v, bool requires_grad = false);
  Var leaf_vector(const VectorXd& v, bool requires_grad = false);
  Var leaf_matrix(const MatrixXd& m, bool requires_grad = false);  // row-major

  const Node& node(int idx) const { return nodes_[idx]; }
  Node& node(int idx) { return nodes_[idx]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Gradients of a scalar root w.r.t. each listed node. Nodes not reachable
  // from the root get a zero gradient of matching shape. With create_graph
  // the returned Vars stay differentiable.
  std::vector<Var> backward(Var root, const std::vector<Var>& wrt,
                            bool create_graph = false);

  Var emit(Op op, Shape shape, int p0, int p1, double attr0 = 0.0,
           double attr1 = 0.0, ArrayXd payload = ArrayXd());

 private:
  void eval(Node& n);
  std::vector<Node> nodes_;
};

// ----- primitive builders ---------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var caffine(Var a, double c1, double c0);  // c1*a + c0
Var neg(Var a);
Var scale(Var a, double c);
Var smul(Var s, Var a);  // scalar node times tensor
Var matvec(Var w, Var x);
Var mat_t_vec(Var w, Var y);
Var outer(Var a, Var b);
Var sum(Var a);
Var dot(Var a, Var b);
Var select(Var a, int i);
Var scatter(Var s, int i, int size);
Var relu(Var a);
Var softplus(Var a, double beta);
Var sigmoid(Var a, double beta = 1.0);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var mask_mul(Var a, const ArrayXd& mask);

// ----- composites -----------------------------------------------------------

Var softmax(Var logits);                 // shift-invariant
Var cross_entropy(Var logits, int label);  // -log p_y
Var square(Var a);
Var smooth_abs(Var a, double eps = 1e-12);  // sqrt(a^2 + eps)

// ----- finite-difference oracles -------------------------------------------

using ScalarFn = std::function<double(const VectorXd&)>;

VectorXd finite_diff_gradient(const ScalarFn& fn, const VectorXd& x,
                              double h = 1e-3);
MatrixXd finite_diff_hessian(const ScalarFn& fn, const VectorXd& x,
                             double h = 1e-3);

}  // namespace smoothgeo::ad
