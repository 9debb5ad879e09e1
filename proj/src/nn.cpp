#include "smoothgeo/nn.hpp"

#include "smoothgeo/rng.hpp"

#include <cstring>
#include <fstream>

namespace smoothgeo::nn {

void Network::validate() const {
  if (layers.empty()) throw std::runtime_error("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.weight.rows() != l.bias.size())
      throw std::runtime_error("layer " + std::to_string(i) +
                               ": bias length does not match weight rows");
    if (i + 1 < layers.size() &&
        layers[i + 1].weight.cols() != l.weight.rows())
      throw std::runtime_error("layer dimensions do not chain at layer " +
                               std::to_string(i));
  }
  if (class_count() < 2) throw std::runtime_error("class count must be >= 2");
  if (input_dim() < 1) throw std::runtime_error("input dim must be >= 1");
}

NetworkVars bind(const Network& net, Graph& g, bool trainable) {
  NetworkVars vars;
  for (const Layer& l : net.layers) {
    vars.weights.push_back(g.leaf_matrix(l.weight, trainable));
    vars.biases.push_back(g.leaf_vector(l.bias, trainable));
  }
  return vars;
}

Var forward_from(const NetworkVars& vars, const Network& net, Var x) {
  Var h = x;
  const std::size_t n = vars.weights.size();
  for (std::size_t i = 0; i < n; ++i) {
    Var z = ad::add(ad::matvec(vars.weights[i], h), vars.biases[i]);
    if (i + 1 == n) {
      h = z;  // final layer emits raw logits
    } else if (net.activation == Activation::ReLU) {
      h = ad::relu(z);
    } else {
      h = ad::softplus(z, net.beta);
    }
  }
  return h;
}

Var forward_logits(const Network& net, Graph& g, Var x) {
  if (x.shape().rows != net.input_dim() || !x.shape().is_vector())
    throw ad::ShapeError("forward_logits", x.shape(),
                         ad::Shape{net.input_dim(), 1});
  NetworkVars vars = bind(net, g, false);
  return forward_from(vars, net, x);
}

Var forward_logits(const Network& net, Graph& g, const VectorXd& x,
                   bool input_grad) {
  Var xv = g.leaf_vector(x, input_grad);
  return forward_logits(net, g, xv);
}

int argmax_smallest_tie(const VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

int predict(const Network& net, const VectorXd& x) {
  Graph g;
  Var logits = forward_logits(net, g, x);
  return argmax_smallest_tie(logits.vector());
}

Var quantity(Var logits, const QuantityOfInterest& qoi) {
  const int c = logits.shape().rows;
  int cls = qoi.fixed_class;
  if (cls < 0) cls = argmax_smallest_tie(logits.vector());
  if (cls >= c) throw std::runtime_error("quantity: class index out of range");
  if (qoi.stage == QuantityOfInterest::Stage::PreSoftmax)
    return ad::select(logits, cls);
  return ad::select(ad::softmax(logits), cls);
}

Var quantity(const Network& net, Graph& g, Var x,
             const QuantityOfInterest& qoi) {
  return quantity(forward_logits(net, g, x), qoi);
}

Network with_softplus(const Network& net, double beta) {
  if (beta <= 0) throw std::runtime_error("with_softplus: beta must be > 0");
  Network s = net;
  s.activation = Activation::Softplus;
  s.beta = beta;
  return s;
}

MatrixXd input_jacobian(const Network& net, const VectorXd& x) {
  const int d = net.input_dim();
  const int c = net.class_count();
  MatrixXd jac(d, c);
  for (int i = 0; i < c; ++i) {
    Graph g;
    Var xv = g.leaf_vector(x, true);
    Var logits = forward_logits(net, g, xv);
    Var gi = g.backward(ad::select(logits, i), {xv})[0];
    jac.col(i) = gi.vector();
  }
  return jac;
}

// ----- checkpoint I/O -------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'G', 'E', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw CheckpointError(CheckpointError::Kind::TruncatedPayload,
                          "truncated payload");
  return v;
}
}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta) {
  net.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw CheckpointError(CheckpointError::Kind::Io,
                          "cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  write_le(out, kVersion);
  write_le(out, static_cast<std::uint32_t>(
                    net.activation == Activation::Softplus ? 1 : 0));
  write_le(out, net.beta);
  write_le(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) {
    write_le(out, static_cast<std::uint32_t>(l.weight.rows()));
    write_le(out, static_cast<std::uint32_t>(l.weight.cols()));
    for (int r = 0; r < l.weight.rows(); ++r)
      for (int c = 0; c < l.weight.cols(); ++c) write_le(out, l.weight(r, c));
    for (int i = 0; i < l.bias.size(); ++i) write_le(out, l.bias[i]);
  }
  // training metadata trailer
  write_le(out, static_cast<std::uint32_t>(meta.mode.size()));
  out.write(meta.mode.data(), static_cast<std::streamsize>(meta.mode.size()));
  write_le(out, meta.seed);
  write_le(out, meta.epoch);
  if (!out)
    throw CheckpointError(CheckpointError::Kind::Io, "write failed");
}

Network load_checkpoint(const std::filesystem::path& path,
                        CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointError::Kind::Io,
                          "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                          "corrupt header: bad magic bytes");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "version mismatch: got " + std::to_string(version));
  const auto act = read_le<std::uint32_t>(in);
  if (act > 1)
    throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                          "corrupt header: unknown activation code");
  Network net;
  net.activation = act == 1 ? Activation::Softplus : Activation::ReLU;
  net.beta = read_le<double>(in);
  const auto n_layers = read_le<std::uint32_t>(in);
  if (n_layers == 0 || n_layers > 1024)
    throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                          "corrupt header: implausible layer count");
  for (std::uint32_t li = 0; li < n_layers; ++li) {
    const auto rows = read_le<std::uint32_t>(in);
    const auto cols = read_le<std::uint32_t>(in);
    if (rows == 0 || cols == 0 || rows > 1u << 20 || cols > 1u << 20)
      throw CheckpointError(CheckpointError::Kind::CorruptHeader,
                            "corrupt header: implausible layer dimensions");
    Layer l;
    l.weight.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        l.weight(r, c) = read_le<double>(in);
    l.bias.resize(rows);
    for (std::uint32_t i = 0; i < rows; ++i) l.bias[i] = read_le<double>(in);
    net.layers.push_back(std::move(l));
  }
  if (meta) {
    CheckpointMeta m;
    const auto len = read_le<std::uint32_t>(in);
    m.mode.resize(len);
    in.read(m.mode.data(), len);
    if (!in)
      throw CheckpointError(CheckpointError::Kind::TruncatedPayload,
                            "truncated payload");
    m.seed = read_le<std::uint64_t>(in);
    m.epoch = read_le<std::uint32_t>(in);
    *meta = m;
  }
  net.validate();
  return net;
}

Network random_network(const std::vector<int>& dims, std::uint64_t seed,
                       Activation act, double beta) {
  if (dims.size() < 2)
    throw std::runtime_error("random_network: need at least input/output dims");
  rng::Rng r(rng::derive_seed(seed, 0xA11C));
  Network net;
  net.activation = act;
  net.beta = beta;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Layer l;
    const int in = dims[i];
    const int out = dims[i + 1];
    const double std = std::sqrt(2.0 / in);
    l.weight.resize(out, in);
    for (int rr = 0; rr < out; ++rr)
      for (int cc = 0; cc < in; ++cc) l.weight(rr, cc) = r.normal(0.0, std);
    l.bias = VectorXd::Zero(out);
    for (int rr = 0; rr < out; ++rr) l.bias[rr] = r.normal(0.0, 0.1);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace smoothgeo::nn
