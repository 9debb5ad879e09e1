#include "smoothgeo/dataset.hpp"

#include "smoothgeo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace smoothgeo::data {

int Dataset::class_count() const {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return std::max(c, 2);
}

VectorXd Dataset::scaled_input(int i) const {
  const double span = range.hi - range.lo;
  return (features.row(i).transpose().array() - range.lo).matrix() / span;
}

double Dataset::scale_epsilon(double eps_in_range_units) const {
  return eps_in_range_units / (range.hi - range.lo);
}

Dataset gen_two_moons(int n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::runtime_error("gen_two_moons: n must be >= 2");
  rng::Rng r(rng::derive_seed(seed, 0x2007));
  Dataset ds;
  ds.name = "two_moons";
  ds.features.resize(n, 2);
  ds.labels.resize(n);
  ds.geometry = metrics::GridGeometry::flat_of(2);
  const int n0 = (n + 1) / 2;  // balanced within one point
  for (int i = 0; i < n; ++i) {
    const bool upper = i < n0;
    const int j = upper ? i : i - n0;
    const int m = upper ? n0 : n - n0;
    const double t = std::numbers::pi * j / std::max(1, m - 1);
    double x = upper ? std::cos(t) : 1.0 - std::cos(t);
    double y = upper ? std::sin(t) : 0.5 - std::sin(t);
    x += noise * r.normal();
    y += noise * r.normal();
    ds.features(i, 0) = x;
    ds.features(i, 1) = y;
    ds.labels[i] = upper ? 0 : 1;
  }
  double lo = ds.features.minCoeff(), hi = ds.features.maxCoeff();
  if (noise == 0.0) {
    // keep the arcs exactly representable: widen the range, not the data
    lo -= 0.5;
    hi += 0.5;
  }
  ds.range = {lo, hi};
  return ds;
}

// ----- IDX ------------------------------------------------------------------

namespace {
std::uint32_t read_be32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw IdxError(IdxError::Kind::TruncatedPayload, "truncated payload");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw IdxError(IdxError::Kind::Io, "cannot open " + images.string());
  if (read_be32(img) != 2051)
    throw IdxError(IdxError::Kind::BadMagic,
                   "bad magic in image file (want 2051)");
  const std::uint32_t n = read_be32(img);
  const std::uint32_t h = read_be32(img);
  const std::uint32_t w = read_be32(img);
  const std::size_t d = std::size_t(h) * w;
  std::vector<unsigned char> buf(n * d);
  img.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(img.gcount()) != buf.size())
    throw IdxError(IdxError::Kind::TruncatedPayload,
                   "truncated payload in image file");

  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw IdxError(IdxError::Kind::Io, "cannot open " + labels.string());
  if (read_be32(lab) != 2049)
    throw IdxError(IdxError::Kind::BadMagic,
                   "bad magic in label file (want 2049)");
  const std::uint32_t nl = read_be32(lab);
  if (nl != n)
    throw IdxError(IdxError::Kind::CountMismatch,
                   "count mismatch: " + std::to_string(n) + " images vs " +
                       std::to_string(nl) + " labels");
  std::vector<unsigned char> lbuf(nl);
  lab.read(reinterpret_cast<char*>(lbuf.data()), nl);
  if (static_cast<std::size_t>(lab.gcount()) != lbuf.size())
    throw IdxError(IdxError::Kind::TruncatedPayload,
                   "truncated payload in label file");

  Dataset ds;
  ds.name = images.stem().string();
  ds.geometry = metrics::GridGeometry{static_cast<int>(h), static_cast<int>(w)};
  ds.range = {0.0, 255.0};
  ds.features.resize(n, d);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      ds.features(i, static_cast<int>(j)) = buf[i * d + j];
    ds.labels[i] = lbuf[i];
  }
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (ds.geometry.flat())
    throw std::runtime_error("save_idx: dataset needs grid geometry");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw IdxError(IdxError::Kind::Io, "cannot open output");
  write_be32(img, 2051);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(ds.geometry.height));
  write_be32(img, static_cast<std::uint32_t>(ds.geometry.width));
  for (int i = 0; i < ds.size(); ++i)
    for (int j = 0; j < ds.dim(); ++j) {
      const double v = std::clamp(ds.features(i, j), 0.0, 255.0);
      const unsigned char b = static_cast<unsigned char>(std::lround(v));
      img.write(reinterpret_cast<const char*>(&b), 1);
    }
  write_be32(lab, 2049);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    lab.write(reinterpret_cast<const char*>(&b), 1);
  }
}

Dataset synth_digits(int n, int classes, std::uint64_t seed) {
  if (classes < 2 || classes > 10)
    throw std::runtime_error("synth_digits: classes in [2, 10]");
  rng::Rng r(rng::derive_seed(seed, 0xD161));
  Dataset ds;
  ds.name = "synth_digits";
  ds.geometry = metrics::GridGeometry{8, 8};
  ds.range = {0.0, 255.0};
  ds.features.resize(n, 64);
  ds.labels.resize(n);

  // class templates: distinct stroke patterns on the 8x8 grid
  std::vector<Eigen::Matrix<double, 8, 8>> tpl(classes);
  for (int c = 0; c < classes; ++c) {
    auto& t = tpl[c];
    t.setZero();
    const int row = c % 8;
    const int col = (c * 3) % 8;
    t.row(row).setConstant(200.0);
    t.col(col).setConstant(200.0);
    if (c % 2 == 0) t.diagonal().setConstant(160.0);
    if (c >= 5) t.colwise().reverse().diagonal().setConstant(160.0);
    t(row, col) = 255.0;
  }

  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    ds.labels[i] = c;
    Eigen::Matrix<double, 8, 8> img = tpl[c];
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        img(a, b) += 25.0 * r.normal();
        img(a, b) = std::clamp(img(a, b), 0.0, 255.0);
      }
    for (int j = 0; j < 64; ++j) ds.features(i, j) = img(j / 8, j % 8);
  }
  return ds;
}

}  // namespace smoothgeo::data
