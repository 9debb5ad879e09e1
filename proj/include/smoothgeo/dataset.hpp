#pragma once

// Desk-scale datasets: two-moons generator, IDX-format image I/O and a
// synthetic digit-style image set for the image experiments.

#include "smoothgeo/attacks.hpp"
#include "smoothgeo/metrics.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace smoothgeo::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  MatrixXd features;  // n x d, row per example, values within range
  std::vector<int> labels;
  attacks::DataRange range{0.0, 1.0};
  metrics::GridGeometry geometry;  // flat unless image-shaped
  std::string name;

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int class_count() const;

  // Features rescaled to [0, 1]; model inputs always live on this scale.
  VectorXd scaled_input(int i) const;
  double scale_epsilon(double eps_in_range_units) const;
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, TruncatedPayload, CountMismatch, Io };
  IdxError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind(kind) {}
  Kind kind;
};

Dataset gen_two_moons(int n, double noise, std::uint64_t seed);

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);
void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// Synthetic 8x8 "digit" images (class-specific stroke patterns plus noise),
// data range [0, 255], c classes.
Dataset synth_digits(int n, int classes, std::uint64_t seed);

}  // namespace smoothgeo::data
