#pragma once

// Attribution similarity metrics (k-in, cor, cdl, cosd) and log-AUC
// aggregation over an attack-budget grid.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace smoothgeo::metrics {

using Eigen::Vector2d;
using Eigen::VectorXd;

struct GridGeometry {
  int height = 0;
  int width = 0;  // flat layout when height == 0

  bool flat() const { return height == 0; }
  int size() const { return flat() ? width : height * width; }
  static GridGeometry flat_of(int d) { return GridGeometry{0, d}; }
};

class MetricError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Indices of the k largest entries of n(z); ties toward the smaller index.
std::vector<int> topk_indices(const VectorXd& z, int k);

// Mass of n(z_adv) inside the top-k set of n(z).
double topk_intersection(const VectorXd& z, const VectorXd& z_adv, int k);

// Pearson correlation of average-tie ranks of n(z) and n(z_adv).
double spearman_correlation(const VectorXd& z, const VectorXd& z_adv);

// Centroid of n(z) in (row, col) units; flat geometry uses (0, index).
Vector2d mass_center(const VectorXd& z, const GridGeometry& geom);

double center_dislocation(const VectorXd& z, const VectorXd& z_adv,
                          const GridGeometry& geom);

// 1 - <z, z'> / (||z|| ||z'||) on raw scores.
double cosine_distance(const VectorXd& z, const VectorXd& z_adv);

struct CurvePoint {
  double epsilon;
  double value;
};

// Trapezoidal integral of value against log2(epsilon).
double log_auc(std::vector<CurvePoint> points);

struct MetricRow {
  double epsilon = 0.0;
  double k_in = 0.0;
  double cor = 0.0;
  double cdl = 0.0;
  double cosd = 0.0;
  int infeasible = 0;  // attack count that kept x_adv = x
};

struct MetricReport {
  std::vector<MetricRow> rows;  // one per epsilon, ascending
  int k = 0;
  int image_count = 0;
  bool has_auc = false;
  MetricRow auc;  // epsilon unused; aggregates per metric

  void finalize();  // fills AUC aggregates when >= 2 rows
  std::string to_csv() const;
  std::string to_json() const;
};

// Adds this pair's four metric values into `accum` (caller divides by count).
void accumulate_metrics(const VectorXd& z, const VectorXd& z_adv, int k,
                        const GridGeometry& geom, MetricRow& accum);

}  // namespace smoothgeo::metrics
