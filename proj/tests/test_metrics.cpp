#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "smoothgeo/metrics.hpp"

using namespace smoothgeo::metrics;
using Eigen::VectorXd;

namespace {
VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}
}  // namespace

TEST_CASE("topk_intersection hand cases") {
  const VectorXd z = vec({4, 3, 2, 1});
  CHECK(topk_intersection(z, z, 2) == doctest::Approx(0.7));
  CHECK(topk_intersection(z, vec({1, 2, 3, 4}), 2) == doctest::Approx(0.3));
  CHECK(topk_intersection(z, vec({-8, 0.5, 7, 7}), 4) == doctest::Approx(1.0));
  CHECK(topk_intersection(vec({1, 1, 1}), vec({0, 0, 5}), 1) ==
        doctest::Approx(0.0));  // tie in z resolved to index 0
  CHECK_THROWS_AS(topk_intersection(VectorXd::Zero(3), z.head(3), 1),
                  MetricError);
}

TEST_CASE("topk invariances") {
  const VectorXd z = vec({0.5, -3, 2, 0.1});
  const VectorXd za = vec({1, 4, -2, 0});
  CHECK(topk_intersection(3 * z, 7 * za, 2) ==
        doctest::Approx(topk_intersection(z, za, 2)));
  CHECK(topk_intersection(z, z, 4) == doctest::Approx(1.0));
}

TEST_CASE("spearman hand cases") {
  CHECK(spearman_correlation(vec({1, 2, 3}), vec({2, 1, 3})) ==
        doctest::Approx(0.5));
  const VectorXd z = vec({0.4, 0.1, 0.3, 0.2});
  CHECK(spearman_correlation(z, z) == doctest::Approx(1.0));
  CHECK(spearman_correlation(vec({1, 2, 3, 4}), vec({4, 3, 2, 1})) ==
        doctest::Approx(-1.0));
  CHECK_THROWS_WITH_AS(spearman_correlation(vec({2, 2, 2}), vec({1, 2, 3})),
                       doctest::Contains("undefined correlation"), MetricError);
}

TEST_CASE("spearman antisymmetry under rank reversal") {
  const VectorXd a = vec({5, 1, 4, 2, 3});
  const VectorXd b = vec({1, 2, 3, 4, 5});
  const VectorXd b_rev = vec({5, 4, 3, 2, 1});
  CHECK(spearman_correlation(a, b) == doctest::Approx(-spearman_correlation(a, b_rev)));
}

TEST_CASE("mass_center") {
  GridGeometry g22{2, 2};
  const Eigen::Vector2d point = mass_center(vec({1, 0, 0, 0}), g22);
  CHECK(point(0) == doctest::Approx(0.0));
  CHECK(point(1) == doctest::Approx(0.0));

  const Eigen::Vector2d uni = mass_center(vec({1, 1, 1, 1}), g22);
  CHECK(uni(0) == doctest::Approx(0.5));
  CHECK(uni(1) == doctest::Approx(0.5));

  const Eigen::Vector2d scaled = mass_center(vec({3, 1, 2, 2}), g22);
  const Eigen::Vector2d scaled10 = mass_center(10 * vec({3, 1, 2, 2}), g22);
  CHECK((scaled - scaled10).norm() < 1e-15);

  CHECK_THROWS_AS(mass_center(VectorXd::Zero(4), g22), MetricError);
}

TEST_CASE("center_dislocation") {
  GridGeometry g22{2, 2};
  const VectorXd z = vec({1, 2, 3, 4});
  CHECK(center_dislocation(z, z, g22) == doctest::Approx(0.0));
  CHECK(center_dislocation(vec({1, 0, 0, 0}), vec({0, 1, 0, 0}), g22) ==
        doctest::Approx(1.0));
  // symmetric swap about the center of a 1x3 grid: each center sits 1 from
  // the middle, displacement 2
  GridGeometry g13{1, 3};
  CHECK(center_dislocation(vec({1, 0, 0}), vec({0, 0, 1}), g13) ==
        doctest::Approx(2.0));
}

TEST_CASE("cosine_distance") {
  const VectorXd z = vec({1, -2, 3});
  CHECK(cosine_distance(z, z) == doctest::Approx(0.0));
  CHECK(cosine_distance(z, -z) == doctest::Approx(2.0));
  CHECK(cosine_distance(vec({1, 0}), vec({0, 5})) == doctest::Approx(1.0));
  CHECK(cosine_distance(3 * z, 0.5 * z) == doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine_distance(VectorXd::Zero(3), z), MetricError);
}

TEST_CASE("log_auc") {
  std::vector<CurvePoint> flat{{2, 5}, {4, 5}, {8, 5}, {16, 5}};
  CHECK(log_auc(flat) == doctest::Approx(15.0));  // 3 * v

  std::vector<CurvePoint> tri{{2, 0}, {4, 1}};
  CHECK(log_auc(tri) == doctest::Approx(0.5));

  // unsorted input is sorted by epsilon first
  std::vector<CurvePoint> shuffled{{8, 5}, {2, 5}, {16, 5}, {4, 5}};
  CHECK(log_auc(shuffled) == doctest::Approx(15.0));

  CHECK_THROWS_AS(log_auc({{2, 1}, {2, 3}}), MetricError);
  CHECK_THROWS_AS(log_auc({{2, 1}}), MetricError);
  CHECK_THROWS_AS(log_auc({{0, 1}, {2, 3}}), MetricError);

  // pointwise domination carries to the integral
  std::vector<CurvePoint> lo{{2, 1}, {4, 2}, {8, 1}};
  std::vector<CurvePoint> hi{{2, 2}, {4, 2.5}, {8, 3}};
  CHECK(log_auc(lo) <= log_auc(hi));
}

TEST_CASE("metric report serialization") {
  MetricReport rep;
  rep.k = 2;
  rep.image_count = 3;
  for (double eps : {2.0, 4.0}) {
    MetricRow row;
    row.epsilon = eps;
    row.k_in = 0.5;
    row.cor = 0.25;
    row.cdl = 1.0;
    row.cosd = eps / 10;
    rep.rows.push_back(row);
  }
  rep.finalize();
  CHECK(rep.has_auc);
  CHECK(rep.auc.k_in == doctest::Approx(0.5));
  CHECK(rep.auc.cosd == doctest::Approx(0.3));

  const std::string csv = rep.to_csv();
  CHECK(csv.find("epsilon") != std::string::npos);
  CHECK(csv.find("AUC") != std::string::npos);

  MetricReport single;
  single.rows.push_back(MetricRow{2.0, 1, 1, 0, 0, 0});
  single.finalize();
  CHECK_FALSE(single.has_auc);
}

TEST_CASE("accumulate_metrics adds one pair's values") {
  MetricRow acc;
  const VectorXd z = vec({4, 3, 2, 1});
  accumulate_metrics(z, z, 2, GridGeometry::flat_of(4), acc);
  CHECK(acc.k_in == doctest::Approx(0.7));
  CHECK(acc.cor == doctest::Approx(1.0));
  CHECK(acc.cdl == doctest::Approx(0.0));
  CHECK(acc.cosd == doctest::Approx(0.0));
}
