#include "smoothgeo/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace smoothgeo::metrics {

namespace {
VectorXd normalize_abs(const VectorXd& z) {
  const VectorXd a = z.cwiseAbs();
  const double total = a.sum();
  if (total == 0.0) throw MetricError("degenerate attribution");
  return a / total;
}

// average-tie ranks, 1-based
VectorXd ranks(const VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return v[a] < v[b]; });
  VectorXd r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

std::vector<int> topk_indices(const VectorXd& z, int k) {
  const int d = static_cast<int>(z.size());
  if (k < 1 || k > d) throw MetricError("topk: k out of range");
  const VectorXd n = normalize_abs(z);
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  // stable sort on descending value keeps ties at the smallest index
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return n[a] > n[b]; });
  idx.resize(k);
  return idx;
}

double topk_intersection(const VectorXd& z, const VectorXd& z_adv, int k) {
  if (z.size() != z_adv.size()) throw MetricError("topk: length mismatch");
  const VectorXd na = normalize_abs(z_adv);
  double mass = 0.0;
  for (int i : topk_indices(z, k)) mass += na[i];
  return mass;
}

double spearman_correlation(const VectorXd& z, const VectorXd& z_adv) {
  if (z.size() != z_adv.size()) throw MetricError("spearman: length mismatch");
  if (z.size() < 2) throw MetricError("spearman: need d >= 2");
  const VectorXd ra = ranks(normalize_abs(z));
  const VectorXd rb = ranks(normalize_abs(z_adv));
  const double ma = ra.mean(), mb = rb.mean();
  const VectorXd da = ra.array() - ma;
  const VectorXd db = rb.array() - mb;
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) throw MetricError("undefined correlation: constant map");
  return da.dot(db) / denom;
}

Vector2d mass_center(const VectorXd& z, const GridGeometry& geom) {
  if (geom.size() != z.size()) throw MetricError("mass_center: geometry mismatch");
  const VectorXd n = normalize_abs(z);
  Vector2d c(0.0, 0.0);
  for (int i = 0; i < n.size(); ++i) {
    const int row = geom.flat() ? 0 : i / geom.width;
    const int col = geom.flat() ? i : i % geom.width;
    c[0] += n[i] * row;
    c[1] += n[i] * col;
  }
  return c;
}

double center_dislocation(const VectorXd& z, const VectorXd& z_adv,
                          const GridGeometry& geom) {
  return (mass_center(z, geom) - mass_center(z_adv, geom)).norm();
}

double cosine_distance(const VectorXd& z, const VectorXd& z_adv) {
  if (z.size() != z_adv.size()) throw MetricError("cosd: length mismatch");
  const double na = z.norm(), nb = z_adv.norm();
  if (na == 0.0 || nb == 0.0) throw MetricError("cosd: zero vector");
  return 1.0 - z.dot(z_adv) / (na * nb);
}

double log_auc(std::vector<CurvePoint> points) {
  if (points.size() < 2) throw MetricError("log_auc: need >= 2 points");
  std::sort(points.begin(), points.end(),
            [](const CurvePoint& a, const CurvePoint& b) {
              return a.epsilon < b.epsilon;
            });
  double auc = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    if (points[i].epsilon <= 0) throw MetricError("log_auc: epsilon must be > 0");
    if (points[i].epsilon == points[i + 1].epsilon)
      throw MetricError("log_auc: duplicate epsilon");
    const double w =
        std::log2(points[i + 1].epsilon) - std::log2(points[i].epsilon);
    auc += 0.5 * (points[i].value + points[i + 1].value) * w;
  }
  return auc;
}

void accumulate_metrics(const VectorXd& z, const VectorXd& z_adv, int k,
                        const GridGeometry& geom, MetricRow& accum) {
  accum.k_in += topk_intersection(z, z_adv, k);
  accum.cor += spearman_correlation(z, z_adv);
  accum.cdl += center_dislocation(z, z_adv, geom);
  accum.cosd += cosine_distance(z, z_adv);
}

void MetricReport::finalize() {
  has_auc = rows.size() >= 2;
  if (!has_auc) return;
  auto curve = [&](auto member) {
    std::vector<CurvePoint> pts;
    for (const MetricRow& r : rows) pts.push_back({r.epsilon, r.*member});
    return log_auc(std::move(pts));
  };
  auc.k_in = curve(&MetricRow::k_in);
  auc.cor = curve(&MetricRow::cor);
  auc.cdl = curve(&MetricRow::cdl);
  auc.cosd = curve(&MetricRow::cosd);
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epsilon,k_in,cor,cdl,cosd,infeasible\n";
  for (const MetricRow& r : rows)
    out << r.epsilon << ',' << r.k_in << ',' << r.cor << ',' << r.cdl << ','
        << r.cosd << ',' << r.infeasible << '\n';
  if (has_auc)
    out << "AUC," << auc.k_in << ',' << auc.cor << ',' << auc.cdl << ','
        << auc.cosd << ",\n";
  return out.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["image_count"] = image_count;
  j["rows"] = nlohmann::json::array();
  for (const MetricRow& r : rows)
    j["rows"].push_back({{"epsilon", r.epsilon},
                         {"k_in", r.k_in},
                         {"cor", r.cor},
                         {"cdl", r.cdl},
                         {"cosd", r.cosd},
                         {"infeasible", r.infeasible}});
  if (has_auc)
    j["auc"] = {{"k_in", auc.k_in},
                {"cor", auc.cor},
                {"cdl", auc.cdl},
                {"cosd", auc.cosd}};
  return j.dump(2);
}

}  // namespace smoothgeo::metrics
