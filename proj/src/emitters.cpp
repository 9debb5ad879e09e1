#include "smoothgeo/harness.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace smoothgeo::harness {

void emit_heatmap(const Eigen::VectorXd& scores,
                  const metrics::GridGeometry& geom,
                  const std::filesystem::path& path) {
  if (geom.size() != scores.size())
    throw std::runtime_error("emit_heatmap: geometry mismatch");
  const int h = geom.flat() ? 1 : geom.height;
  const int w = geom.flat() ? geom.width : geom.width;
  const Eigen::VectorXd a = scores.cwiseAbs();
  const double lo = a.minCoeff(), hi = a.maxCoeff();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < a.size(); ++i) {
    unsigned char v;
    if (hi - lo < 1e-300) {
      v = 128;  // degenerate map: uniform mid-gray
      if (i == 0)
        std::cerr << "emit_heatmap: degenerate map, writing uniform gray\n";
    } else {
      v = static_cast<unsigned char>(
          std::lround(255.0 * (a[i] - lo) / (hi - lo)));
    }
    out.write(reinterpret_cast<const char*>(&v), 1);
  }
}

namespace {

// score used for the contours: margin between the top-two logits at the
// region center, a smooth surface whose zero level is the decision boundary
double contour_score(const nn::Network& net, const Eigen::Vector2d& p, int ca,
                     int cb) {
  ad::Graph g;
  const Eigen::VectorXd logits =
      nn::forward_logits(net, g, Eigen::VectorXd(p)).vector();
  return logits[ca] - logits[cb];
}

struct Seg {
  double x1, y1, x2, y2;
};

// marching squares on one cell for one iso level
void cell_segments(double level, double x0, double y0, double dx, double dy,
                   double v00, double v10, double v01, double v11,
                   std::vector<Seg>& segs) {
  auto interp = [&](double a, double b) {
    return (level - a) / (b - a + (b == a ? 1e-300 : 0.0));
  };
  struct Pt {
    double x, y;
  };
  std::vector<Pt> pts;
  if ((v00 < level) != (v10 < level))
    pts.push_back({x0 + dx * interp(v00, v10), y0});
  if ((v10 < level) != (v11 < level))
    pts.push_back({x0 + dx, y0 + dy * interp(v10, v11)});
  if ((v01 < level) != (v11 < level))
    pts.push_back({x0 + dx * interp(v01, v11), y0 + dy});
  if ((v00 < level) != (v01 < level))
    pts.push_back({x0, y0 + dy * interp(v00, v01)});
  for (std::size_t i = 0; i + 1 < pts.size(); i += 2)
    segs.push_back({pts[i].x, pts[i].y, pts[i + 1].x, pts[i + 1].y});
}

}  // namespace

void emit_contour_field(const Network& net, const Eigen::Vector2d& region_lo,
                        const Eigen::Vector2d& region_hi,
                        const std::vector<Method>& methods,
                        const std::filesystem::path& path) {
  if (net.input_dim() != 2)
    throw std::runtime_error("emit_contour_field: network input dim must be 2");

  const int grid = 40;
  const double dx = (region_hi[0] - region_lo[0]) / grid;
  const double dy = (region_hi[1] - region_lo[1]) / grid;

  // pick the two dominant classes at the region center
  const Eigen::Vector2d mid = 0.5 * (region_lo + region_hi);
  Eigen::VectorXd mid_logits;
  {
    ad::Graph g;
    mid_logits = nn::forward_logits(net, g, Eigen::VectorXd(mid)).vector();
  }
  const int ca = nn::argmax_smallest_tie(mid_logits);
  int cb = ca == 0 ? 1 : 0;
  for (int i = 0; i < mid_logits.size(); ++i)
    if (i != ca && mid_logits[i] > mid_logits[cb]) cb = i;

  Eigen::MatrixXd field(grid + 1, grid + 1);
  for (int i = 0; i <= grid; ++i)
    for (int j = 0; j <= grid; ++j)
      field(i, j) = contour_score(
          net, {region_lo[0] + i * dx, region_lo[1] + j * dy}, ca, cb);

  const double fmin = field.minCoeff(), fmax = field.maxCoeff();
  std::vector<double> levels;
  for (int l = 1; l <= 8; ++l)
    levels.push_back(fmin + (fmax - fmin) * l / 9.0);

  const double view = 640.0;
  auto sx = [&](double x) { return (x - region_lo[0]) / (region_hi[0] - region_lo[0]) * view; };
  auto sy = [&](double y) { return view - (y - region_lo[1]) / (region_hi[1] - region_lo[1]) * view; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << view
      << "\" height=\"" << view << "\" viewBox=\"0 0 " << view << " " << view
      << "\">\n";

  // decision regions: colored cells by predicted class at the cell center
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const Eigen::Vector2d p(region_lo[0] + (i + 0.5) * dx,
                              region_lo[1] + (j + 0.5) * dy);
      Eigen::VectorXd xin(2);
      xin << p[0], p[1];
      const int cls = nn::predict(net, xin);
      const char* fill = cls == ca ? "#d2e8d2" : "#e0d2e8";
      svg << "<rect x=\"" << sx(p[0] - 0.5 * dx) << "\" y=\""
          << sy(p[1] + 0.5 * dy) << "\" width=\"" << view / grid
          << "\" height=\"" << view / grid << "\" fill=\"" << fill
          << "\" stroke=\"none\"/>\n";
    }

  // score contours
  for (double level : levels) {
    std::vector<Seg> segs;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j)
        cell_segments(level, region_lo[0] + i * dx, region_lo[1] + j * dy, dx,
                      dy, field(i, j), field(i + 1, j), field(i, j + 1),
                      field(i + 1, j + 1), segs);
    for (const Seg& s : segs)
      svg << "<line x1=\"" << sx(s.x1) << "\" y1=\"" << sy(s.y1) << "\" x2=\""
          << sx(s.x2) << "\" y2=\"" << sy(s.y2)
          << "\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  }

  // unit-normalized attribution arrows at a coarse lattice
  const char* colors[] = {"#c62828", "#1565c0", "#2e7d32", "#ef6c00"};
  const double arrow_len = view / grid * 1.6;  // plot units
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    attribution::AttributionConfig cfg;
    cfg.sg_sigma = 0.05 * (region_hi - region_lo).norm();
    cfg.ug_radius = cfg.sg_sigma;
    cfg.ig_steps = 16;
    cfg.sg_samples = 16;
    cfg.ug_samples = 16;
    for (int i = 2; i < grid; i += 5)
      for (int j = 2; j < grid; j += 5) {
        Eigen::VectorXd p(2);
        p << region_lo[0] + i * dx, region_lo[1] + j * dy;
        Eigen::VectorXd z =
            attribution::compute(methods[mi], net, p, cfg).scores;
        const double n = z.norm();
        if (n < 1e-12) continue;
        z /= n;  // unit length in plot units
        svg << "<line x1=\"" << sx(p[0]) << "\" y1=\"" << sy(p[1])
            << "\" x2=\"" << sx(p[0]) + z[0] * arrow_len << "\" y2=\""
            << sy(p[1]) - z[1] * arrow_len << "\" stroke=\""
            << colors[mi % 4] << "\" stroke-width=\"1.5\"/>\n";
      }
  }

  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << svg.str();
}

}  // namespace smoothgeo::harness
