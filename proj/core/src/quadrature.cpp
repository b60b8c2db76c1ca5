#include "ngo/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace ngo {

void gauss_legendre_01(int q, std::vector<double>& nodes, std::vector<double>& weights) {
  if (q < 1) throw std::invalid_argument("gauss_legendre_01: need at least one point");
  nodes.assign(q, 0.0);
  weights.assign(q, 0.0);
  // Newton iteration on Legendre polynomials over [-1,1], then map to [0,1].
  for (int i = 0; i < (q + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (q + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < q; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = q * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = 0.5 * (1.0 - x);
    nodes[q - 1 - i] = 0.5 * (1.0 + x);
    double w = 1.0 / ((1.0 - x * x) * pp * pp);
    weights[i] = w;
    weights[q - 1 - i] = w;
  }
}

bool is_boundary(Region r) { return r != Region::Domain && r != Region::InitialFace; }

namespace {

// 1D composite rule on [0,1]: `cells` cells with `ppc` points each.
void rule_1d(QuadKind kind, int cells, int ppc, std::vector<double>& x, std::vector<double>& w) {
  if (cells < 1 || ppc < 1) throw std::invalid_argument("make_quadrature: counts must be positive");
  x.clear();
  w.clear();
  const double h = 1.0 / cells;
  if (kind == QuadKind::Gauss) {
    std::vector<double> gx, gw;
    gauss_legendre_01(ppc, gx, gw);
    for (int c = 0; c < cells; ++c)
      for (int p = 0; p < ppc; ++p) {
        x.push_back((c + gx[p]) * h);
        w.push_back(gw[p] * h);
      }
  } else {
    const int n = cells * ppc;
    for (int i = 0; i < n; ++i) {
      x.push_back((i + 0.5) / n);
      w.push_back(1.0 / n);
    }
  }
}

}  // namespace

QuadratureRule make_quadrature(QuadKind kind, const std::vector<int>& cells,
                               int points_per_cell, Region region) {
  const int d = static_cast<int>(cells.size());
  if (d < 1 || d > 3) throw std::invalid_argument("make_quadrature: 1-3 dimensions supported");
  std::vector<std::vector<double>> xs(d), ws(d);
  for (int i = 0; i < d; ++i) rule_1d(kind, cells[i], points_per_cell, xs[i], ws[i]);

  int q = 1;
  for (int i = 0; i < d; ++i) q *= static_cast<int>(xs[i].size());
  QuadratureRule rule;
  rule.region = region;
  rule.points.resize(q, d);
  rule.weights.resize(q);
  std::vector<int> idx(d, 0);
  for (int k = 0; k < q; ++k) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      rule.points(k, i) = xs[i][idx[i]];
      w *= ws[i][idx[i]];
    }
    rule.weights(k) = w;
    for (int i = d - 1; i >= 0; --i) {  // last dimension fastest
      if (++idx[i] < static_cast<int>(xs[i].size())) break;
      idx[i] = 0;
    }
  }
  return rule;
}

namespace {

// Embed a 1D rule as a boundary segment of the unit square.
QuadratureRule embed_segment(const QuadratureRule& line, Region region) {
  QuadratureRule r;
  r.region = region;
  const int q = line.size();
  r.points.resize(q, 2);
  r.weights = line.weights;
  r.normals.resize(q, 2);
  for (int k = 0; k < q; ++k) {
    const double s = line.points(k, 0);
    switch (region) {
      case Region::GammaNBottom: r.points.row(k) << s, 0.0; r.normals.row(k) << 0.0, -1.0; break;
      case Region::GammaNTop:    r.points.row(k) << s, 1.0; r.normals.row(k) << 0.0,  1.0; break;
      case Region::GammaDLeft:   r.points.row(k) << 0.0, s; r.normals.row(k) << -1.0, 0.0; break;
      case Region::GammaDRight:  r.points.row(k) << 1.0, s; r.normals.row(k) <<  1.0, 0.0; break;
      default: throw std::invalid_argument("embed_segment: unknown boundary region");
    }
  }
  return r;
}

}  // namespace

SteadyQuads make_steady_quads(QuadKind kind, int cells_per_dim, int points_per_cell) {
  SteadyQuads q;
  q.domain = make_quadrature(kind, {cells_per_dim, cells_per_dim}, points_per_cell);
  QuadratureRule line = make_quadrature(kind, {cells_per_dim}, points_per_cell);
  q.gn_bottom = embed_segment(line, Region::GammaNBottom);
  q.gn_top = embed_segment(line, Region::GammaNTop);
  q.gd_left = embed_segment(line, Region::GammaDLeft);
  q.gd_right = embed_segment(line, Region::GammaDRight);
  return q;
}

SpaceTimeQuads make_space_time_quads(QuadKind kind, int cells_t, int cells_xy,
                                     int points_per_cell, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("make_space_time_quads: dt must be positive");
  SpaceTimeQuads q;
  q.dt = dt;

  // Rules live on the unit cube in (s,x,y) with s the slab-local time
  // fraction; assembly applies the dt Jacobians.
  q.domain = make_quadrature(kind, {cells_t, cells_xy, cells_xy}, points_per_cell);

  // Lateral faces: (s, tangential) rules with normals in 3D (s,x,y).
  auto face = [&](Region region) {
    QuadratureRule r = make_quadrature(kind, {cells_t, cells_xy}, points_per_cell);
    QuadratureRule out;
    out.region = region;
    const int n = r.size();
    out.points.resize(n, 3);
    out.weights = r.weights;
    out.normals = RowMatrixXd::Zero(n, 3);
    for (int k = 0; k < n; ++k) {
      const double t = r.points(k, 0), s = r.points(k, 1);
      switch (region) {
        case Region::GammaNBottom: out.points.row(k) << t, s, 0.0; out.normals(k, 2) = -1.0; break;
        case Region::GammaNTop:    out.points.row(k) << t, s, 1.0; out.normals(k, 2) =  1.0; break;
        case Region::GammaDLeft:   out.points.row(k) << t, 0.0, s; out.normals(k, 1) = -1.0; break;
        case Region::GammaDRight:  out.points.row(k) << t, 1.0, s; out.normals(k, 1) =  1.0; break;
        default: throw std::invalid_argument("make_space_time_quads: bad face");
      }
    }
    return out;
  };
  q.gn_bottom = face(Region::GammaNBottom);
  q.gn_top = face(Region::GammaNTop);
  q.gd_left = face(Region::GammaDLeft);
  q.gd_right = face(Region::GammaDRight);

  QuadratureRule init = make_quadrature(kind, {cells_xy, cells_xy}, points_per_cell);
  QuadratureRule init3;
  init3.region = Region::InitialFace;
  init3.points.resize(init.size(), 3);
  init3.weights = init.weights;
  for (int k = 0; k < init.size(); ++k)
    init3.points.row(k) << 0.0, init.points(k, 0), init.points(k, 1);
  q.initial = init3;
  return q;
}

}  // namespace ngo
