#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

namespace ngo {

using Eigen::MatrixXd;
using Eigen::VectorXd;
/// Row-major layout so that a point's coordinates are contiguous.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gauss-Legendre nodes and weights on [0,1]. A rule with q points
/// integrates polynomials of degree 2q-1 exactly.
void gauss_legendre_01(int q, std::vector<double>& nodes, std::vector<double>& weights);

enum class QuadKind { Gauss, Uniform };

/// Named integration regions of the unit-square (or slab) geometry.
/// Neumann boundaries are the bottom/top edges, Dirichlet the left/right
/// edges; the initial-time face only exists for space-time domains.
enum class Region {
  Domain,
  GammaNBottom,
  GammaNTop,
  GammaDLeft,
  GammaDRight,
  InitialFace,
};

bool is_boundary(Region r);

/// A tensor-product quadrature rule. Points live in the coordinate system of
/// the full domain (boundary rules embed their lower-dimensional points and
/// carry the outward unit normal so that assembly needs no geometry queries).
struct QuadratureRule {
  Region region = Region::Domain;
  RowMatrixXd points;   // Q x dim (dim of the ambient domain)
  VectorXd weights;     // Q, all positive
  RowMatrixXd normals;  // Q x dim for boundary rules, empty otherwise

  int size() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(points.cols()); }
  double measure() const { return weights.sum(); }
};

/// Build a rule over an axis-aligned box [0,1]^d (d = cells.size()).
/// `kind` Gauss places `points_per_cell` Gauss points per cell and dimension;
/// Uniform places equispaced midpoints with equal weights.
QuadratureRule make_quadrature(QuadKind kind, const std::vector<int>& cells,
                               int points_per_cell, Region region = Region::Domain);

/// Rules for the steady unit-square problem: one domain rule plus the four
/// boundary segments with their outward normals.
struct SteadyQuads {
  QuadratureRule domain;     // (x,y)
  QuadratureRule gn_bottom;  // y=0, normal (0,-1)
  QuadratureRule gn_top;     // y=1, normal (0, 1)
  QuadratureRule gd_left;    // x=0, normal (-1,0)
  QuadratureRule gd_right;   // x=1, normal ( 1,0)
};

SteadyQuads make_steady_quads(QuadKind kind, int cells_per_dim, int points_per_cell);

/// Rules for one space-time slab in (s,x,y) coordinates where s in [0,1] is
/// the slab-local time fraction t = (i + s) * dt. Assembly applies the dt
/// Jacobian; sampling helpers map s to global time.
struct SpaceTimeQuads {
  double dt = 0.0;
  QuadratureRule domain;     // (s,x,y)
  QuadratureRule gn_bottom;  // y=0 face, (s,x)
  QuadratureRule gn_top;
  QuadratureRule gd_left;    // x=0 face, (s,y)
  QuadratureRule gd_right;
  QuadratureRule initial;    // s=0 face, (x,y)
};

SpaceTimeQuads make_space_time_quads(QuadKind kind, int cells_t, int cells_xy,
                                     int points_per_cell, double dt);

}  // namespace ngo
