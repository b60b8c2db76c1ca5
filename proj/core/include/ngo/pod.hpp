#pragma once

#include <Eigen/Core>

#include "ngo/quadrature.hpp"

namespace ngo {

/// POD basis extracted from solution snapshots sampled on a quadrature grid.
/// Mode k is the snapshot combination sum_s combo(s,k) u_s, orthonormal in
/// the discrete L2 inner product of the defining rule. Any other quantity
/// sampled per snapshot (gradients, boundary traces, other grids) transfers
/// to the modes through `combine`.
struct PodBasis {
  Eigen::MatrixXd combo;            // S x count
  Eigen::VectorXd singular_values;  // of the weighted snapshot matrix
  Eigen::MatrixXd mode_values;      // Q x count on the defining rule
  bool rank_deficient = false;

  int count() const { return static_cast<int>(combo.cols()); }

  /// Apply the mode combination to a per-snapshot sampled block (rows x S).
  Eigen::MatrixXd combine(const Eigen::MatrixXd& block) const { return block * combo; }
};

/// snapshots: Q x S matrix of solution samples on `rule`. Keeps at most
/// `count` modes; fewer (with rank_deficient set) when the weighted snapshot
/// matrix does not support `count` numerically independent directions.
PodBasis make_pod_basis(const Eigen::MatrixXd& snapshots, const QuadratureRule& rule, int count);

}  // namespace ngo
