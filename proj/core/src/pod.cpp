#include "ngo/pod.hpp"

#include <Eigen/Dense>
#include <stdexcept>

namespace ngo {

PodBasis make_pod_basis(const Eigen::MatrixXd& snapshots, const QuadratureRule& rule, int count) {
  const int S = static_cast<int>(snapshots.cols());
  if (count < 1 || count > S)
    throw std::invalid_argument("make_pod_basis: count must be in [1, #snapshots]");
  if (snapshots.rows() != rule.size())
    throw std::invalid_argument("make_pod_basis: snapshot rows must match the rule");

  // Gram matrix in the discrete L2(rule) inner product.
  Eigen::MatrixXd weighted = rule.weights.asDiagonal() * snapshots;
  Eigen::MatrixXd gram = snapshots.transpose() * weighted;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw std::runtime_error("make_pod_basis: eigensolve failed");

  // Eigen returns ascending eigenvalues; take the leading ones.
  const Eigen::VectorXd evals = eig.eigenvalues();
  const double lead = std::max(evals(S - 1), 0.0);
  const double tol = lead * 1e-12;

  PodBasis pod;
  int kept = 0;
  for (int i = 0; i < count; ++i)
    if (evals(S - 1 - i) > tol) ++kept;
  pod.rank_deficient = kept < count;

  pod.combo.resize(S, kept);
  pod.singular_values.resize(kept);
  for (int i = 0; i < kept; ++i) {
    const double sigma = std::sqrt(evals(S - 1 - i));
    pod.singular_values(i) = sigma;
    pod.combo.col(i) = eig.eigenvectors().col(S - 1 - i) / sigma;
  }
  pod.mode_values = snapshots * pod.combo;
  return pod;
}

}  // namespace ngo
