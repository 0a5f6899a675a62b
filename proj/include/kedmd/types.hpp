#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace kedmd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using CRowVector = Eigen::RowVectorXcd;

/// Paired snapshots: row n of Y is the image of row n of X under the dynamics.
struct SnapshotSet {
  Matrix X;  // N x d
  Matrix Y;  // N x d

  SnapshotSet() = default;
  SnapshotSet(Matrix x, Matrix y);

  [[nodiscard]] Eigen::Index size() const noexcept { return X.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return X.cols(); }
  [[nodiscard]] bool empty() const noexcept { return X.rows() == 0; }

  /// Rows selected by `rows`, in that order.
  [[nodiscard]] SnapshotSet subset(const std::vector<Eigen::Index>& rows) const;
};

}  // namespace kedmd
