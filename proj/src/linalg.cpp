#include "kedmd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "kedmd/errors.hpp"

namespace kedmd {
namespace {

bool eigen_order(const Complex& a, const Complex& b) {
  const double ma = std::abs(a);
  const double mb = std::abs(b);
  if (ma != mb) return ma > mb;
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

std::vector<Eigen::Index> sorted_order(const CVector& values) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return eigen_order(values[a], values[b]); });
  return idx;
}

}  // namespace

Matrix solve_regularized(const Matrix& G, double beta, const Matrix& rhs) {
  if (G.rows() != G.cols()) throw InvalidArgument("solve_regularized: matrix must be square");
  if (G.rows() != rhs.rows()) throw InvalidArgument("solve_regularized: right-hand side has wrong height");
  if (beta < 0.0) throw InvalidArgument("solve_regularized: beta must be nonnegative");
  if (!G.allFinite()) throw NumericError("solve_regularized: non-finite matrix");

  if (beta > 0.0) {
    Matrix shifted = G;
    shifted.diagonal().array() += beta;
    Eigen::LDLT<Matrix> ldlt(shifted);
    if (ldlt.info() == Eigen::Success) {
      Matrix x = ldlt.solve(rhs);
      if (x.allFinite()) return x;
    }
    // indefinite or singular shift: fall through to the SVD route on the shifted matrix
    Eigen::BDCSVD<Matrix> svd(shifted, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(kPinvCutoff);
    return svd.solve(rhs);
  }
  Eigen::BDCSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  return svd.solve(rhs);
}

CVector sorted_eigenvalues(const Matrix& K) {
  Eigen::EigenSolver<Matrix> es(K, false);
  if (es.info() != Eigen::Success) throw NumericError("eigenvalue iteration did not converge");
  const CVector raw = es.eigenvalues();
  const auto order = sorted_order(raw);
  CVector out(raw.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[static_cast<Eigen::Index>(i)] = raw[order[i]];
  return out;
}

Eigensystem eigensystem(const Matrix& K) {
  if (K.rows() != K.cols()) throw InvalidArgument("eigensystem: matrix must be square");
  if (!K.allFinite()) throw NumericError("eigensystem: non-finite matrix");
  const Eigen::Index n = K.rows();

  Eigen::EigenSolver<Matrix> right_solver(K, true);
  Eigen::EigenSolver<Matrix> left_solver(K.transpose(), true);
  if (right_solver.info() != Eigen::Success || left_solver.info() != Eigen::Success) {
    throw NumericError("eigenvalue iteration did not converge");
  }
  const CVector rvals = right_solver.eigenvalues();
  const CMatrix rvecs = right_solver.eigenvectors();
  const CVector lvals = left_solver.eigenvalues();
  const CMatrix lvecs = left_solver.eigenvectors();  // columns u with K^T u = mu u, so u^T K = mu u^T

  Eigensystem out;
  out.values.resize(n);
  out.right.resize(n, n);
  out.left.resize(n, n);
  const auto order = sorted_order(rvals);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.values[j] = rvals[order[static_cast<std::size_t>(j)]];
    CVector v = rvecs.col(order[static_cast<std::size_t>(j)]);
    const double nv = v.norm();
    out.right.col(j) = nv > 0.0 ? CVector(v / nv) : v;
  }

  // Pair left vectors by eigenvalue proximity; near-ties go to the left vector
  // best aligned with the right one (largest normalized |w v|).
  const double scale = std::max(1.0, rvals.cwiseAbs().maxCoeff());
  const double tie_tol = 1e-8 * scale;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Complex lambda = out.values[j];
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!used[static_cast<std::size_t>(k)]) best_dist = std::min(best_dist, std::abs(lvals[k] - lambda));
    }
    Eigen::Index pick = -1;
    double best_align = -1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      if (std::abs(lvals[k] - lambda) > best_dist + tie_tol) continue;
      const CVector u = lvecs.col(k);
      const double align = std::abs(u.transpose().dot(out.right.col(j).conjugate())) / std::max(u.norm(), 1e-300);
      if (align > best_align) {
        best_align = align;
        pick = k;
      }
    }
    used[static_cast<std::size_t>(pick)] = true;
    CVector u = lvecs.col(pick);
    const double nu = u.norm();
    out.left.row(j) = (nu > 0.0 ? CVector(u / nu) : u).transpose();
  }
  return out;
}

CMatrix solve_right_least_squares(const CMatrix& B, const CMatrix& A, double beta) {
  if (B.cols() != A.cols()) throw InvalidArgument("least squares: column counts differ");
  if (beta < 0.0) throw InvalidArgument("least squares: beta must be nonnegative");
  // C A ~= B  <=>  A^H C^H ~= B^H; with A = U S V^H, C = B V diag(s / (s^2 + beta)) U^H
  Eigen::BDCSVD<CMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  const double smax = s.size() > 0 ? s.maxCoeff() : 0.0;
  Vector filt(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (beta > 0.0) {
      filt[i] = s[i] / (s[i] * s[i] + beta);
    } else {
      filt[i] = s[i] > kPinvCutoff * smax ? 1.0 / s[i] : 0.0;
    }
  }
  const CMatrix out = (B * svd.matrixV()) * filt.asDiagonal() * svd.matrixU().adjoint();
  if (!out.allFinite()) throw NumericError("least squares produced non-finite coefficients");
  return out;
}

}  // namespace kedmd
