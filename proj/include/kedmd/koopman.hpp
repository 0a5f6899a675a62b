#pragma once

#include <vector>

#include "kedmd/kernel.hpp"
#include "kedmd/linalg.hpp"
#include "kedmd/types.hpp"

namespace kedmd {

/// sk: EDMD on the dictionary {g(., x~_1), ..., g(., x~_N)}.
/// tr: the truncated-SVD kernel EDMD built from the eigendecomposition of g(X~, X~).
enum class Variant { Simplified, Truncated };

/// A fitted finite-dimensional Koopman approximation.
///
/// Conventions: the dictionary at a point x is Psi(x) = gram(X~, x), a column
/// of length N~. K satisfies Psi(Y~) ~= K Psi(X~), so K = g(X~, Y~) (g(X~, X~) + beta I)^+
/// for the simplified variant. Eigenfunctions are Phi(x) = coefficients() Psi(x).
struct KoopmanModel {
  KoopmanModel(WeightedKernelSum k, SnapshotSet c) : kernel(std::move(k)), centers(std::move(c)) {}

  WeightedKernelSum kernel;
  SnapshotSet centers;
  Variant variant = Variant::Simplified;
  double beta_koop = 0.0;

  Matrix gram_xx;  // g(X~, X~)
  Matrix gram_xy;  // g(X~, Y~), i.e. Psi(Y~)
  Matrix K;

  CVector eigenvalues;
  CMatrix left_vectors;   // row j: left eigenvector of K
  CMatrix right_vectors;  // column j: right eigenvector of K

  Matrix projection;  // C_p, d x N~; empty until fit_projection
  CMatrix modes;      // C_m, d x rank; empty until fit_modes

  // Truncated variant only: g(X~, X~) = Z diag(sigma)^2 Z^T on the retained rank.
  Matrix Z;
  Vector sigma;

  [[nodiscard]] Eigen::Index rank() const noexcept { return K.rows(); }
  [[nodiscard]] bool has_spectrum() const noexcept { return eigenvalues.size() == K.rows() && K.rows() > 0; }
};

/// Fits K_sk. `with_spectrum = false` skips the eigendecomposition.
[[nodiscard]] KoopmanModel fit_sk(const WeightedKernelSum& kernel, const SnapshotSet& centers, double beta_koop,
                                  bool with_spectrum = true);

/// Default truncation of fit_tr; sigma^2 cutoff matches the sk pseudoinverse cutoff.
inline constexpr double kDefaultRankTol = 1e-5;

/// Fits K_tr = (Z Sigma^+)^T g(X~, Y~) (Z Sigma^+), keeping Sigma_ii > rank_tol * max(Sigma).
[[nodiscard]] KoopmanModel fit_tr(const WeightedKernelSum& kernel, const SnapshotSet& centers,
                                  double rank_tol = kDefaultRankTol);

/// The simplified-variant operator implied by a truncated model: (Z Sigma) K_tr (Z Sigma)^+.
[[nodiscard]] Matrix sk_operator_from_tr(const KoopmanModel& tr);

enum class MapDirection { TrToSk, SkToTr };

/// Eigenvectors carried between the two variants.
///   TrToSk: (lambda, w Sigma^+ Z^T, Z Sigma v) from the truncated model's own eigensystem.
///   SkToTr: (lambda, w Z Sigma, Sigma^+ Z^T v) from the eigensystem of sk_operator_from_tr().
/// Vectors are not renormalized.
[[nodiscard]] Eigensystem map_spectrum(const KoopmanModel& tr, MapDirection direction);
/// Same maps applied to an explicit source eigensystem.
[[nodiscard]] Eigensystem map_spectrum(const KoopmanModel& tr, const Eigensystem& source, MapDirection direction);

/// Psi(points) = gram(X~, points), N~ x m.
[[nodiscard]] Matrix dictionary_at(const KoopmanModel& model, const Matrix& points);

/// Rows map dictionary values to eigenfunction values: W (sk) or W^ Sigma^+ Z^T (tr).
[[nodiscard]] CMatrix eigenfunction_coefficients(const KoopmanModel& model);

/// Phi(points), rank x m.
[[nodiscard]] CMatrix eigenfunctions_at(const KoopmanModel& model, const Matrix& points);

/// C_p = X~^T (g(X~, X~) + beta I)^+.
[[nodiscard]] Matrix fit_projection(const KoopmanModel& model, double beta_modes);

/// Koopman modes for the identity observable: argmin_C ||Y~^T - C Lambda Phi(X~)||_F^2 (+ beta ||C||^2).
[[nodiscard]] CMatrix fit_modes(const KoopmanModel& model, double beta);

enum class PredictMethod { Spectral, Recursive };

/// Trajectory x_1..x_steps from x0 (steps x d).
///
/// Spectral: Re(C_m Lambda^t Phi(x0)). Recursive: x_{t+1} = C_p K Psi(x_t).
/// Throws DivergenceError on the first non-finite state.
[[nodiscard]] Matrix predict(const KoopmanModel& model, const Vector& x0, int steps,
                             PredictMethod method = PredictMethod::Spectral);

/// Imaginary part discarded by the spectral route, for diagnostics (steps x d).
[[nodiscard]] Matrix predict_spectral_imag(const KoopmanModel& model, const Vector& x0, int steps);

struct EigenpairReport {
  Complex eigenvalue;
  CRowVector left_vector;
  double residual = 0.0;
  /// Eigenfunction vanishes on the evaluation set; residual is reported as 0.
  bool degenerate = false;
};

/// resDMD residual of eigenpair j on `eval_set`; throws DegenerateEigenfunction when
/// the eigenfunction vanishes there.
[[nodiscard]] double residual(const KoopmanModel& model, Eigen::Index j, const SnapshotSet& eval_set);

/// Same, with an explicit eigenvalue and coefficient row (dictionary space).
[[nodiscard]] double residual(const KoopmanModel& model, Complex lambda, const CRowVector& coefficients,
                              const SnapshotSet& eval_set);

/// Residual of every eigenpair; degenerate ones are flagged instead of throwing.
[[nodiscard]] std::vector<EigenpairReport> spectrum_report(const KoopmanModel& model, const SnapshotSet& eval_set);

}  // namespace kedmd
