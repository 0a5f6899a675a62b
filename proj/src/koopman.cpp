#include "kedmd/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kedmd/errors.hpp"

namespace kedmd {
namespace {

void require_centers(const SnapshotSet& centers) {
  if (centers.empty()) throw InvalidArgument("Koopman fit needs at least one center");
}

void attach_spectrum(KoopmanModel& model) {
  Eigensystem es = eigensystem(model.K);
  model.eigenvalues = std::move(es.values);
  model.left_vectors = std::move(es.left);
  model.right_vectors = std::move(es.right);
}

void require_truncated(const KoopmanModel& model) {
  if (model.variant != Variant::Truncated || model.Z.size() == 0) {
    throw WrongVariant("operation needs a truncated (tr) model carrying Z and Sigma");
  }
}

void require_spectrum(const KoopmanModel& model) {
  if (!model.has_spectrum()) throw InvalidArgument("model has no eigendecomposition");
}

Vector sigma_pinv(const Vector& sigma) {
  return sigma.unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 0.0; });
}

// Matrix Psi(Y~)^T on the left of (G + beta I)^+, i.e. rows of K^T.
Matrix sk_operator(const Matrix& gram_xx, const Matrix& gram_xy, double beta) {
  return solve_regularized(gram_xx, beta, gram_xy.transpose()).transpose();
}

// Operator used to advance dictionary values one step: K itself for sk,
// the equivalent simplified operator for tr.
Matrix dictionary_operator(const KoopmanModel& model) {
  return model.variant == Variant::Truncated ? sk_operator_from_tr(model) : model.K;
}

void check_points(const KoopmanModel& model, const Matrix& points) {
  if (points.cols() != model.centers.dim()) {
    throw InvalidArgument("points have dimension " + std::to_string(points.cols()) + ", centers have " +
                          std::to_string(model.centers.dim()));
  }
}

}  // namespace

KoopmanModel fit_sk(const WeightedKernelSum& kernel, const SnapshotSet& centers, double beta_koop,
                    bool with_spectrum) {
  require_centers(centers);
  if (!(beta_koop >= 0.0)) throw InvalidArgument("beta_koop must be nonnegative");
  KoopmanModel model{kernel, centers};
  model.variant = Variant::Simplified;
  model.beta_koop = beta_koop;
  model.gram_xx = gram(kernel, centers.X, centers.X);
  model.gram_xy = gram(kernel, centers.X, centers.Y);
  model.K = sk_operator(model.gram_xx, model.gram_xy, beta_koop);
  if (!model.K.allFinite()) throw NumericError("fit_sk: non-finite Koopman matrix");
  if (with_spectrum) attach_spectrum(model);
  return model;
}

KoopmanModel fit_tr(const WeightedKernelSum& kernel, const SnapshotSet& centers, double rank_tol) {
  require_centers(centers);
  if (!(rank_tol >= 0.0)) throw InvalidArgument("rank_tol must be nonnegative");
  KoopmanModel model{kernel, centers};
  model.variant = Variant::Truncated;
  model.gram_xx = gram(kernel, centers.X, centers.X);
  model.gram_xy = gram(kernel, centers.X, centers.Y);

  Eigen::SelfAdjointEigenSolver<Matrix> es(model.gram_xx);
  if (es.info() != Eigen::Success) throw NumericError("fit_tr: Gram eigendecomposition failed");
  const Vector s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();  // ascending
  const double smax = s.size() > 0 ? s.maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = s.size() - 1; i >= 0; --i) {
    if (s[i] > rank_tol * smax && s[i] > 0.0) keep.push_back(i);
  }
  if (keep.empty()) throw DegenerateKernel("fit_tr: every Gram singular value is below the cutoff");

  const auto r = static_cast<Eigen::Index>(keep.size());
  model.Z.resize(model.gram_xx.rows(), r);
  model.sigma.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    model.Z.col(j) = es.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
    model.sigma[j] = s[keep[static_cast<std::size_t>(j)]];
  }
  const Matrix zs = model.Z * sigma_pinv(model.sigma).asDiagonal();
  // Psi(Y~) = g(X~, Y~); the operator acts on the reduced coordinates Sigma^+ Z^T Psi.
  model.K = zs.transpose() * model.gram_xy * zs;
  if (!model.K.allFinite()) throw NumericError("fit_tr: non-finite Koopman matrix");
  attach_spectrum(model);
  return model;
}

Matrix sk_operator_from_tr(const KoopmanModel& tr) {
  require_truncated(tr);
  const Matrix zs = tr.Z * tr.sigma.asDiagonal();
  const Matrix zs_pinv = sigma_pinv(tr.sigma).asDiagonal() * tr.Z.transpose();
  return zs * tr.K * zs_pinv;
}

Eigensystem map_spectrum(const KoopmanModel& tr, const Eigensystem& source, MapDirection direction) {
  require_truncated(tr);
  const CMatrix zs = (tr.Z * tr.sigma.asDiagonal()).cast<Complex>();
  const CMatrix zs_pinv = (sigma_pinv(tr.sigma).asDiagonal() * tr.Z.transpose()).cast<Complex>();
  Eigensystem out;
  out.values = source.values;
  if (direction == MapDirection::TrToSk) {
    if (source.left.cols() != tr.rank()) throw InvalidArgument("map_spectrum: source is not a tr eigensystem");
    out.left = source.left * zs_pinv;
    out.right = zs * source.right;
  } else {
    if (source.left.cols() != tr.Z.rows()) throw InvalidArgument("map_spectrum: source is not an sk eigensystem");
    out.left = source.left * zs;
    out.right = zs_pinv * source.right;
  }
  return out;
}

Eigensystem map_spectrum(const KoopmanModel& tr, MapDirection direction) {
  require_truncated(tr);
  if (direction == MapDirection::TrToSk) {
    require_spectrum(tr);
    return map_spectrum(tr, Eigensystem{tr.eigenvalues, tr.left_vectors, tr.right_vectors}, direction);
  }
  return map_spectrum(tr, eigensystem(sk_operator_from_tr(tr)), direction);
}

Matrix dictionary_at(const KoopmanModel& model, const Matrix& points) {
  check_points(model, points);
  return gram(model.kernel, model.centers.X, points);
}

CMatrix eigenfunction_coefficients(const KoopmanModel& model) {
  require_spectrum(model);
  if (model.variant == Variant::Simplified) return model.left_vectors;
  const Matrix reduce = sigma_pinv(model.sigma).asDiagonal() * model.Z.transpose();
  return model.left_vectors * reduce.cast<Complex>();
}

CMatrix eigenfunctions_at(const KoopmanModel& model, const Matrix& points) {
  return eigenfunction_coefficients(model) * dictionary_at(model, points).cast<Complex>();
}

Matrix fit_projection(const KoopmanModel& model, double beta_modes) {
  if (!(beta_modes >= 0.0)) throw InvalidArgument("beta_modes must be nonnegative");
  // C_p = X~^T (G + beta I)^+ and G is symmetric, so C_p^T = (G + beta I)^+ X~.
  return solve_regularized(model.gram_xx, beta_modes, model.centers.X).transpose();
}

CMatrix fit_modes(const KoopmanModel& model, double beta) {
  if (!(beta >= 0.0)) throw InvalidArgument("mode regularization must be nonnegative");
  const CMatrix phi = eigenfunction_coefficients(model) * model.gram_xx.cast<Complex>();
  const CMatrix lambda_phi = model.eigenvalues.asDiagonal() * phi;
  return solve_right_least_squares(model.centers.Y.transpose().cast<Complex>(), lambda_phi, beta);
}

namespace {

CMatrix spectral_trajectory(const KoopmanModel& model, const Vector& x0, int steps) {
  require_spectrum(model);
  if (model.modes.cols() != model.rank()) throw InvalidArgument("predict: modes not fitted (call fit_modes)");
  if (x0.size() != model.centers.dim()) throw InvalidArgument("predict: initial state has wrong dimension");
  const CVector phi0 = eigenfunctions_at(model, x0.transpose()).col(0);
  CMatrix out(steps, model.centers.dim());
  CVector coeff = phi0;
  for (int t = 0; t < steps; ++t) {
    coeff = model.eigenvalues.cwiseProduct(coeff);
    out.row(t) = (model.modes * coeff).transpose();
  }
  return out;
}

}  // namespace

Matrix predict(const KoopmanModel& model, const Vector& x0, int steps, PredictMethod method) {
  if (steps < 0) throw InvalidArgument("predict: negative step count");
  const Eigen::Index d = model.centers.dim();
  if (steps == 0) return Matrix(0, d);
  Matrix out(steps, d);

  if (method == PredictMethod::Spectral) {
    const CMatrix traj = spectral_trajectory(model, x0, steps);
    for (int t = 0; t < steps; ++t) {
      out.row(t) = traj.row(t).real();
      if (!out.row(t).allFinite()) {
        throw DivergenceError("spectral prediction left the finite range at step " + std::to_string(t + 1), t);
      }
    }
    return out;
  }

  if (model.projection.cols() != model.centers.size() || model.projection.rows() != d) {
    throw InvalidArgument("predict: projection not fitted (call fit_projection)");
  }
  if (x0.size() != d) throw InvalidArgument("predict: initial state has wrong dimension");
  const Matrix step_map = model.projection * dictionary_operator(model);
  Vector x = x0;
  for (int t = 0; t < steps; ++t) {
    x = step_map * gram(model.kernel, model.centers.X, x.transpose()).col(0);
    if (!x.allFinite()) {
      throw DivergenceError("recursive prediction left the finite range at step " + std::to_string(t + 1), t);
    }
    out.row(t) = x.transpose();
  }
  return out;
}

Matrix predict_spectral_imag(const KoopmanModel& model, const Vector& x0, int steps) {
  if (steps < 0) throw InvalidArgument("predict: negative step count");
  if (steps == 0) return Matrix(0, model.centers.dim());
  return spectral_trajectory(model, x0, steps).imag();
}

namespace {

struct ResidualGrams {
  Matrix psi_x;  // Psi(X), N~ x m
  Matrix psi_y;  // Psi(Y)
  double scale = 0.0;  // ||Psi(X)||_F^2
};

ResidualGrams residual_grams(const KoopmanModel& model, const SnapshotSet& eval_set) {
  if (eval_set.empty()) throw InvalidArgument("residual: empty evaluation set");
  check_points(model, eval_set.X);
  ResidualGrams g{gram(model.kernel, model.centers.X, eval_set.X), gram(model.kernel, model.centers.X, eval_set.Y),
                  0.0};
  g.scale = g.psi_x.squaredNorm();
  return g;
}

double residual_from_grams(const ResidualGrams& g, Complex lambda, const CRowVector& coefficients) {
  // ||w Psi(Y) - lambda w Psi(X)||^2 / ||w Psi(X)||^2, formed from the eigenfunction values
  // directly so small residuals do not suffer cancellation.
  const CRowVector phi_x = coefficients * g.psi_x;
  const CRowVector phi_y = coefficients * g.psi_y;
  const double numerator = (phi_y - lambda * phi_x).squaredNorm();
  const double denominator = phi_x.squaredNorm();

  const double eps = std::numeric_limits<double>::epsilon();
  if (!(denominator > eps * eps * coefficients.squaredNorm() * g.scale) || !(denominator > 0.0)) {
    throw DegenerateEigenfunction("eigenfunction vanishes on the evaluation set");
  }
  const double r2 = numerator / denominator;
  if (!std::isfinite(r2)) throw NumericError("residual: non-finite value");
  return std::sqrt(r2);
}

}  // namespace

double residual(const KoopmanModel& model, Complex lambda, const CRowVector& coefficients,
                const SnapshotSet& eval_set) {
  if (coefficients.size() != model.centers.size()) {
    throw InvalidArgument("residual: coefficient row must live in the dictionary space");
  }
  return residual_from_grams(residual_grams(model, eval_set), lambda, coefficients);
}

double residual(const KoopmanModel& model, Eigen::Index j, const SnapshotSet& eval_set) {
  require_spectrum(model);
  if (j < 0 || j >= model.rank()) throw InvalidArgument("residual: eigen index out of range");
  const CMatrix coeff = eigenfunction_coefficients(model);
  return residual(model, model.eigenvalues[j], coeff.row(j), eval_set);
}

std::vector<EigenpairReport> spectrum_report(const KoopmanModel& model, const SnapshotSet& eval_set) {
  require_spectrum(model);
  const CMatrix coeff = eigenfunction_coefficients(model);
  const ResidualGrams grams = residual_grams(model, eval_set);
  std::vector<EigenpairReport> out;
  out.reserve(static_cast<std::size_t>(model.rank()));
  for (Eigen::Index j = 0; j < model.rank(); ++j) {
    EigenpairReport rep;
    rep.eigenvalue = model.eigenvalues[j];
    rep.left_vector = model.left_vectors.row(j);
    try {
      rep.residual = residual_from_grams(grams, rep.eigenvalue, coeff.row(j));
    } catch (const DegenerateEigenfunction&) {
      rep.residual = 0.0;
      rep.degenerate = true;
    }
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace kedmd
