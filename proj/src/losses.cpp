#include "kedmd/losses.hpp"

#include <cmath>
#include <string>

#include "kedmd/errors.hpp"

namespace kedmd {
namespace {

void check_batch(const KoopmanModel& model, const SnapshotSet& batch) {
  if (batch.dim() != model.centers.dim()) {
    throw InvalidArgument("batch dimension " + std::to_string(batch.dim()) + " does not match centers dimension " +
                          std::to_string(model.centers.dim()));
  }
}

void require_projection(const KoopmanModel& model) {
  if (model.projection.rows() != model.centers.dim() || model.projection.cols() != model.centers.size()) {
    throw InvalidArgument("loss needs the projection C_p (call fit_projection)");
  }
}

void require_modes(const KoopmanModel& model) {
  if (!model.has_spectrum()) throw InvalidArgument("loss needs the eigendecomposition");
  if (model.modes.rows() != model.centers.dim() || model.modes.cols() != model.rank()) {
    throw InvalidArgument("loss needs the Koopman modes C_m (call fit_modes)");
  }
}

// Cotangent for g(X~, X~) from d(n^2)^{-1}, n = mean_i ||G(:, i)||: scaled by `outer`.
Matrix norm_estimate_cotangent(const Matrix& G, double outer) {
  const auto n = static_cast<double>(G.cols());
  Matrix C(G.rows(), G.cols());
  for (Eigen::Index i = 0; i < G.cols(); ++i) {
    const double len = G.col(i).norm();
    C.col(i) = len > 0.0 ? Vector(G.col(i) * (outer / (n * len))) : Vector::Zero(G.rows());
  }
  return C;
}

double normalizer(const Matrix& gram_xx) {
  const double n = gram_xx.cols() == 0 ? 0.0 : gram_xx.colwise().norm().mean();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateKernel("dictionary norm estimate vanishes");
  return n;
}

}  // namespace

void LossWeights::validate() const {
  for (double a : alpha) {
    if (!(a >= 0.0)) throw InvalidArgument("loss weights must be nonnegative");
  }
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw InvalidArgument("regularization constants must be nonnegative");
}

LossValue loss_pred(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient) {
  check_batch(model, batch);
  require_projection(model);
  const Matrix Gb = gram(model.kernel, model.centers.X, batch.X);
  const Matrix CK = model.projection * model.K;
  const Matrix R = CK * Gb - batch.Y.transpose();
  LossValue out;
  out.value = R.squaredNorm();
  if (with_gradient) out.gradient = gram_vjp(model.kernel, model.centers.X, batch.X, 2.0 * CK.transpose() * R);
  return out;
}

double dictionary_norm_estimate(const KoopmanModel& model) {
  if (model.centers.empty()) return 0.0;
  return gram(model.kernel, model.centers.X, model.centers.X).colwise().norm().mean();
}

LossValue loss_dict_normalized(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient) {
  check_batch(model, batch);
  // The normalizer follows the current kernel, unlike the frozen K.
  const Matrix G = gram(model.kernel, model.centers.X, model.centers.X);
  const double n = normalizer(G);
  const Matrix Gx = gram(model.kernel, model.centers.X, batch.X);
  const Matrix Gy = gram(model.kernel, model.centers.X, batch.Y);
  const Matrix E = Gy - model.K * Gx;
  const double num = E.squaredNorm();
  LossValue out;
  out.value = num / (n * n);
  if (with_gradient) {
    const double inv = 1.0 / (n * n);
    out.gradient = gram_vjp(model.kernel, model.centers.X, batch.Y, 2.0 * inv * E);
    out.gradient += gram_vjp(model.kernel, model.centers.X, batch.X, -2.0 * inv * model.K.transpose() * E);
    out.gradient += gram_vjp(model.kernel, model.centers.X, model.centers.X,
                             norm_estimate_cotangent(G, -2.0 * num / (n * n * n)));
  }
  return out;
}

LossValue loss_eig_normalized(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient) {
  check_batch(model, batch);
  // The normalizer follows the current kernel, unlike the frozen K.
  const Matrix G = gram(model.kernel, model.centers.X, model.centers.X);
  const double n = normalizer(G);
  const CMatrix W = eigenfunction_coefficients(model);
  const CMatrix LW = model.eigenvalues.asDiagonal() * W;
  const Matrix Gx = gram(model.kernel, model.centers.X, batch.X);
  const Matrix Gy = gram(model.kernel, model.centers.X, batch.Y);
  const CMatrix E = W * Gy.cast<Complex>() - LW * Gx.cast<Complex>();
  const double num = E.squaredNorm();
  LossValue out;
  out.value = num / (n * n);
  if (with_gradient) {
    const double inv = 1.0 / (n * n);
    out.gradient = gram_vjp(model.kernel, model.centers.X, batch.Y, 2.0 * inv * (W.adjoint() * E).real());
    out.gradient += gram_vjp(model.kernel, model.centers.X, batch.X, -2.0 * inv * (LW.adjoint() * E).real());
    out.gradient += gram_vjp(model.kernel, model.centers.X, model.centers.X,
                             norm_estimate_cotangent(G, -2.0 * num / (n * n * n)));
  }
  return out;
}

LossValue loss_eig_pred(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient) {
  check_batch(model, batch);
  require_modes(model);
  const CMatrix A = model.modes * model.eigenvalues.asDiagonal() * eigenfunction_coefficients(model);
  const Matrix Gx = gram(model.kernel, model.centers.X, batch.X);
  const CMatrix E = A * Gx.cast<Complex>() - batch.Y.transpose().cast<Complex>();
  LossValue out;
  out.value = E.squaredNorm();
  if (with_gradient) {
    out.gradient = gram_vjp(model.kernel, model.centers.X, batch.X, 2.0 * (A.adjoint() * E).real());
  }
  return out;
}

TrLosses loss_tr_suite(const KoopmanModel& model_tr, const SnapshotSet& batch) {
  if (model_tr.variant != Variant::Truncated) throw WrongVariant("loss_tr_suite needs a truncated model");
  check_batch(model_tr, batch);
  require_modes(model_tr);
  TrLosses out;

  const CMatrix& What = model_tr.left_vectors;
  Eigen::JacobiSVD<CMatrix> svd(What, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  CMatrix Vhat;
  if (s.size() == 0 || s[s.size() - 1] <= 1e-10 * s[0]) {
    out.rank_deficient = true;
    svd.setThreshold(1e-10);
    Vhat = svd.solve(CMatrix::Identity(What.rows(), What.rows()));
  } else {
    Vhat = What.inverse();
  }

  const CMatrix coeff = eigenfunction_coefficients(model_tr);
  const CMatrix phi_x = coeff * gram(model_tr.kernel, model_tr.centers.X, batch.X).cast<Complex>();
  const CMatrix phi_y = coeff * gram(model_tr.kernel, model_tr.centers.X, batch.Y).cast<Complex>();
  const CMatrix lphi_x = model_tr.eigenvalues.asDiagonal() * phi_x;
  out.eig = (phi_y - lphi_x).squaredNorm();
  out.dict = (Vhat * (phi_y - lphi_x)).squaredNorm();
  out.eig_pred = (batch.Y.transpose().cast<Complex>() - model_tr.modes * lphi_x).squaredNorm();
  return out;
}

LossValue regularization(const WeightedKernelSum& kernel, double beta1, double beta2, bool l1_on_raw_weights) {
  LossValue out;
  out.gradient = Vector::Zero(static_cast<Eigen::Index>(kernel.num_parameters()));
  const auto& w = kernel.weights();
  double l1 = 0.0;
  if (l1_on_raw_weights) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      l1 += std::abs(w[i]);
      out.gradient[static_cast<Eigen::Index>(i)] = beta1 * static_cast<double>((w[i] > 0.0) - (w[i] < 0.0));
    }
  } else {
    // sum |w_i / wbar| is identically 1, so this term carries no gradient.
    for (double wt : kernel.normalized_weights()) l1 += std::abs(wt);
  }
  double l2 = 0.0;
  const Vector theta = kernel.parameters();
  for (auto k = static_cast<Eigen::Index>(w.size()); k < theta.size(); ++k) {
    l2 += theta[k] * theta[k];
    out.gradient[k] = 2.0 * beta2 * theta[k];
  }
  out.value = beta1 * l1 + beta2 * l2;
  return out;
}

LossReport combined_loss(const KoopmanModel& model, const SnapshotSet& batch, const LossWeights& weights,
                         Vector* gradient, const LossTracking& tracking, const KoopmanModel* model_tr) {
  weights.validate();
  const bool want_grad = gradient != nullptr;
  const auto np = static_cast<Eigen::Index>(model.kernel.num_parameters());
  Vector grad = Vector::Zero(np);
  LossReport rep;
  double total = 0.0;

  auto accumulate = [&](double alpha, const LossValue& v) {
    if (alpha == 0.0) return;
    total += alpha * v.value;
    if (want_grad) grad += alpha * v.gradient;
  };

  const auto& a = weights.alpha;
  if (a[1] > 0.0 || model.projection.size() > 0) {
    const LossValue v = loss_pred(model, batch, want_grad && a[1] > 0.0);
    rep.pred = v.value;
    accumulate(a[1], v);
  }
  if (a[0] > 0.0 || tracking.dict) {
    const LossValue v = loss_dict_normalized(model, batch, want_grad && a[0] > 0.0);
    rep.dict = v.value;
    accumulate(a[0], v);
  }
  const bool spectral_available = model.has_spectrum();
  if (a[2] > 0.0 || (tracking.sk_spectral && spectral_available)) {
    const LossValue v = loss_eig_normalized(model, batch, want_grad && a[2] > 0.0);
    rep.eig = v.value;
    accumulate(a[2], v);
  }
  if (a[3] > 0.0 || (tracking.sk_spectral && spectral_available && model.modes.size() > 0)) {
    const LossValue v = loss_eig_pred(model, batch, want_grad && a[3] > 0.0);
    rep.eig_pred = v.value;
    accumulate(a[3], v);
  }
  if (model_tr != nullptr) {
    const TrLosses tr = loss_tr_suite(*model_tr, batch);
    rep.tr_dict = tr.dict;
    rep.tr_eig = tr.eig;
    rep.tr_eig_pred = tr.eig_pred;
    rep.tr_rank_deficient = tr.rank_deficient;
  }

  const LossValue reg = regularization(model.kernel, weights.beta1, weights.beta2, weights.l1_on_raw_weights);
  rep.reg = reg.value;
  total += reg.value;
  if (want_grad) {
    grad += reg.gradient;
    *gradient = std::move(grad);
  }
  rep.total = total;
  return rep;
}

}  // namespace kedmd
