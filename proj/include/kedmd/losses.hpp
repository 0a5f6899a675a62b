#pragma once

#include <array>
#include <limits>

#include "kedmd/kernel.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/types.hpp"

namespace kedmd {

/// Weights of the combined loss and the regularization constants.
struct LossWeights {
  /// alpha[0..3] multiply dict, pred, eig, eig_pred.
  std::array<double, 4> alpha{0.0, 1.0, 0.0, 0.0};
  double beta1 = 0.0;  // L1 on outer weights
  double beta2 = 0.0;  // L2 on inner parameters
  /// Apply the L1 term to raw w_i instead of the normalized w~_i.
  bool l1_on_raw_weights = false;

  void validate() const;
};

/// Loss values of one batch. Entries that were not computed hold NaN.
struct LossReport {
  static constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

  double pred = kNotComputed;
  double dict = kNotComputed;
  double eig = kNotComputed;
  double eig_pred = kNotComputed;
  double tr_dict = kNotComputed;
  double tr_eig = kNotComputed;
  double tr_eig_pred = kNotComputed;
  double reg = 0.0;
  double total = 0.0;
  /// The truncated-variant eigenvector matrix was inverted through a pseudoinverse.
  bool tr_rank_deficient = false;
};

/// A loss value with its gradient in the flat parameter layout of the kernel.
struct LossValue {
  double value = 0.0;
  Vector gradient;  // empty when not requested
};

/// ||Y_b^T - C_p K Psi(X_b)||_F^2 with K and C_p frozen.
///
/// `model` must carry a projection (fit_projection) computed with the current kernel.
[[nodiscard]] LossValue loss_pred(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient = true);

/// Mean over the centers of ||Psi(x~)||_2; the normalizer of dict and eig losses is its square.
[[nodiscard]] double dictionary_norm_estimate(const KoopmanModel& model);

/// ||Psi(Y_b) - K Psi(X_b)||_F^2 / (mean_i ||Psi(x~_i)||)^2.
[[nodiscard]] LossValue loss_dict_normalized(const KoopmanModel& model, const SnapshotSet& batch,
                                             bool with_gradient = true);

/// ||W Psi(Y_b) - Lambda W Psi(X_b)||_F^2 over the same normalizer. Needs the spectrum.
[[nodiscard]] LossValue loss_eig_normalized(const KoopmanModel& model, const SnapshotSet& batch,
                                            bool with_gradient = true);

/// ||Y_b^T - C_m Lambda Phi(X_b)||_F^2 as a complex Frobenius norm. Needs the spectrum and modes.
[[nodiscard]] LossValue loss_eig_pred(const KoopmanModel& model, const SnapshotSet& batch, bool with_gradient = true);

struct TrLosses {
  double dict = 0.0;
  double eig = 0.0;
  double eig_pred = 0.0;
  bool rank_deficient = false;
};

/// Truncated-variant losses for tracking. `model_tr` needs spectrum and modes.
///   dict     ||V^ Phi(Y_b) - V^ Lambda Phi(X_b)||_F^2
///   eig      ||Phi(Y_b) - Lambda Phi(X_b)||_F^2
///   eig_pred ||Y_b^T - C_m Lambda Phi(X_b)||_F^2
/// with Phi = W^ Sigma^+ Z^T Psi and V^ the inverse (or pseudoinverse) of W^.
[[nodiscard]] TrLosses loss_tr_suite(const KoopmanModel& model_tr, const SnapshotSet& batch);

/// beta1 * sum|w~_i| + beta2 * sum theta^2 over every inner parameter.
[[nodiscard]] LossValue regularization(const WeightedKernelSum& kernel, double beta1, double beta2,
                                       bool l1_on_raw_weights = false);

/// Which losses to evaluate besides those with nonzero alpha.
struct LossTracking {
  bool sk_spectral = true;  // eig, eig_pred
  bool dict = true;
};

/// alpha-weighted sum of the sk losses plus regularization.
///
/// Losses with alpha_i = 0 are only evaluated when `tracking` asks for them and
/// never enter the total. `gradient`, when non-null, receives the gradient of the total.
/// `model_tr`, when non-null, adds the truncated-variant tracking values.
[[nodiscard]] LossReport combined_loss(const KoopmanModel& model, const SnapshotSet& batch,
                                       const LossWeights& weights, Vector* gradient = nullptr,
                                       const LossTracking& tracking = {}, const KoopmanModel* model_tr = nullptr);

}  // namespace kedmd
