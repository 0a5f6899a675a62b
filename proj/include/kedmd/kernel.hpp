#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kedmd/types.hpp"

namespace kedmd {

using VecRef = Eigen::Ref<const Eigen::VectorXd>;

enum class KernelKind { Rbf, Linear, Cosine, Nngp, EmbeddedRbf, Custom };

[[nodiscard]] std::string_view to_string(KernelKind kind);
/// Throws InvalidArgument for unknown names. `Custom` cannot be parsed.
[[nodiscard]] KernelKind kernel_kind_from_string(std::string_view name);

/// Parameter names of a built-in kind, in storage order.
[[nodiscard]] std::vector<std::string> param_names(KernelKind kind);

/// Denominator guard for length scales: evaluation uses sigma^2 + kSigmaFloor.
inline constexpr double kSigmaFloor = 1e-12;

/// One parameterized kernel g_theta(x, y).
///
/// Parameters per kind:
///   Rbf          exp(-|x-y|^2 / (2 sigma^2))                 {sigma}
///   Linear       c1^2 <x, y>                                  {c1}
///   Cosine       cos(a |x-y|^2)                               {a}
///   Nngp         ReLU network-GP closed form                  {b1, b2}
///   EmbeddedRbf  Rbf on h(x) = (cos x_k, sin x_k)_k           {sigma}
///
/// Custom primitives wrap an arbitrary callable without learnable parameters
/// and exist to exercise the symmetry gate.
class PrimitiveKernel {
 public:
  using CustomFn = std::function<double(const VecRef&, const VecRef&)>;

  static PrimitiveKernel rbf(double sigma);
  static PrimitiveKernel linear(double c1);
  /// Not positive semidefinite in general; construction logs a warning.
  static PrimitiveKernel cosine(double a);
  static PrimitiveKernel nngp(double b1, double b2);
  static PrimitiveKernel embedded_rbf(double sigma);
  static PrimitiveKernel custom(std::string name, CustomFn fn, Eigen::Index probe_dim);
  static PrimitiveKernel make(KernelKind kind, std::vector<double> params);

  [[nodiscard]] KernelKind kind() const noexcept { return kind_; }
  [[nodiscard]] std::span<const double> params() const noexcept { return params_; }
  [[nodiscard]] std::size_t num_params() const noexcept { return params_.size(); }
  [[nodiscard]] const std::string& custom_name() const noexcept { return custom_name_; }
  [[nodiscard]] Eigen::Index probe_dim() const noexcept { return probe_dim_; }
  [[nodiscard]] const CustomFn& custom_fn() const noexcept { return custom_; }

  [[nodiscard]] PrimitiveKernel with_params(std::span<const double> params) const;

  [[nodiscard]] double operator()(const VecRef& x, const VecRef& y) const;
  /// Value plus d g / d params written into `grad` (size num_params()).
  double eval_with_grad(const VecRef& x, const VecRef& y, std::span<double> grad) const;

  /// Names such as "sigma", "b1"; used in logs and CSV headers.
  [[nodiscard]] std::vector<std::string> param_names() const;

 private:
  PrimitiveKernel(KernelKind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {}

  KernelKind kind_;
  std::vector<double> params_;
  CustomFn custom_;
  std::string custom_name_;
  Eigen::Index probe_dim_ = 0;
};

/// Partials of a weighted kernel sum at one pair (x, y).
struct ParamGradient {
  std::vector<double> outer;               // d g / d w_i
  std::vector<std::vector<double>> inner;  // d g / d theta_{i,k}

  /// Same layout as WeightedKernelSum::parameters().
  [[nodiscard]] Vector flatten() const;
};

/// g_theta = sum_i (w_i / wbar)^2 g_{theta_i}, wbar = sum_i |w_i|.
///
/// The flattened parameter vector is [w_1..w_M, theta_1..., ..., theta_M...].
class WeightedKernelSum {
 public:
  WeightedKernelSum(std::vector<PrimitiveKernel> primitives, std::vector<double> weights);

  [[nodiscard]] double operator()(const VecRef& x, const VecRef& y) const;

  [[nodiscard]] const std::vector<PrimitiveKernel>& primitives() const noexcept { return primitives_; }
  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
  [[nodiscard]] std::size_t size() const noexcept { return primitives_.size(); }

  [[nodiscard]] double weight_norm() const noexcept;
  /// w_i / wbar. Throws DegenerateKernel when wbar == 0.
  [[nodiscard]] std::vector<double> normalized_weights() const;

  [[nodiscard]] std::size_t num_parameters() const noexcept;
  [[nodiscard]] Vector parameters() const;
  [[nodiscard]] WeightedKernelSum with_parameters(const Vector& flat) const;
  /// Offset of primitive i's first inner parameter in the flat vector.
  [[nodiscard]] std::size_t inner_offset(std::size_t i) const;
  [[nodiscard]] std::string parameter_name(std::size_t flat_index) const;

 private:
  void check_evaluable() const;

  std::vector<PrimitiveKernel> primitives_;
  std::vector<double> weights_;
};

[[nodiscard]] double eval(const WeightedKernelSum& kernel, const VecRef& x, const VecRef& y);

/// Closed-form ReLU NNGP kernel for a single hidden layer.
[[nodiscard]] double eval_nngp(double b1, double b2, const VecRef& x, const VecRef& y);

/// Analytic partials including the chain rule through wbar.
[[nodiscard]] ParamGradient grad_params(const WeightedKernelSum& kernel, const VecRef& x, const VecRef& y);

/// Entry (i, j) = g(row i of A, row j of B).
[[nodiscard]] Matrix gram(const WeightedKernelSum& kernel, const Matrix& A, const Matrix& B);

/// sum_ij cotangent(i, j) * d g(a_i, b_j) / d theta, flattened.
///
/// This is the vector-Jacobian product of gram() and is how every loss
/// pushes its Gram-matrix sensitivities back to kernel parameters.
[[nodiscard]] Vector gram_vjp(const WeightedKernelSum& kernel, const Matrix& A, const Matrix& B,
                              const Matrix& cotangent);

/// Which primitives survive pruning.
class KeepPolicy {
 public:
  static KeepPolicy all() { return KeepPolicy(Mode::All); }
  /// Keep the k primitives with largest |w_i|; on ties the lower index is kept.
  static KeepPolicy largest(std::size_t k);
  /// Drop the n primitives with smallest |w_i|; on ties the lower index is dropped.
  static KeepPolicy drop_smallest(std::size_t n);
  /// Keep primitives with |w_i| >= threshold.
  static KeepPolicy threshold(double t);
  static KeepPolicy indices(std::vector<std::size_t> keep);

  /// Sorted indices of primitives to keep. Throws InvalidArgument if none survive.
  [[nodiscard]] std::vector<std::size_t> select(const WeightedKernelSum& kernel) const;

 private:
  enum class Mode { All, Largest, DropSmallest, Threshold, Indices };
  explicit KeepPolicy(Mode m) : mode_(m) {}

  Mode mode_;
  std::size_t count_ = 0;
  double threshold_ = 0.0;
  std::vector<std::size_t> indices_;
};

/// Keeps the selected primitives with their current parameters and raw weights.
[[nodiscard]] WeightedKernelSum prune(const WeightedKernelSum& kernel, const KeepPolicy& policy);
/// Keeps `indices` of `source` (no reordering beyond sorting).
[[nodiscard]] WeightedKernelSum keep_primitives(const WeightedKernelSum& source,
                                                const std::vector<std::size_t>& indices);

}  // namespace kedmd
