#include "kedmd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kedmd/errors.hpp"
#include "kedmd/log.hpp"
#include "kedmd/rng.hpp"

namespace kedmd {
namespace {

constexpr double kPi = std::numbers::pi;

// Pair quantities shared by all primitives of a sum.
struct PairStats {
  double sqdist = 0.0;
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  double emb_sqdist = 0.0;
};

struct Needs {
  bool sqdist = false;
  bool dot = false;
  bool emb = false;
};

Needs needs_of(const std::vector<PrimitiveKernel>& prims) {
  Needs n;
  for (const auto& p : prims) {
    switch (p.kind()) {
      case KernelKind::Rbf:
      case KernelKind::Cosine: n.sqdist = true; break;
      case KernelKind::Linear:
      case KernelKind::Nngp: n.dot = true; break;
      case KernelKind::EmbeddedRbf: n.emb = true; break;
      case KernelKind::Custom: break;
    }
  }
  return n;
}

double embedded_sqdist(const VecRef& x, const VecRef& y) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double dc = std::cos(x[k]) - std::cos(y[k]);
    const double ds = std::sin(x[k]) - std::sin(y[k]);
    s += dc * dc + ds * ds;
  }
  return s;
}

PairStats make_stats(const Needs& n, const VecRef& x, const VecRef& y, double xx, double yy) {
  PairStats s;
  if (n.sqdist) s.sqdist = (x - y).squaredNorm();
  if (n.dot) {
    s.dot = x.dot(y);
    s.xx = xx;
    s.yy = yy;
  }
  if (n.emb) s.emb_sqdist = embedded_sqdist(x, y);
  return s;
}

PairStats make_stats(const Needs& n, const VecRef& x, const VecRef& y) {
  return make_stats(n, x, y, n.dot ? x.squaredNorm() : 0.0, n.dot ? y.squaredNorm() : 0.0);
}

double rbf_value(double sigma, double r2, double* dsigma) {
  const double s2 = sigma * sigma + kSigmaFloor;
  const double v = std::exp(-r2 / (2.0 * s2));
  if (dsigma != nullptr) *dsigma = v * r2 * sigma / (s2 * s2);
  return v;
}

double nngp_value(double b1, double b2, double sxy, double sxx, double syy, double dim, double* db1,
                  double* db2) {
  const double a = b1 * b1;
  const double c = b2 * b2;
  const double kxy = a * sxy / dim + c;
  const double kxx = a * sxx / dim + c;
  const double kyy = a * syy / dim + c;
  if (!(kxx > 0.0) || !(kyy > 0.0)) {
    throw NumericError("NNGP kernel: vanishing diagonal g0(x,x) or g0(y,y)");
  }
  const double S = std::sqrt(kxx * kyy);
  const double rho = std::clamp(kxy / S, -1.0, 1.0);
  const double w = std::acos(rho);
  const double J = std::sin(w) + (kPi - w) * std::cos(w);
  const double value = c + a / (2.0 * kPi) * S * J;

  if (db1 != nullptr) {
    // dJ/drho = pi - w, valid up to the clamp boundary
    auto partial = [&](double da, double dc) {
      const double dkxy = da * sxy / dim + dc;
      const double dkxx = da * sxx / dim + dc;
      const double dkyy = da * syy / dim + dc;
      const double dS = (dkxx * kyy + kxx * dkyy) / (2.0 * S);
      const double drho = dkxy / S - kxy * dS / (S * S);
      return dc + (da * S * J + a * dS * J + a * S * (kPi - w) * drho) / (2.0 * kPi);
    };
    *db1 = partial(2.0 * b1, 0.0);
    *db2 = partial(0.0, 2.0 * b2);
  }
  return value;
}

double primitive_value(const PrimitiveKernel& p, const PairStats& s, const VecRef& x, const VecRef& y,
                       double* grad) {
  const auto params = p.params();
  switch (p.kind()) {
    case KernelKind::Rbf: return rbf_value(params[0], s.sqdist, grad);
    case KernelKind::EmbeddedRbf: return rbf_value(params[0], s.emb_sqdist, grad);
    case KernelKind::Linear: {
      const double c1 = params[0];
      if (grad != nullptr) grad[0] = 2.0 * c1 * s.dot;
      return c1 * c1 * s.dot;
    }
    case KernelKind::Cosine: {
      const double a = params[0];
      if (grad != nullptr) grad[0] = -s.sqdist * std::sin(a * s.sqdist);
      return std::cos(a * s.sqdist);
    }
    case KernelKind::Nngp:
      return nngp_value(params[0], params[1], s.dot, s.xx, s.yy, static_cast<double>(x.size()), grad,
                        grad == nullptr ? nullptr : grad + 1);
    case KernelKind::Custom: return p.custom_fn()(x, y);
  }
  return 0.0;
}

std::size_t expected_params(KernelKind kind) {
  switch (kind) {
    case KernelKind::Nngp: return 2;
    case KernelKind::Custom: return 0;
    default: return 1;
  }
}

void check_finite(double v, std::size_t primitive) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite kernel value in primitive " + std::to_string(primitive),
                       static_cast<long>(primitive));
  }
}

}  // namespace

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Linear: return "linear";
    case KernelKind::Cosine: return "cosine";
    case KernelKind::Nngp: return "nngp";
    case KernelKind::EmbeddedRbf: return "embedded_rbf";
    case KernelKind::Custom: return "custom";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(std::string_view name) {
  for (auto k : {KernelKind::Rbf, KernelKind::Linear, KernelKind::Cosine, KernelKind::Nngp,
                 KernelKind::EmbeddedRbf}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown kernel kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// PrimitiveKernel

PrimitiveKernel PrimitiveKernel::rbf(double sigma) { return make(KernelKind::Rbf, {sigma}); }
PrimitiveKernel PrimitiveKernel::linear(double c1) { return make(KernelKind::Linear, {c1}); }
PrimitiveKernel PrimitiveKernel::cosine(double a) { return make(KernelKind::Cosine, {a}); }
PrimitiveKernel PrimitiveKernel::nngp(double b1, double b2) { return make(KernelKind::Nngp, {b1, b2}); }
PrimitiveKernel PrimitiveKernel::embedded_rbf(double sigma) { return make(KernelKind::EmbeddedRbf, {sigma}); }

PrimitiveKernel PrimitiveKernel::custom(std::string name, CustomFn fn, Eigen::Index probe_dim) {
  if (!fn) throw InvalidArgument("custom kernel needs a callable");
  if (probe_dim < 1) throw InvalidArgument("custom kernel needs a positive probe dimension");
  PrimitiveKernel p(KernelKind::Custom, {});
  p.custom_ = std::move(fn);
  p.custom_name_ = std::move(name);
  p.probe_dim_ = probe_dim;
  return p;
}

PrimitiveKernel PrimitiveKernel::make(KernelKind kind, std::vector<double> params) {
  if (kind == KernelKind::Custom) throw InvalidArgument("use PrimitiveKernel::custom for custom kernels");
  if (params.size() != expected_params(kind)) {
    throw InvalidArgument(std::string(to_string(kind)) + " kernel expects " +
                          std::to_string(expected_params(kind)) + " parameter(s), got " +
                          std::to_string(params.size()));
  }
  for (double v : params) {
    if (!std::isfinite(v)) throw InvalidArgument("kernel parameters must be finite");
  }
  if (kind == KernelKind::Cosine) {
    log::warn("cosine kernel cos(a|x-y|^2) is not positive semidefinite in general");
  }
  return PrimitiveKernel(kind, std::move(params));
}

PrimitiveKernel PrimitiveKernel::with_params(std::span<const double> params) const {
  if (params.size() != params_.size()) throw InvalidArgument("parameter count mismatch");
  PrimitiveKernel out = *this;
  std::copy(params.begin(), params.end(), out.params_.begin());
  return out;
}

double PrimitiveKernel::operator()(const VecRef& x, const VecRef& y) const {
  if (x.size() != y.size()) throw InvalidArgument("kernel inputs differ in dimension");
  const Needs n = needs_of({*this});
  return primitive_value(*this, make_stats(n, x, y), x, y, nullptr);
}

double PrimitiveKernel::eval_with_grad(const VecRef& x, const VecRef& y, std::span<double> grad) const {
  if (x.size() != y.size()) throw InvalidArgument("kernel inputs differ in dimension");
  if (grad.size() != params_.size()) throw InvalidArgument("gradient buffer has wrong size");
  const Needs n = needs_of({*this});
  return primitive_value(*this, make_stats(n, x, y), x, y, grad.empty() ? nullptr : grad.data());
}

std::vector<std::string> PrimitiveKernel::param_names() const { return kedmd::param_names(kind_); }

std::vector<std::string> param_names(KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf:
    case KernelKind::EmbeddedRbf: return {"sigma"};
    case KernelKind::Linear: return {"c1"};
    case KernelKind::Cosine: return {"a"};
    case KernelKind::Nngp: return {"b1", "b2"};
    case KernelKind::Custom: return {};
  }
  return {};
}

// ---------------------------------------------------------------------------
// WeightedKernelSum

WeightedKernelSum::WeightedKernelSum(std::vector<PrimitiveKernel> primitives, std::vector<double> weights)
    : primitives_(std::move(primitives)), weights_(std::move(weights)) {
  if (primitives_.empty()) throw InvalidArgument("kernel sum needs at least one primitive");
  if (primitives_.size() != weights_.size()) throw InvalidArgument("one outer weight per primitive required");
  for (double w : weights_) {
    if (!std::isfinite(w)) throw InvalidArgument("outer weights must be finite");
  }
  // Built-in kinds are symmetric by construction; probe anything else.
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    const auto& p = primitives_[i];
    if (p.kind() != KernelKind::Custom) continue;
    RandomStream rng(0x5eed, {stream_tag::kOracle, i});
    for (int trial = 0; trial < 8; ++trial) {
      Vector x(p.probe_dim()), y(p.probe_dim());
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        x[k] = rng.uniform(-2.0, 2.0);
        y[k] = rng.uniform(-2.0, 2.0);
      }
      const double gxy = p(x, y);
      const double gyx = p(y, x);
      if (std::abs(gxy - gyx) > 1e-12 * std::max(1.0, std::abs(gxy))) {
        throw DegenerateKernel("primitive " + std::to_string(i) + " ('" + p.custom_name() +
                               "') is not symmetric");
      }
    }
  }
}

double WeightedKernelSum::weight_norm() const noexcept {
  double s = 0.0;
  for (double w : weights_) s += std::abs(w);
  return s;
}

void WeightedKernelSum::check_evaluable() const {
  if (!(weight_norm() > 0.0)) throw DegenerateKernel("all outer weights are zero");
}

std::vector<double> WeightedKernelSum::normalized_weights() const {
  check_evaluable();
  const double wbar = weight_norm();
  std::vector<double> out(weights_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = weights_[i] / wbar;
  return out;
}

double WeightedKernelSum::operator()(const VecRef& x, const VecRef& y) const { return eval(*this, x, y); }

std::size_t WeightedKernelSum::num_parameters() const noexcept {
  std::size_t n = weights_.size();
  for (const auto& p : primitives_) n += p.num_params();
  return n;
}

std::size_t WeightedKernelSum::inner_offset(std::size_t i) const {
  std::size_t off = weights_.size();
  for (std::size_t k = 0; k < i; ++k) off += primitives_[k].num_params();
  return off;
}

Vector WeightedKernelSum::parameters() const {
  Vector out(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index k = 0;
  for (double w : weights_) out[k++] = w;
  for (const auto& p : primitives_) {
    for (double v : p.params()) out[k++] = v;
  }
  return out;
}

WeightedKernelSum WeightedKernelSum::with_parameters(const Vector& flat) const {
  if (static_cast<std::size_t>(flat.size()) != num_parameters()) {
    throw InvalidArgument("flat parameter vector has wrong length");
  }
  if (!flat.allFinite()) throw NumericError("non-finite kernel parameters");
  WeightedKernelSum out = *this;
  Eigen::Index k = 0;
  for (auto& w : out.weights_) w = flat[k++];
  for (auto& p : out.primitives_) {
    std::vector<double> v(p.num_params());
    for (auto& x : v) x = flat[k++];
    p = p.with_params(v);
  }
  return out;
}

std::string WeightedKernelSum::parameter_name(std::size_t flat_index) const {
  if (flat_index < weights_.size()) return "w" + std::to_string(flat_index + 1);
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    const auto off = inner_offset(i);
    const auto n = primitives_[i].num_params();
    if (flat_index >= off && flat_index < off + n) {
      return primitives_[i].param_names()[flat_index - off] + "_" + std::to_string(i + 1);
    }
  }
  throw InvalidArgument("parameter index out of range");
}

// ---------------------------------------------------------------------------
// Free functions

double eval(const WeightedKernelSum& kernel, const VecRef& x, const VecRef& y) {
  if (x.size() != y.size()) throw InvalidArgument("kernel inputs differ in dimension");
  const auto wt = kernel.normalized_weights();
  const auto& prims = kernel.primitives();
  const PairStats s = make_stats(needs_of(prims), x, y);
  double g = 0.0;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const double v = primitive_value(prims[i], s, x, y, nullptr);
    check_finite(v, i);
    g += wt[i] * wt[i] * v;
  }
  return g;
}

double eval_nngp(double b1, double b2, const VecRef& x, const VecRef& y) {
  if (x.size() != y.size() || x.size() == 0) throw InvalidArgument("NNGP inputs must share a positive dimension");
  return nngp_value(b1, b2, x.dot(y), x.squaredNorm(), y.squaredNorm(), static_cast<double>(x.size()), nullptr,
                    nullptr);
}

ParamGradient grad_params(const WeightedKernelSum& kernel, const VecRef& x, const VecRef& y) {
  if (x.size() != y.size()) throw InvalidArgument("kernel inputs differ in dimension");
  const auto wt = kernel.normalized_weights();
  const double wbar = kernel.weight_norm();
  const auto& prims = kernel.primitives();
  const auto& w = kernel.weights();
  const PairStats s = make_stats(needs_of(prims), x, y);

  ParamGradient out;
  out.outer.assign(prims.size(), 0.0);
  out.inner.resize(prims.size());
  std::vector<double> values(prims.size());
  double g = 0.0;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    out.inner[i].assign(prims[i].num_params(), 0.0);
    values[i] = primitive_value(prims[i], s, x, y, out.inner[i].empty() ? nullptr : out.inner[i].data());
    check_finite(values[i], i);
    for (auto& d : out.inner[i]) d *= wt[i] * wt[i];
    g += wt[i] * wt[i] * values[i];
  }
  // d(wt_i^2)/dw_j = 2 wt_i (delta_ij - wt_i sign(w_j)) / wbar
  for (std::size_t j = 0; j < prims.size(); ++j) {
    const double sgn = (w[j] > 0.0) - (w[j] < 0.0);
    out.outer[j] = 2.0 / wbar * (wt[j] * values[j] - sgn * g);
  }
  return out;
}

Vector ParamGradient::flatten() const {
  std::size_t n = outer.size();
  for (const auto& v : inner) n += v.size();
  Vector out(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (double v : outer) out[k++] = v;
  for (const auto& block : inner) {
    for (double v : block) out[k++] = v;
  }
  return out;
}

Matrix gram(const WeightedKernelSum& kernel, const Matrix& A, const Matrix& B) {
  if (A.cols() != B.cols()) throw InvalidArgument("gram: point sets differ in dimension");
  const auto wt = kernel.normalized_weights();
  const auto& prims = kernel.primitives();
  const Needs needs = needs_of(prims);
  const Matrix At = A.transpose();
  const Matrix Bt = B.transpose();
  Vector an = Vector::Zero(A.rows());
  Vector bn = Vector::Zero(B.rows());
  if (needs.dot) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) an[i] = At.col(i).squaredNorm();
    for (Eigen::Index j = 0; j < B.rows(); ++j) bn[j] = Bt.col(j).squaredNorm();
  }
  Matrix G(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    const auto bj = Bt.col(j);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const auto ai = At.col(i);
      const PairStats s = make_stats(needs, ai, bj, an[i], bn[j]);
      double g = 0.0;
      for (std::size_t k = 0; k < prims.size(); ++k) {
        const double v = primitive_value(prims[k], s, ai, bj, nullptr);
        if (!std::isfinite(v)) {
          throw NumericError("non-finite kernel value in primitive " + std::to_string(k) + " at entry (" +
                                 std::to_string(i) + ", " + std::to_string(j) + ")",
                             static_cast<long>(k), static_cast<long>(i), static_cast<long>(j));
        }
        g += wt[k] * wt[k] * v;
      }
      G(i, j) = g;
    }
  }
  return G;
}

Vector gram_vjp(const WeightedKernelSum& kernel, const Matrix& A, const Matrix& B, const Matrix& cotangent) {
  if (A.cols() != B.cols()) throw InvalidArgument("gram_vjp: point sets differ in dimension");
  if (cotangent.rows() != A.rows() || cotangent.cols() != B.rows()) {
    throw InvalidArgument("gram_vjp: cotangent shape does not match the Gram block");
  }
  const auto wt = kernel.normalized_weights();
  const double wbar = kernel.weight_norm();
  const auto& prims = kernel.primitives();
  const auto& w = kernel.weights();
  const Needs needs = needs_of(prims);
  const std::size_t M = prims.size();

  std::vector<std::size_t> offsets(M);
  std::size_t n_inner = 0;
  for (std::size_t k = 0; k < M; ++k) {
    offsets[k] = n_inner;
    n_inner += prims[k].num_params();
  }

  const Matrix At = A.transpose();
  const Matrix Bt = B.transpose();
  Vector an = Vector::Zero(A.rows());
  Vector bn = Vector::Zero(B.rows());
  if (needs.dot) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) an[i] = At.col(i).squaredNorm();
    for (Eigen::Index j = 0; j < B.rows(); ++j) bn[j] = Bt.col(j).squaredNorm();
  }

  // weighted_values[k] = sum_ij C_ij p_k(a_i, b_j); weighted_grads likewise for d p_k / d theta
  std::vector<double> weighted_values(M, 0.0);
  std::vector<double> weighted_grads(n_inner, 0.0);
  std::vector<double> grad(n_inner, 0.0);
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    const auto bj = Bt.col(j);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double c = cotangent(i, j);
      if (c == 0.0) continue;
      const auto ai = At.col(i);
      const PairStats s = make_stats(needs, ai, bj, an[i], bn[j]);
      for (std::size_t k = 0; k < M; ++k) {
        double* gk = prims[k].num_params() > 0 ? grad.data() + offsets[k] : nullptr;
        const double v = primitive_value(prims[k], s, ai, bj, gk);
        check_finite(v, k);
        weighted_values[k] += c * v;
        for (std::size_t l = 0; l < prims[k].num_params(); ++l) weighted_grads[offsets[k] + l] += c * gk[l];
      }
    }
  }

  Vector out(static_cast<Eigen::Index>(M + n_inner));
  double total = 0.0;
  for (std::size_t k = 0; k < M; ++k) total += wt[k] * wt[k] * weighted_values[k];
  for (std::size_t k = 0; k < M; ++k) {
    const double sgn = (w[k] > 0.0) - (w[k] < 0.0);
    out[static_cast<Eigen::Index>(k)] = 2.0 / wbar * (wt[k] * weighted_values[k] - sgn * total);
  }
  for (std::size_t k = 0; k < M; ++k) {
    for (std::size_t l = 0; l < prims[k].num_params(); ++l) {
      out[static_cast<Eigen::Index>(M + offsets[k] + l)] = wt[k] * wt[k] * weighted_grads[offsets[k] + l];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pruning

KeepPolicy KeepPolicy::largest(std::size_t k) {
  KeepPolicy p(Mode::Largest);
  p.count_ = k;
  return p;
}

KeepPolicy KeepPolicy::drop_smallest(std::size_t n) {
  KeepPolicy p(Mode::DropSmallest);
  p.count_ = n;
  return p;
}

KeepPolicy KeepPolicy::threshold(double t) {
  KeepPolicy p(Mode::Threshold);
  p.threshold_ = t;
  return p;
}

KeepPolicy KeepPolicy::indices(std::vector<std::size_t> keep) {
  KeepPolicy p(Mode::Indices);
  p.indices_ = std::move(keep);
  return p;
}

std::vector<std::size_t> KeepPolicy::select(const WeightedKernelSum& kernel) const {
  const auto& w = kernel.weights();
  const std::size_t M = w.size();
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> keep;
  switch (mode_) {
    case Mode::All: keep = order; break;
    case Mode::Largest:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
      keep.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(count_, M)));
      break;
    case Mode::DropSmallest:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return std::abs(w[a]) < std::abs(w[b]); });
      keep.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(count_, M)), order.end());
      break;
    case Mode::Threshold:
      for (std::size_t i = 0; i < M; ++i) {
        if (std::abs(w[i]) >= threshold_) keep.push_back(i);
      }
      break;
    case Mode::Indices:
      for (auto i : indices_) {
        if (i >= M) throw InvalidArgument("prune index " + std::to_string(i) + " out of range");
      }
      keep = indices_;
      break;
  }
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  if (keep.empty()) throw InvalidArgument("pruning would remove every primitive");
  return keep;
}

WeightedKernelSum keep_primitives(const WeightedKernelSum& source, const std::vector<std::size_t>& indices) {
  std::vector<PrimitiveKernel> prims;
  std::vector<double> weights;
  for (auto i : indices) {
    if (i >= source.size()) throw InvalidArgument("primitive index out of range");
    prims.push_back(source.primitives()[i]);
    weights.push_back(source.weights()[i]);
  }
  return WeightedKernelSum(std::move(prims), std::move(weights));
}

WeightedKernelSum prune(const WeightedKernelSum& kernel, const KeepPolicy& policy) {
  return keep_primitives(kernel, policy.select(kernel));
}

}  // namespace kedmd
