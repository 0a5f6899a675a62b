#include "kedmd/systems.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include <unsupported/Eigen/FFT>

#include "kedmd/errors.hpp"
#include "kedmd/rng.hpp"

namespace kedmd {
namespace {

Eigen::Vector2d duffing_rhs(const DuffingParams& p, const Eigen::Vector2d& x) {
  return {x[1], -p.delta1 * x[1] - p.delta2 * x[0] - p.delta3 * x[0] * x[0] * x[0]};
}

Eigen::Vector2d duffing_flow(const DuffingParams& p, Eigen::Vector2d x) {
  const double h = p.dt / p.substeps;
  for (int s = 0; s < p.substeps; ++s) {
    const Eigen::Vector2d k1 = duffing_rhs(p, x);
    const Eigen::Vector2d k2 = duffing_rhs(p, x + 0.5 * h * k1);
    const Eigen::Vector2d k3 = duffing_rhs(p, x + 0.5 * h * k2);
    const Eigen::Vector2d k4 = duffing_rhs(p, x + h * k3);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

// Signed integer wavenumber of FFT bin j on an n-point grid; the Nyquist bin maps to +n/2.
double wavenumber(int j, int n) { return j <= n / 2 ? j : j - n; }

}  // namespace

std::string_view to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Duffing: return "duffing";
    case SystemKind::Modulo: return "modulo";
    case SystemKind::Kse: return "kse";
  }
  return "unknown";
}

SystemKind system_kind_from_string(std::string_view name) {
  if (name == "duffing") return SystemKind::Duffing;
  if (name == "modulo") return SystemKind::Modulo;
  if (name == "kse") return SystemKind::Kse;
  throw InvalidArgument("unknown system '" + std::string(name) + "'");
}

Eigen::Index SystemSpec::state_dim() const {
  switch (kind) {
    case SystemKind::Duffing: return 2;
    case SystemKind::Modulo: return 1;
    case SystemKind::Kse: return kse.grid_points;
  }
  return 0;
}

double SystemSpec::snapshot_dt() const {
  switch (kind) {
    case SystemKind::Duffing: return duffing.dt;
    case SystemKind::Modulo: return 1.0;
    case SystemKind::Kse: return kse.dt;
  }
  return 0.0;
}

void SystemSpec::validate() const {
  switch (kind) {
    case SystemKind::Duffing:
      if (!(duffing.dt > 0.0)) throw InvalidArgument("duffing dt must be positive");
      if (duffing.substeps < 1) throw InvalidArgument("duffing substeps must be positive");
      if (!(duffing.ic_lo < duffing.ic_hi)) throw InvalidArgument("duffing initial-condition box is empty");
      break;
    case SystemKind::Modulo:
      if (!std::isfinite(modulo.omega)) throw InvalidArgument("modulo omega must be finite");
      break;
    case SystemKind::Kse:
      if (kse.grid_points < 8 || kse.grid_points % 2 != 0) {
        throw InvalidArgument("kse grid_points must be even and at least 8");
      }
      if (!(kse.dt > 0.0)) throw InvalidArgument("kse dt must be positive");
      if (kse.substeps < 1) throw InvalidArgument("kse substeps must be positive");
      if (kse.initial_refinement < 1) throw InvalidArgument("kse initial_refinement must be positive");
      if (!(kse.grading_ratio > 1.0)) throw InvalidArgument("kse grading_ratio must exceed 1");
      if (!(kse.tau1_lo <= kse.tau1_hi) || !(kse.tau2_lo <= kse.tau2_hi)) {
        throw InvalidArgument("kse tau ranges are empty");
      }
      break;
  }
}

PairedDataset to_pairs(const TrajectoryBundle& bundle, int stride) {
  if (stride < 1) throw InvalidArgument("pair stride must be positive");
  const Eigen::Index d = bundle.initial_conditions.cols();
  Eigen::Index count = 0;
  for (const auto& t : bundle.trajectories) {
    for (Eigen::Index s = 0; s + 1 < t.rows(); s += stride) ++count;
  }
  PairedDataset out;
  Matrix X(count, d);
  Matrix Y(count, d);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < bundle.trajectories.size(); ++k) {
    const Matrix& t = bundle.trajectories[k];
    for (Eigen::Index s = 0; s + 1 < t.rows(); s += stride) {
      X.row(row) = t.row(s);
      Y.row(row) = t.row(s + 1);
      out.trajectory.push_back(static_cast<long>(k));
      out.step.push_back(static_cast<long>(s));
      ++row;
    }
  }
  out.pairs = SnapshotSet(std::move(X), std::move(Y));
  return out;
}

Matrix duffing_trajectory(const DuffingParams& p, const Vector& x0, int steps) {
  if (x0.size() != 2) throw InvalidArgument("duffing state must have two components");
  if (steps < 0) throw InvalidArgument("negative step count");
  Matrix out(steps + 1, 2);
  Eigen::Vector2d x = x0;
  out.row(0) = x.transpose();
  for (int t = 1; t <= steps; ++t) {
    x = duffing_flow(p, x);
    if (!x.allFinite()) throw DivergenceError("duffing state left the finite range at step " + std::to_string(t), t - 1);
    out.row(t) = x.transpose();
  }
  return out;
}

double modulo_step(double omega, double x) {
  double r = std::fmod(x + omega, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

CVector modulo_true_eigenvalues(double omega, int count) {
  if (count < 0) throw InvalidArgument("negative eigenvalue count");
  CVector out(count);
  for (int j = 0; j < count; ++j) out[j] = std::polar(1.0, omega * j);
  return out;
}

Vector kse_initial_condition(const KseParams& p, double tau1, double tau2) {
  Vector u(p.grid_points);
  for (int k = 0; k < p.grid_points; ++k) {
    const double x = kTwoPi * k / p.grid_points;
    u[k] = tau1 * std::sin(kTwoPi * x) + tau2 * std::exp(std::cos(kTwoPi * x));
  }
  return u;
}

KseSolver::Coefficients KseSolver::coefficients(const CVector& L, double h) {
  constexpr int kContour = 32;
  const Eigen::Index n = L.size();
  Coefficients c{CVector(n), CVector(n), CVector(n), CVector(n), CVector(n), CVector(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lin = L[j].real();
    c.E[j] = std::exp(h * lin);
    c.E2[j] = std::exp(h * lin / 2.0);
    // Contour-integral evaluation avoids cancellation in the phi-functions near zero.
    Complex q = 0.0, a = 0.0, b = 0.0, d = 0.0;
    for (int m = 1; m <= kContour; ++m) {
      const Complex r = std::exp(Complex(0.0, kPi * (m - 0.5) / kContour));
      const Complex z = h * lin + r;
      const Complex ez = std::exp(z);
      const Complex z3 = z * z * z;
      q += (std::exp(z / 2.0) - 1.0) / z;
      a += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
      b += (2.0 + z + ez * (-2.0 + z)) / z3;
      d += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    }
    c.Q[j] = h * (q / double(kContour)).real();
    c.f1[j] = h * (a / double(kContour)).real();
    c.f2[j] = h * (b / double(kContour)).real();
    c.f3[j] = h * (d / double(kContour)).real();
  }
  return c;
}

KseSolver::KseSolver(const KseParams& p) : p_(p) {
  SystemSpec spec;
  spec.kind = SystemKind::Kse;
  spec.kse = p;
  spec.validate();

  const int n = p.grid_points;
  L_.resize(n);
  g_.resize(n);
  const double cutoff = n / 3.0;  // 2/3 rule: drop |k| > n/3 in the quadratic term
  for (int j = 0; j < n; ++j) {
    const double k = wavenumber(j, n);
    L_[j] = -4.0 * k * k * k * k + p.gamma * k * k;
    const bool nyquist = 2 * j == n;
    const bool keep = std::abs(k) <= cutoff && !nyquist;
    g_[j] = keep ? Complex(0.0, -0.5 * p.gamma * k) : Complex(0.0, 0.0);
  }
  const double h = p.dt / p.substeps;
  double elapsed = 0.0;
  for (double size = h / p.initial_refinement; size < h && elapsed + size < p.dt; size *= p.grading_ratio) {
    mesh_.push_back(size);
    elapsed += size;
  }
  const double rest = p.dt - elapsed;
  const auto uniform = static_cast<int>(std::ceil(rest / h - 1e-9));
  for (int i = 0; i < uniform; ++i) mesh_.push_back(rest / uniform);
  for (std::size_t i = 0; i < mesh_.size(); ++i) {
    if (i == 0 || mesh_[i] != mesh_[i - 1]) coeffs_.push_back(coefficients(L_, mesh_[i]));
    mesh_coeff_.push_back(coeffs_.size() - 1);
  }
}

Matrix KseSolver::solve(const Vector& u0, int steps) {
  const int n = p_.grid_points;
  if (u0.size() != n) throw InvalidArgument("initial field does not match the grid");
  if (steps < 0) throw InvalidArgument("negative step count");
  max_imag_ = 0.0;

  Eigen::FFT<double> fft;
  std::vector<double> real_buf(static_cast<std::size_t>(n));
  std::vector<Complex> spec_buf(static_cast<std::size_t>(n));
  std::vector<Complex> cplx_buf(static_cast<std::size_t>(n));

  auto forward = [&](const Vector& u) {
    for (int i = 0; i < n; ++i) real_buf[i] = u[i];
    fft.fwd(spec_buf, real_buf);
    CVector v(n);
    for (int i = 0; i < n; ++i) v[i] = spec_buf[i];
    return v;
  };
  auto inverse = [&](const CVector& v) {
    for (int i = 0; i < n; ++i) spec_buf[i] = v[i];
    fft.inv(cplx_buf, spec_buf);
    Vector u(n);
    for (int i = 0; i < n; ++i) {
      u[i] = cplx_buf[i].real();
      max_imag_ = std::max(max_imag_, std::abs(cplx_buf[i].imag()));
    }
    return u;
  };
  auto nonlinear = [&](const CVector& v) {
    const Vector u = inverse(v);
    return CVector(g_.cwiseProduct(forward(u.cwiseProduct(u))));
  };

  Matrix out(steps + 1, n);
  out.row(0) = u0.transpose();
  CVector v = forward(u0);
  auto step = [&](const Coefficients& k) {
    const CVector Nv = nonlinear(v);
    const CVector a = k.E2.cwiseProduct(v) + k.Q.cwiseProduct(Nv);
    const CVector Na = nonlinear(a);
    const CVector b = k.E2.cwiseProduct(v) + k.Q.cwiseProduct(Na);
    const CVector Nb = nonlinear(b);
    const CVector c = k.E2.cwiseProduct(a) + k.Q.cwiseProduct(2.0 * Nb - Nv);
    const CVector Nc = nonlinear(c);
    v = k.E.cwiseProduct(v) + k.f1.cwiseProduct(Nv) + 2.0 * k.f2.cwiseProduct(Na + Nb) + k.f3.cwiseProduct(Nc);
  };
  for (int t = 1; t <= steps; ++t) {
    // Every interval is stepped the same way, so the snapshot map does not depend on t.
    for (std::size_t s = 0; s < mesh_.size(); ++s) step(coeffs_[mesh_coeff_[s]]);
    const Vector u = inverse(v);
    if (!u.allFinite()) throw DivergenceError("kse field blew up at step " + std::to_string(t), t - 1);
    out.row(t) = u.transpose();
  }
  return out;
}

Matrix kse_solve(const KseParams& p, const Vector& u0, int steps) {
  KseSolver solver(p);
  return solver.solve(u0, steps);
}

Vector apply_map(const SystemSpec& spec, const Vector& x) {
  switch (spec.kind) {
    case SystemKind::Duffing: return duffing_trajectory(spec.duffing, x, 1).row(1).transpose();
    case SystemKind::Modulo: {
      if (x.size() != 1) throw InvalidArgument("modulo state must be scalar");
      Vector y(1);
      y[0] = modulo_step(spec.modulo.omega, x[0]);
      return y;
    }
    case SystemKind::Kse: return kse_solve(spec.kse, x, 1).row(1).transpose();
  }
  throw InvalidArgument("unknown system");
}

TrajectoryBundle generate_dataset(const SystemSpec& spec, int n_ic, int steps, std::uint64_t seed) {
  spec.validate();
  if (n_ic < 0 || steps < 0) throw InvalidArgument("n_ic and steps must be nonnegative");
  const Eigen::Index d = spec.state_dim();
  TrajectoryBundle out;
  out.dt = spec.snapshot_dt();
  out.initial_conditions.resize(n_ic, d);
  std::optional<KseSolver> kse;
  if (spec.kind == SystemKind::Kse) kse.emplace(spec.kse);

  for (int i = 0; i < n_ic; ++i) {
    RandomStream rng(seed, {stream_tag::kInitialCondition, static_cast<std::uint64_t>(i)});
    Vector x0(d);
    Matrix traj;
    switch (spec.kind) {
      case SystemKind::Duffing: {
        x0[0] = rng.uniform(spec.duffing.ic_lo, spec.duffing.ic_hi);
        x0[1] = rng.uniform(spec.duffing.ic_lo, spec.duffing.ic_hi);
        traj = duffing_trajectory(spec.duffing, x0, steps);
        break;
      }
      case SystemKind::Modulo: {
        x0[0] = rng.uniform(0.0, kTwoPi);
        traj.resize(steps + 1, 1);
        traj(0, 0) = x0[0];
        for (int t = 1; t <= steps; ++t) traj(t, 0) = modulo_step(spec.modulo.omega, traj(t - 1, 0));
        break;
      }
      case SystemKind::Kse: {
        const double tau1 = rng.uniform(spec.kse.tau1_lo, spec.kse.tau1_hi);
        const double tau2 = rng.uniform(spec.kse.tau2_lo, spec.kse.tau2_hi);
        x0 = kse_initial_condition(spec.kse, tau1, tau2);
        traj = kse->solve(x0, steps);
        break;
      }
    }
    out.initial_conditions.row(i) = x0.transpose();
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

}  // namespace kedmd
