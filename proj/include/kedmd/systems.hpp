#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "kedmd/types.hpp"

namespace kedmd {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// x1' = x2, x2' = -delta1 x2 - delta2 x1 - delta3 x1^3.
struct DuffingParams {
  double delta1 = 0.5;
  double delta2 = -1.0;
  double delta3 = 1.0;
  double dt = 0.1;
  int substeps = 10;
  double ic_lo = -2.0;
  double ic_hi = 2.0;
};

/// x_{t+1} = (x_t + omega) mod 2 pi.
struct ModuloParams {
  double omega = 1.1 * kPi;
};

/// u_t + 4 u_xxxx + gamma (u_xx + u u_x) = 0 on the periodic grid x_k = 2 pi k / n.
/// Initial conditions u(x, 0) = tau1 sin(2 pi x) + tau2 exp(cos(2 pi x)).
struct KseParams {
  double gamma = 16.0;
  int grid_points = 50;
  double dt = 0.005;
  int substeps = 40;
  /// Each snapshot interval starts with steps of dt / (substeps * initial_refinement)
  /// that grow geometrically up to dt / substeps. The graded start absorbs the stiff
  /// layer of rough fields such as the non-periodic initial conditions.
  int initial_refinement = 100;
  double grading_ratio = 1.3;
  double tau1_lo = 0.8;
  double tau1_hi = 1.0;
  double tau2_lo = 0.5;
  double tau2_hi = 1.0;
};

enum class SystemKind { Duffing, Modulo, Kse };

[[nodiscard]] std::string_view to_string(SystemKind kind);
[[nodiscard]] SystemKind system_kind_from_string(std::string_view name);

struct SystemSpec {
  SystemKind kind = SystemKind::Duffing;
  DuffingParams duffing;
  ModuloParams modulo;
  KseParams kse;

  [[nodiscard]] Eigen::Index state_dim() const;
  [[nodiscard]] double snapshot_dt() const;
  void validate() const;
};

/// Initial conditions and simulated trajectories, ordered by initial-condition index.
struct TrajectoryBundle {
  Matrix initial_conditions;         // n_ic x d
  std::vector<Matrix> trajectories;  // each (steps + 1) x d, row 0 is the initial condition
  double dt = 0.0;

  [[nodiscard]] bool empty() const noexcept { return trajectories.empty(); }
};

/// Snapshot pairs with their origin, one row per pair.
struct PairedDataset {
  SnapshotSet pairs;
  std::vector<long> trajectory;  // initial-condition index
  std::vector<long> step;        // snapshot index of x within its trajectory
};

/// Pairs (s, s+1) for s = 0, stride, 2 stride, ... from every trajectory.
///
/// stride 1 gives all consecutive pairs; stride 2 gives non-overlapping pairs.
[[nodiscard]] PairedDataset to_pairs(const TrajectoryBundle& bundle, int stride = 1);

/// Classical RK4 with `substeps` internal steps per snapshot interval; rows 0..steps.
[[nodiscard]] Matrix duffing_trajectory(const DuffingParams& p, const Vector& x0, int steps);

/// (x + omega) mod 2 pi, wrapped into [0, 2 pi).
[[nodiscard]] double modulo_step(double omega, double x);

/// exp(i omega j), j = 0..count-1.
[[nodiscard]] CVector modulo_true_eigenvalues(double omega, int count);

/// KSE initial condition on the periodic grid.
[[nodiscard]] Vector kse_initial_condition(const KseParams& p, double tau1, double tau2);

/// Pseudo-spectral ETDRK4 integrator for the KSE on a fixed grid.
class KseSolver {
 public:
  explicit KseSolver(const KseParams& p);

  /// Internal step sizes used within every snapshot interval.
  [[nodiscard]] const std::vector<double>& interval_mesh() const noexcept { return mesh_; }

  /// Rows 0..steps at spacing p.dt; throws DivergenceError on a non-finite field.
  [[nodiscard]] Matrix solve(const Vector& u0, int steps);

  /// Largest imaginary part seen after an inverse transform during the last solve().
  [[nodiscard]] double max_imag_residue() const noexcept { return max_imag_; }

 private:
  /// ETDRK4 coefficients for one internal step size.
  struct Coefficients {
    CVector E, E2, Q, f1, f2, f3;
  };
  static Coefficients coefficients(const CVector& L, double h);

  KseParams p_;
  CVector L_, g_;  // g_ = -(gamma/2) i k with dealiasing mask
  std::vector<double> mesh_;            // internal step sizes of one snapshot interval
  std::vector<std::size_t> mesh_coeff_;  // index into coeffs_ for each step
  std::vector<Coefficients> coeffs_;
  double max_imag_ = 0.0;
};

[[nodiscard]] Matrix kse_solve(const KseParams& p, const Vector& u0, int steps);

/// Draws n_ic initial conditions from the system's sampler and simulates `steps` snapshots each.
[[nodiscard]] TrajectoryBundle generate_dataset(const SystemSpec& spec, int n_ic, int steps, std::uint64_t seed);

/// Image of one state under the snapshot map.
[[nodiscard]] Vector apply_map(const SystemSpec& spec, const Vector& x);

}  // namespace kedmd
