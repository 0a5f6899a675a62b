#pragma once

#include <cstdint>
#include <functional>

#include "kedmd/kernel.hpp"
#include "kedmd/types.hpp"

namespace kedmd {

/// Largest condition number g(X~, X~) may have for a drawn instance to count as positive definite.
inline constexpr double kEquivalenceMaxCondition = 1e8;

/// Outcome of comparing fit_sk (beta = 0) against fit_tr on random data.
struct EquivalenceReport {
  int instances = 0;
  int redraws = 0;  // instances discarded because the Gram matrix was not numerically positive definite
  double max_eigenvalue_mismatch = 0.0;  // absolute, over matched nonzero eigenvalues
  double max_count_mismatch = 0.0;       // |#nonzero(sk) - #nonzero(tr)|
  double max_operator_mismatch = 0.0;    // ||K_tr - (Z Sigma)^+ K_sk (Z Sigma)||_F / ||K_tr||_F
  double max_vector_defect = 0.0;        // eigen-equation defect of mapped vectors over ||K||

  [[nodiscard]] bool passed(double tol = 1e-8) const {
    return max_count_mismatch == 0.0 && max_eigenvalue_mismatch <= tol && max_operator_mismatch <= tol &&
           max_vector_defect <= tol;
  }
};

/// Produces the kernel for one instance; receives the instance's random stream and the state dimension.
using KernelFactory = std::function<WeightedKernelSum(class RandomStream&, Eigen::Index dim)>;

/// Random positive definite kernel sum: one RBF plus optional extra primitives.
[[nodiscard]] WeightedKernelSum random_pd_kernel(RandomStream& rng, Eigen::Index dim);

/// Compares nonzero eigenvalues (|lambda| > 1e-8 max|lambda|) and the eigenvector maps in both directions.
///
/// Each instance draws N in [1, max_points] and d in [1, 4] unless `fixed_points` > 0.
/// `factory` defaults to random_pd_kernel.
[[nodiscard]] EquivalenceReport equivalence_check(int instances, int max_points, std::uint64_t seed,
                                                  const KernelFactory& factory = {}, int fixed_points = 0);

/// Single instance on given data, used by the random driver.
void equivalence_instance(const WeightedKernelSum& kernel, const SnapshotSet& data, EquivalenceReport& report);

}  // namespace kedmd
