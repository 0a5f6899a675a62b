#include "kedmd/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kedmd/errors.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/rng.hpp"

namespace kedmd {
namespace {

std::vector<Complex> nonzero(const CVector& values) {
  double top = 0.0;
  for (const auto& v : values) top = std::max(top, std::abs(v));
  std::vector<Complex> out;
  for (const auto& v : values) {
    if (std::abs(v) > 1e-8 * top) out.push_back(v);
  }
  return out;
}

// Greedy nearest matching; returns the largest distance of a matched pair.
double match_distance(std::vector<Complex> a, std::vector<Complex> b) {
  double worst = 0.0;
  for (const auto& x : a) {
    auto best = b.end();
    double dist = std::numeric_limits<double>::infinity();
    for (auto it = b.begin(); it != b.end(); ++it) {
      if (std::abs(*it - x) < dist) {
        dist = std::abs(*it - x);
        best = it;
      }
    }
    if (best == b.end()) break;
    worst = std::max(worst, dist);
    b.erase(best);
  }
  return worst;
}

double relative_defect(const Matrix& K, const Eigensystem& es, const std::vector<bool>& use) {
  const CMatrix Kc = K.cast<Complex>();
  const double knorm = std::max(K.norm(), 1e-300);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < es.values.size(); ++j) {
    if (!use[static_cast<std::size_t>(j)]) continue;
    const CRowVector w = es.left.row(j);
    const CVector v = es.right.col(j);
    const double wn = w.norm();
    const double vn = v.norm();
    if (wn > 0.0) worst = std::max(worst, (w * Kc - es.values[j] * w).norm() / (wn * knorm));
    if (vn > 0.0) worst = std::max(worst, (Kc * v - es.values[j] * v).norm() / (vn * knorm));
  }
  return worst;
}

std::vector<bool> nonzero_mask(const CVector& values) {
  double top = 0.0;
  for (const auto& v : values) top = std::max(top, std::abs(v));
  std::vector<bool> out;
  for (const auto& v : values) out.push_back(std::abs(v) > 1e-8 * top);
  return out;
}

}  // namespace

WeightedKernelSum random_pd_kernel(RandomStream& rng, Eigen::Index dim) {
  std::vector<PrimitiveKernel> prims;
  std::vector<double> weights;
  prims.push_back(PrimitiveKernel::rbf(rng.uniform(0.4, 1.5)));
  weights.push_back(rng.uniform(0.5, 1.5));
  if (rng.uniform() < 0.5) {
    prims.push_back(PrimitiveKernel::embedded_rbf(rng.uniform(0.5, 2.0)));
    weights.push_back(rng.uniform(-1.0, 1.0));
  }
  if (rng.uniform() < 0.5) {
    prims.push_back(PrimitiveKernel::linear(rng.uniform(0.2, 1.0)));
    weights.push_back(rng.uniform(-0.5, 0.5));
  }
  if (rng.uniform() < 0.5) {
    prims.push_back(PrimitiveKernel::nngp(rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0)));
    weights.push_back(rng.uniform(-0.5, 0.5));
  }
  (void)dim;
  return WeightedKernelSum(std::move(prims), std::move(weights));
}

void equivalence_instance(const WeightedKernelSum& kernel, const SnapshotSet& data, EquivalenceReport& report) {
  const KoopmanModel sk = fit_sk(kernel, data, 0.0);
  const KoopmanModel tr = fit_tr(kernel, data);

  const auto a = nonzero(sk.eigenvalues);
  const auto b = nonzero(tr.eigenvalues);
  report.max_count_mismatch =
      std::max(report.max_count_mismatch, std::abs(static_cast<double>(a.size()) - static_cast<double>(b.size())));
  report.max_eigenvalue_mismatch = std::max(report.max_eigenvalue_mismatch, match_distance(a, b));

  const Matrix zs = tr.Z * tr.sigma.asDiagonal();
  const Matrix zs_pinv = tr.sigma.cwiseInverse().asDiagonal() * tr.Z.transpose();
  const Matrix ktr_from_sk = zs_pinv * sk.K * zs;
  report.max_operator_mismatch =
      std::max(report.max_operator_mismatch, (tr.K - ktr_from_sk).norm() / std::max(tr.K.norm(), 1e-300));

  const Eigensystem to_sk = map_spectrum(tr, MapDirection::TrToSk);
  report.max_vector_defect = std::max(report.max_vector_defect, relative_defect(sk.K, to_sk, nonzero_mask(to_sk.values)));
  const Eigensystem to_tr =
      map_spectrum(tr, Eigensystem{sk.eigenvalues, sk.left_vectors, sk.right_vectors}, MapDirection::SkToTr);
  report.max_vector_defect = std::max(report.max_vector_defect, relative_defect(tr.K, to_tr, nonzero_mask(to_tr.values)));
  ++report.instances;
}

EquivalenceReport equivalence_check(int instances, int max_points, std::uint64_t seed, const KernelFactory& factory,
                                    int fixed_points) {
  if (instances < 0 || max_points < 1) throw InvalidArgument("equivalence check needs positive sizes");
  EquivalenceReport report;
  std::uint64_t draw = 0;
  while (report.instances < instances) {
    RandomStream rng(seed, {stream_tag::kOracle, draw++});
    const auto n = fixed_points > 0 ? static_cast<Eigen::Index>(fixed_points)
                                    : static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(max_points)));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    Matrix X(n, d);
    Matrix Y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) X(i, k) = rng.uniform(-2.0, 2.0);
      for (Eigen::Index k = 0; k < d; ++k) Y(i, k) = rng.uniform(-2.0, 2.0);
    }
    const WeightedKernelSum kernel = factory ? factory(rng, d) : random_pd_kernel(rng, d);
    const SnapshotSet data(std::move(X), std::move(Y));
    const Matrix G = gram(kernel, data.X, data.X);
    Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kEquivalenceMaxCondition) {
      ++report.redraws;
      if (report.redraws > 100 * std::max(instances, 1)) throw InvalidArgument("kernel factory never yields a positive definite Gram matrix");
      continue;
    }
    equivalence_instance(kernel, data, report);
  }
  return report;
}

}  // namespace kedmd
