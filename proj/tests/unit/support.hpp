#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "kedmd/kernel.hpp"
#include "kedmd/rng.hpp"
#include "kedmd/types.hpp"

namespace kedmd::test {

inline Matrix random_points(RandomStream& rng, Eigen::Index n, Eigen::Index d, double lo = -2.0, double hi = 2.0) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

inline SnapshotSet random_snapshots(RandomStream& rng, Eigen::Index n, Eigen::Index d) {
  return {random_points(rng, n, d), random_points(rng, n, d)};
}

/// Random primitive with inner parameters in a well-conditioned range.
inline PrimitiveKernel random_primitive(RandomStream& rng, KernelKind kind) {
  switch (kind) {
    case KernelKind::Rbf: return PrimitiveKernel::rbf(rng.uniform(0.5, 3.0));
    case KernelKind::Linear: return PrimitiveKernel::linear(rng.uniform(0.3, 2.0));
    case KernelKind::Cosine: return PrimitiveKernel::cosine(rng.uniform(0.05, 0.5));
    case KernelKind::Nngp: return PrimitiveKernel::nngp(rng.uniform(0.5, 2.0), rng.uniform(0.1, 1.0));
    case KernelKind::EmbeddedRbf: return PrimitiveKernel::embedded_rbf(rng.uniform(0.5, 3.0));
    case KernelKind::Custom: break;
  }
  return PrimitiveKernel::rbf(1.0);
}

inline constexpr KernelKind kAllKinds[] = {KernelKind::Rbf, KernelKind::Linear, KernelKind::Cosine, KernelKind::Nngp,
                                           KernelKind::EmbeddedRbf};

/// Sum of 1..4 random primitives with random nonzero weights of either sign.
inline WeightedKernelSum random_kernel(RandomStream& rng, bool allow_cosine = true) {
  const auto m = static_cast<int>(1 + rng.below(4));
  std::vector<PrimitiveKernel> prims;
  std::vector<double> w;
  for (int i = 0; i < m; ++i) {
    KernelKind kind = kAllKinds[rng.below(5)];
    if (!allow_cosine && kind == KernelKind::Cosine) kind = KernelKind::Rbf;
    prims.push_back(random_primitive(rng, kind));
    const double mag = rng.uniform(0.2, 2.0);
    w.push_back(rng.uniform() < 0.5 ? -mag : mag);
  }
  return {prims, w};
}

/// Fourth-order central difference of f along every coordinate, step h = rel * max(1, |theta_k|).
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& theta,
                                 double rel = 1e-3) {
  Vector g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double h = rel * std::max(1.0, std::abs(theta[k]));
    auto at = [&](double s) {
      Vector t = theta;
      t[k] += s * h;
      return f(t);
    };
    g[k] = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
  }
  return g;
}

/// Largest componentwise relative error; components are compared against max(|a|, |b|, floor).
inline double max_relative_error(const Vector& analytic, const Vector& numeric, double floor) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  return worst;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kedmd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace kedmd::test
