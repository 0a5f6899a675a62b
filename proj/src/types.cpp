#include "kedmd/types.hpp"

#include "kedmd/errors.hpp"

namespace kedmd {

SnapshotSet::SnapshotSet(Matrix x, Matrix y) : X(std::move(x)), Y(std::move(y)) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols()) {
    throw InvalidArgument("snapshot matrices differ in shape");
  }
  if (!X.allFinite() || !Y.allFinite()) throw InvalidArgument("snapshot matrices contain non-finite entries");
}

SnapshotSet SnapshotSet::subset(const std::vector<Eigen::Index>& rows) const {
  Matrix x(static_cast<Eigen::Index>(rows.size()), dim());
  Matrix y(x.rows(), dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    if (r < 0 || r >= size()) throw InvalidArgument("snapshot row index out of range");
    x.row(static_cast<Eigen::Index>(i)) = X.row(r);
    y.row(static_cast<Eigen::Index>(i)) = Y.row(r);
  }
  SnapshotSet out;
  out.X = std::move(x);
  out.Y = std::move(y);
  return out;
}

}  // namespace kedmd
