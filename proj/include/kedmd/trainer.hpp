#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kedmd/errors.hpp"
#include "kedmd/kernel.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/losses.hpp"
#include "kedmd/rng.hpp"
#include "kedmd/types.hpp"

namespace kedmd {

/// Piecewise-constant schedule entry: `value` applies from `start_epoch` (1-based) on.
struct ScheduleEntry {
  int start_epoch = 1;
  double value = 0.0;
};
using Schedule = std::vector<ScheduleEntry>;

/// Throws InvalidArgument unless start epochs are strictly increasing from 1 and values are nonnegative.
void validate_schedule(const Schedule& schedule);

/// Value of the latest entry with start_epoch <= epoch.
[[nodiscard]] double schedule_lookup(const Schedule& schedule, int epoch);

struct TrainConfig {
  double learning_rate = 5e-4;
  int epochs = 20;
  Eigen::Index n_centers = 40;
  int batches = 5;
  Schedule beta_koop_schedule{{1, 1e-8}};
  double beta_modes = 1e-8;
  LossWeights loss;
  std::uint64_t seed = 0;
  /// Maximum gradient 2-norm; 0 disables clipping.
  double gradient_clip = 0.0;
  /// Extra losses evaluated for the history only.
  LossTracking tracking;
  bool track_tr = false;

  void validate(Eigen::Index n_rows) const;
};

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  double beta_koop = 0.0;
  LossReport report;
  /// Kernel parameters the step started from (K and C_p were fitted with these).
  Vector parameters;
  /// FNV-1a digest of the bytes of K and C_p used for the loss.
  std::uint64_t operator_digest = 0;
};

struct EpochRecord {
  int epoch = 0;
  double beta_koop = 0.0;
  /// Batch means of every field.
  LossReport mean;
  /// Kernel parameters at the end of the epoch.
  Vector parameters;
};

struct TrainHistory {
  std::vector<std::string> parameter_names;
  std::vector<BatchRecord> batches;
  std::vector<EpochRecord> epochs;

  [[nodiscard]] int epochs_completed() const noexcept { return static_cast<int>(epochs.size()); }
};

struct TrainResult {
  WeightedKernelSum kernel;
  TrainHistory history;
  SnapshotSet centers;
};

/// Training stopped on a non-finite loss, gradient or parameter vector.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, int epoch, int batch, WeightedKernelSum last_finite, TrainHistory partial)
      : NumericError(what), epoch_(epoch), batch_(batch), last_finite_(std::move(last_finite)),
        partial_(std::move(partial)) {}

  [[nodiscard]] int epoch() const noexcept { return epoch_; }
  [[nodiscard]] int batch() const noexcept { return batch_; }
  [[nodiscard]] const WeightedKernelSum& last_finite_kernel() const noexcept { return last_finite_; }
  [[nodiscard]] const TrainHistory& partial_history() const noexcept { return partial_; }

 private:
  int epoch_;
  int batch_;
  WeightedKernelSum last_finite_;
  TrainHistory partial_;
};

/// Paired rows drawn uniformly without replacement, returned in ascending row order.
[[nodiscard]] SnapshotSet subsample_centers(const SnapshotSet& data, Eigen::Index n, std::uint64_t seed,
                                            std::uint64_t tag = stream_tag::kCenters);

/// Row indices of each batch for one epoch: a fresh permutation split into contiguous chunks.
[[nodiscard]] std::vector<std::vector<Eigen::Index>> batch_indices(Eigen::Index n_rows, int batches,
                                                                   std::uint64_t seed, int epoch);
[[nodiscard]] std::vector<SnapshotSet> make_batches(const SnapshotSet& data, int batches, std::uint64_t seed,
                                                    int epoch);

/// Called after every epoch with the record and the kernel at that point.
using EpochObserver = std::function<void(const EpochRecord&, const WeightedKernelSum&)>;

/// Dictionary learning by alternating closed-form fits of K, C_p and SGD steps on the kernel parameters.
[[nodiscard]] TrainResult train(const WeightedKernelSum& kernel, const SnapshotSet& data, const TrainConfig& config,
                                const EpochObserver& observer = {});

/// Same loop with explicitly given centers; epochs in the history are numbered after `prior`.
[[nodiscard]] TrainResult train_with_centers(const WeightedKernelSum& kernel, const SnapshotSet& data,
                                             const SnapshotSet& centers, const TrainConfig& config,
                                             TrainHistory prior = {}, const EpochObserver& observer = {});

/// Prunes `trained` by `policy`, resets the survivors to their values in `initial`, and retrains.
[[nodiscard]] TrainResult prune_and_retrain(const WeightedKernelSum& trained, const WeightedKernelSum& initial,
                                            const SnapshotSet& data, const TrainConfig& config,
                                            const KeepPolicy& policy, const EpochObserver& observer = {});

/// Resamples config.n_centers centers and keeps training from the current parameters.
[[nodiscard]] TrainResult fine_tune(const WeightedKernelSum& kernel, const SnapshotSet& data,
                                    const TrainConfig& config, TrainHistory prior = {},
                                    const EpochObserver& observer = {});

/// Fits the simplified operator, projection and (optionally) modes the way each training step does.
[[nodiscard]] KoopmanModel fit_training_model(const WeightedKernelSum& kernel, const SnapshotSet& centers,
                                              double beta_koop, double beta_modes, bool with_spectrum);

/// FNV-1a over the raw bytes of the given matrices.
[[nodiscard]] std::uint64_t digest(std::initializer_list<const Matrix*> matrices);

}  // namespace kedmd
