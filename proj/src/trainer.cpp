#include "kedmd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "kedmd/log.hpp"

namespace kedmd {
namespace {

bool all_finite(const LossReport& r) {
  return std::isfinite(r.total) && std::isfinite(r.reg) && (std::isnan(r.pred) || std::isfinite(r.pred));
}

// Mean of each field over the batches of one epoch; NaN stays NaN.
LossReport mean_report(const std::vector<BatchRecord>& records, std::size_t first) {
  LossReport m;
  const auto n = static_cast<double>(records.size() - first);
  auto avg = [&](double LossReport::*field) {
    double s = 0.0;
    for (std::size_t i = first; i < records.size(); ++i) s += records[i].report.*field;
    return s / n;
  };
  m.pred = avg(&LossReport::pred);
  m.dict = avg(&LossReport::dict);
  m.eig = avg(&LossReport::eig);
  m.eig_pred = avg(&LossReport::eig_pred);
  m.tr_dict = avg(&LossReport::tr_dict);
  m.tr_eig = avg(&LossReport::tr_eig);
  m.tr_eig_pred = avg(&LossReport::tr_eig_pred);
  m.reg = avg(&LossReport::reg);
  m.total = avg(&LossReport::total);
  for (std::size_t i = first; i < records.size(); ++i) m.tr_rank_deficient |= records[i].report.tr_rank_deficient;
  return m;
}

bool needs_spectrum(const TrainConfig& c) {
  return c.tracking.sk_spectral || c.loss.alpha[2] > 0.0 || c.loss.alpha[3] > 0.0;
}

}  // namespace

void validate_schedule(const Schedule& schedule) {
  if (schedule.empty()) throw InvalidArgument("schedule needs at least one entry");
  if (schedule.front().start_epoch != 1) throw InvalidArgument("schedule must start at epoch 1");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].value >= 0.0) || !std::isfinite(schedule[i].value)) {
      throw InvalidArgument("schedule values must be finite and nonnegative");
    }
    if (i > 0 && schedule[i].start_epoch <= schedule[i - 1].start_epoch) {
      throw InvalidArgument("schedule start epochs must be strictly increasing");
    }
  }
}

double schedule_lookup(const Schedule& schedule, int epoch) {
  validate_schedule(schedule);
  double v = schedule.front().value;
  for (const auto& e : schedule) {
    if (e.start_epoch <= epoch) v = e.value;
  }
  return v;
}

void TrainConfig::validate(Eigen::Index n_rows) const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be finite and nonnegative");
  }
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  if (n_centers < 1) throw InvalidArgument("n_centers must be positive");
  if (n_centers > n_rows) {
    throw InvalidArgument(fmt::format("n_centers = {} exceeds the {} training rows", n_centers, n_rows));
  }
  if (batches < 1) throw InvalidArgument("batches must be positive");
  if (batches > n_rows) throw InvalidArgument("more batches than training rows");
  validate_schedule(beta_koop_schedule);
  if (!(beta_modes >= 0.0)) throw InvalidArgument("beta_modes must be nonnegative");
  if (!(gradient_clip >= 0.0)) throw InvalidArgument("gradient_clip must be nonnegative");
  loss.validate();
}

SnapshotSet subsample_centers(const SnapshotSet& data, Eigen::Index n, std::uint64_t seed, std::uint64_t tag) {
  if (n < 0 || n > data.size()) {
    throw InvalidArgument(fmt::format("cannot draw {} centers from {} rows", n, data.size()));
  }
  RandomStream rng(seed, {tag});
  const auto perm = rng.permutation(static_cast<std::size_t>(data.size()));
  std::vector<Eigen::Index> rows(perm.begin(), perm.begin() + n);
  std::sort(rows.begin(), rows.end());
  return data.subset(rows);
}

std::vector<std::vector<Eigen::Index>> batch_indices(Eigen::Index n_rows, int batches, std::uint64_t seed,
                                                     int epoch) {
  if (batches < 1) throw InvalidArgument("batches must be positive");
  RandomStream rng(seed, {stream_tag::kBatches, static_cast<std::uint64_t>(epoch)});
  const auto perm = rng.permutation(static_cast<std::size_t>(n_rows));
  const auto b = static_cast<Eigen::Index>(batches);
  const Eigen::Index base = n_rows / b;
  const Eigen::Index extra = n_rows % b;
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(batches));
  std::size_t pos = 0;
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Index len = base + (k < extra ? 1 : 0);
    auto& chunk = out[static_cast<std::size_t>(k)];
    chunk.reserve(static_cast<std::size_t>(len));
    for (Eigen::Index i = 0; i < len; ++i) chunk.push_back(static_cast<Eigen::Index>(perm[pos++]));
  }
  return out;
}

std::vector<SnapshotSet> make_batches(const SnapshotSet& data, int batches, std::uint64_t seed, int epoch) {
  std::vector<SnapshotSet> out;
  for (const auto& rows : batch_indices(data.size(), batches, seed, epoch)) out.push_back(data.subset(rows));
  return out;
}

std::uint64_t digest(std::initializer_list<const Matrix*> matrices) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Matrix* m : matrices) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m->data());
    const std::size_t n = static_cast<std::size_t>(m->size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

KoopmanModel fit_training_model(const WeightedKernelSum& kernel, const SnapshotSet& centers, double beta_koop,
                                double beta_modes, bool with_spectrum) {
  KoopmanModel model = fit_sk(kernel, centers, beta_koop, with_spectrum);
  model.projection = fit_projection(model, beta_modes);
  if (with_spectrum) model.modes = fit_modes(model, beta_modes);
  return model;
}

TrainResult train_with_centers(const WeightedKernelSum& kernel, const SnapshotSet& data, const SnapshotSet& centers,
                               const TrainConfig& config, TrainHistory prior, const EpochObserver& observer) {
  config.validate(data.size());
  if (centers.dim() != data.dim()) throw InvalidArgument("centers and data differ in dimension");

  TrainHistory history = std::move(prior);
  history.parameter_names.clear();
  for (std::size_t i = 0; i < kernel.num_parameters(); ++i) history.parameter_names.push_back(kernel.parameter_name(i));
  const int epoch_offset = history.epochs_completed();
  const bool spectral = needs_spectrum(config);

  WeightedKernelSum current = kernel;
  for (int e = 1; e <= config.epochs; ++e) {
    const int epoch = epoch_offset + e;
    const double beta = schedule_lookup(config.beta_koop_schedule, e);
    const auto batches = batch_indices(data.size(), config.batches, config.seed, epoch);
    const std::size_t first_record = history.batches.size();

    for (int b = 0; b < config.batches; ++b) {
      const SnapshotSet batch = data.subset(batches[static_cast<std::size_t>(b)]);
      auto abort = [&](const std::string& why) {
        throw TrainingAborted(fmt::format("training aborted at epoch {}, batch {}: {}", epoch, b + 1, why), epoch,
                              b + 1, current, history);
      };

      BatchRecord rec;
      rec.epoch = epoch;
      rec.batch = b + 1;
      rec.beta_koop = beta;
      rec.parameters = current.parameters();
      Vector grad;
      try {
        const KoopmanModel model = fit_training_model(current, centers, beta, config.beta_modes, spectral);
        rec.operator_digest = digest({&model.K, &model.projection});
        std::optional<KoopmanModel> tr;
        if (config.track_tr) {
          tr = fit_tr(current, centers);
          tr->modes = fit_modes(*tr, config.beta_modes);
        }
        rec.report = combined_loss(model, batch, config.loss, &grad, config.tracking, tr ? &*tr : nullptr);
      } catch (const TrainingAborted&) {
        throw;
      } catch (const NumericError& err) {
        abort(err.what());
      } catch (const DegenerateKernel& err) {
        abort(err.what());
      }
      if (!all_finite(rec.report)) abort(fmt::format("non-finite loss (total = {})", rec.report.total));
      if (!grad.allFinite()) abort("non-finite gradient");

      if (config.gradient_clip > 0.0) {
        const double norm = grad.norm();
        if (norm > config.gradient_clip) grad *= config.gradient_clip / norm;
      }
      history.batches.push_back(rec);
      log::debug("  epoch {:4d} batch {:3d}  pred {:.6e}  total {:.6e}", epoch, b + 1, rec.report.pred,
                 rec.report.total);

      const Vector next = rec.parameters - config.learning_rate * grad;
      if (!next.allFinite()) abort("non-finite parameters after the update");
      try {
        current = current.with_parameters(next);
      } catch (const Error& err) {
        abort(err.what());
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.beta_koop = beta;
    er.mean = mean_report(history.batches, first_record);
    er.parameters = current.parameters();
    history.epochs.push_back(er);
    log::info("epoch {:4d}  beta_koop {:.1e}  pred {:.6e}  dict {:.6e}  total {:.6e}", epoch, beta, er.mean.pred,
              er.mean.dict, er.mean.total);
    if (observer) observer(er, current);
  }
  return TrainResult{current, std::move(history), centers};
}

TrainResult train(const WeightedKernelSum& kernel, const SnapshotSet& data, const TrainConfig& config,
                  const EpochObserver& observer) {
  config.validate(data.size());
  const SnapshotSet centers = subsample_centers(data, config.n_centers, config.seed);
  return train_with_centers(kernel, data, centers, config, {}, observer);
}

TrainResult prune_and_retrain(const WeightedKernelSum& trained, const WeightedKernelSum& initial,
                              const SnapshotSet& data, const TrainConfig& config, const KeepPolicy& policy,
                              const EpochObserver& observer) {
  if (trained.size() != initial.size()) {
    throw InvalidArgument("trained and initial kernels have different primitive counts");
  }
  for (std::size_t i = 0; i < trained.size(); ++i) {
    if (trained.primitives()[i].kind() != initial.primitives()[i].kind()) {
      throw InvalidArgument("trained and initial kernels differ in primitive " + std::to_string(i + 1));
    }
  }
  const auto keep = policy.select(trained);
  return train(keep_primitives(initial, keep), data, config, observer);
}

TrainResult fine_tune(const WeightedKernelSum& kernel, const SnapshotSet& data, const TrainConfig& config,
                      TrainHistory prior, const EpochObserver& observer) {
  config.validate(data.size());
  const SnapshotSet centers = subsample_centers(data, config.n_centers, config.seed, stream_tag::kFineTune);
  return train_with_centers(kernel, data, centers, config, std::move(prior), observer);
}

}  // namespace kedmd
