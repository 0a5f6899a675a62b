#include <doctest.h>

#include <algorithm>
#include <set>

#include "kedmd/errors.hpp"
#include "kedmd/trainer.hpp"
#include "support.hpp"

using namespace kedmd;

namespace {

SnapshotSet small_data(std::uint64_t seed, Eigen::Index n = 60) {
  RandomStream rng(seed, {1});
  const Matrix X = test::random_points(rng, n, 2);
  Matrix Y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    Y(i, 0) = 0.9 * X(i, 0) + 0.1 * X(i, 1);
    Y(i, 1) = -0.2 * X(i, 0) + 0.8 * X(i, 1) + 0.05 * X(i, 0) * X(i, 0);
  }
  return {X, Y};
}

TrainConfig small_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 3;
  c.n_centers = 15;
  c.batches = 4;
  c.beta_koop_schedule = {{1, 1e-6}, {3, 1e-8}};
  c.seed = 5;
  return c;
}

WeightedKernelSum two_term() {
  return WeightedKernelSum({PrimitiveKernel::rbf(1.5), PrimitiveKernel::linear(0.7)}, {0.5, 0.5});
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("schedule lookup and validation") {
    const Schedule s{{1, 1e-6}, {6, 1e-8}};
    CHECK(schedule_lookup(s, 1) == 1e-6);
    CHECK(schedule_lookup(s, 5) == 1e-6);
    CHECK(schedule_lookup(s, 6) == 1e-8);
    CHECK(schedule_lookup(s, 200) == 1e-8);
    CHECK_NOTHROW(validate_schedule(s));
    CHECK_THROWS_AS(validate_schedule({{2, 1e-6}}), InvalidArgument);
    CHECK_THROWS_AS(validate_schedule({{1, 1e-6}, {1, 1e-8}}), InvalidArgument);
    CHECK_THROWS_AS(validate_schedule({{1, -1.0}}), InvalidArgument);
    CHECK_THROWS_AS(validate_schedule({}), InvalidArgument);
  }

  TEST_CASE("batches partition the rows every epoch") {
    for (Eigen::Index n : {10, 37, 500}) {
      for (int b : {1, 3, 5}) {
        for (int epoch = 1; epoch <= 3; ++epoch) {
          const auto idx = batch_indices(n, b, 9, epoch);
          CHECK(static_cast<int>(idx.size()) == b);
          std::vector<Eigen::Index> all;
          std::size_t smallest = idx[0].size(), largest = idx[0].size();
          for (const auto& batch : idx) {
            all.insert(all.end(), batch.begin(), batch.end());
            smallest = std::min(smallest, batch.size());
            largest = std::max(largest, batch.size());
          }
          std::sort(all.begin(), all.end());
          std::vector<Eigen::Index> expected(static_cast<std::size_t>(n));
          for (Eigen::Index i = 0; i < n; ++i) expected[static_cast<std::size_t>(i)] = i;
          CHECK(all == expected);
          CHECK(largest - smallest <= 1);
        }
      }
    }
    CHECK(batch_indices(40, 4, 9, 1) == batch_indices(40, 4, 9, 1));
    CHECK(batch_indices(40, 4, 9, 1) != batch_indices(40, 4, 9, 2));
  }

  TEST_CASE("center subsampling draws distinct rows in order") {
    const SnapshotSet data = small_data(1);
    const SnapshotSet c = subsample_centers(data, 20, 3);
    CHECK(c.size() == 20);
    std::set<std::pair<double, double>> seen;
    for (Eigen::Index i = 0; i < c.size(); ++i) seen.insert({c.X(i, 0), c.X(i, 1)});
    CHECK(seen.size() == 20);
    const SnapshotSet again = subsample_centers(data, 20, 3);
    CHECK(c.X == again.X);
    CHECK(c.Y == again.Y);
    CHECK_THROWS_AS((void)subsample_centers(data, 61, 3), InvalidArgument);
  }

  TEST_CASE("training is deterministic") {
    const SnapshotSet data = small_data(2);
    const TrainResult a = train(two_term(), data, small_config());
    const TrainResult b = train(two_term(), data, small_config());
    CHECK(a.kernel.parameters() == b.kernel.parameters());
    REQUIRE(a.history.batches.size() == b.history.batches.size());
    for (std::size_t i = 0; i < a.history.batches.size(); ++i) {
      CHECK(a.history.batches[i].operator_digest == b.history.batches[i].operator_digest);
    }
    CHECK(a.history.epochs_completed() == 3);
    CHECK(a.history.batches.size() == 12);
    CHECK(a.history.epochs[2].beta_koop == 1e-8);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const SnapshotSet data = small_data(3);
    TrainConfig c = small_config();
    c.learning_rate = 0.0;
    const WeightedKernelSum k = two_term();
    const TrainResult r = train(k, data, c);
    CHECK(r.kernel.parameters() == k.parameters());
  }

  TEST_CASE("one step follows the negative frozen gradient") {
    const SnapshotSet data = small_data(4);
    TrainConfig c = small_config();
    c.epochs = 1;
    c.batches = 1;
    const WeightedKernelSum k = two_term();
    const TrainResult r = train(k, data, c);
    const KoopmanModel m = fit_training_model(k, r.centers, 1e-6, c.beta_modes, false);
    Vector grad;
    (void)combined_loss(m, data, c.loss, &grad, LossTracking{false, false});
    const Vector expected = k.parameters() - c.learning_rate * grad;
    CHECK((r.kernel.parameters() - expected).norm() <= 1e-12 * expected.norm());
  }

  TEST_CASE("recorded digests belong to the operators of each step") {
    const SnapshotSet data = small_data(5);
    TrainConfig c = small_config();
    c.epochs = 1;
    const TrainResult r = train(two_term(), data, c);
    for (const auto& rec : r.history.batches) {
      const auto k = two_term().with_parameters(rec.parameters);
      const KoopmanModel m = fit_training_model(k, r.centers, rec.beta_koop, c.beta_modes, false);
      CHECK(rec.operator_digest == digest({&m.K, &m.projection}));
    }
  }

  TEST_CASE("prediction loss decreases on a smooth problem") {
    const SnapshotSet data = small_data(6, 120);
    TrainConfig c = small_config();
    c.epochs = 8;
    c.learning_rate = 1e-2;
    const TrainResult r = train(WeightedKernelSum({PrimitiveKernel::rbf(8.0)}, {1.0}), data, c);
    CHECK(r.history.epochs.back().mean.pred < r.history.epochs.front().mean.pred);
  }

  TEST_CASE("pruning resets survivors to their initial values") {
    const SnapshotSet data = small_data(7);
    TrainConfig c = small_config();
    c.epochs = 1;
    const WeightedKernelSum initial({PrimitiveKernel::rbf(1.5), PrimitiveKernel::linear(0.7), PrimitiveKernel::rbf(4.0)},
                                    {0.2, 0.5, 0.3});
    const WeightedKernelSum trained({PrimitiveKernel::rbf(1.1), PrimitiveKernel::linear(0.9), PrimitiveKernel::rbf(3.0)},
                                    {0.1, -2.0, 0.8});
    TrainConfig none = c;
    none.learning_rate = 0.0;
    const TrainResult r = prune_and_retrain(trained, initial, data, none, KeepPolicy::largest(2));
    REQUIRE(r.kernel.size() == 2);
    CHECK(r.kernel.weights() == std::vector<double>{0.5, 0.3});
    CHECK(r.kernel.primitives()[0].kind() == KernelKind::Linear);
    CHECK(r.kernel.primitives()[1].params()[0] == 4.0);
  }

  TEST_CASE("fine-tuning continues the epoch numbering") {
    const SnapshotSet data = small_data(8);
    TrainConfig c = small_config();
    const TrainResult first = train(two_term(), data, c);
    TrainConfig ft = c;
    ft.epochs = 2;
    ft.n_centers = 30;
    const TrainResult second = fine_tune(first.kernel, data, ft, first.history);
    CHECK(second.history.epochs_completed() == 5);
    CHECK(second.history.epochs.back().epoch == 5);
    CHECK(second.centers.size() == 30);
  }

  TEST_CASE("non-finite losses abort with the last finite kernel") {
    const SnapshotSet data = small_data(9);
    TrainConfig c = small_config();
    c.learning_rate = 1e300;
    try {
      (void)train(two_term(), data, c);
      FAIL("expected an abort");
    } catch (const TrainingAborted& e) {
      CHECK(e.last_finite_kernel().parameters().allFinite());
      CHECK(e.epoch() >= 1);
    }
  }

  TEST_CASE("observer sees every epoch") {
    const SnapshotSet data = small_data(10);
    int calls = 0;
    (void)train(two_term(), data, small_config(), [&](const EpochRecord& rec, const WeightedKernelSum&) {
      ++calls;
      CHECK(rec.epoch == calls);
    });
    CHECK(calls == 3);
  }

  TEST_CASE("invalid training settings are rejected") {
    TrainConfig c = small_config();
    c.n_centers = 100;
    CHECK_THROWS_AS(c.validate(60), InvalidArgument);
    c = small_config();
    c.batches = 0;
    CHECK_THROWS_AS(c.validate(60), InvalidArgument);
    c = small_config();
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(60), InvalidArgument);
  }
}
