#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kedmd/kernel.hpp"
#include "kedmd/systems.hpp"
#include "kedmd/trainer.hpp"

namespace kedmd {

/// How a data split is generated.
struct DataSplit {
  int n_ic = 100;
  int steps = 10;
  /// 1: every consecutive pair; 2: non-overlapping pairs (0,1), (2,3), ...
  int pair_stride = 1;
  std::uint64_t seed = 1;
};

struct EvalConfig {
  int horizon = 10;
  PredictMethod method = PredictMethod::Spectral;
};

/// Follow-up stages of a preset workflow.
struct PruneConfig {
  /// Keep the `keep_top` largest |w_i|; 0 means keep everything.
  std::size_t keep_top = 0;
  /// Retraining epochs after pruning; 0 evaluates the pruned kernel without retraining.
  int retrain_epochs = 0;
  /// Restart the survivors from their initial values.
  bool reset_to_initial = true;
};

struct FineTuneConfig {
  Eigen::Index n_centers = 0;  // 0 disables
  int epochs = 0;
};

struct ExperimentConfig {
  std::string name;
  SystemSpec system;
  DataSplit train_data;
  DataSplit test_data;
  std::vector<PrimitiveKernel> kernel_primitives;
  std::vector<double> kernel_weights;
  TrainConfig train;
  EvalConfig eval;
  PruneConfig prune;
  FineTuneConfig finetune;

  [[nodiscard]] WeightedKernelSum initial_kernel() const;
  /// Checks every field; throws ConfigError with the offending path.
  void validate() const;
};

[[nodiscard]] std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
[[nodiscard]] ExperimentConfig preset(std::string_view name);

[[nodiscard]] nlohmann::ordered_json config_to_json(const ExperimentConfig& config);
/// Missing fields fall back to the preset named in "preset" (or to built-in defaults).
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

/// FNV-1a of the canonical JSON text of the config.
[[nodiscard]] std::uint64_t config_hash(const ExperimentConfig& config);

[[nodiscard]] std::string_view to_string(PredictMethod method);
[[nodiscard]] PredictMethod predict_method_from_string(std::string_view name);

}  // namespace kedmd
