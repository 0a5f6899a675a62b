#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kedmd/kernel.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/systems.hpp"
#include "kedmd/trainer.hpp"

namespace kedmd::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Decimal with 17 significant digits, so every double survives a write/read cycle.
[[nodiscard]] std::string format_double(double v);
/// Parses a field written by format_double (also accepts nan/inf). Throws IoError.
[[nodiscard]] double parse_double(const std::string& field, const std::string& where);

void write_text(const fs::path& path, const std::string& text);
[[nodiscard]] std::string read_text(const fs::path& path);
void write_json(const fs::path& path, const Json& j);
[[nodiscard]] Json read_json(const fs::path& path);

/// Header: trajectory,step,x1..xd,y1..yd.
void write_dataset_csv(const fs::path& path, const PairedDataset& data);
[[nodiscard]] PairedDataset read_dataset_csv(const fs::path& path);

/// Kernel file: one primitive per line inside a JSON array.
[[nodiscard]] std::string kernel_to_text(const WeightedKernelSum& kernel);
[[nodiscard]] Json kernel_to_json(const WeightedKernelSum& kernel);
[[nodiscard]] WeightedKernelSum kernel_from_json(const Json& j, const std::string& path = "kernel");
void write_kernel(const fs::path& path, const WeightedKernelSum& kernel);
[[nodiscard]] WeightedKernelSum read_kernel(const fs::path& path);

[[nodiscard]] Json matrix_to_json(const Matrix& m);
[[nodiscard]] Matrix matrix_from_json(const Json& j, const std::string& path);

/// Model export: kernel, centers, fit settings, K, eigenvalues and residuals.
struct ModelFile {
  WeightedKernelSum kernel;
  SnapshotSet centers;
  double beta_koop = 0.0;
  double beta_modes = 0.0;
};
void write_model(const fs::path& path, const KoopmanModel& model, double beta_modes,
                 const std::vector<EigenpairReport>& spectrum);
[[nodiscard]] ModelFile read_model(const fs::path& path);

/// Columns index,re,im,magnitude,residual,degenerate.
void write_spectrum_csv(const fs::path& path, const std::vector<EigenpairReport>& spectrum);

/// Columns epoch,batch,pred,dict,eig,eig_pred,tr_dict,tr_eig,tr_eig_pred,reg,total.
void write_history_csv(const fs::path& path, const TrainHistory& history);
/// Same columns with batch = 0 for the per-epoch means.
void write_epoch_history_csv(const fs::path& path, const TrainHistory& history);
/// Columns epoch followed by one column per kernel parameter.
void write_parameter_history_csv(const fs::path& path, const TrainHistory& history);

/// Columns step,pred_1..pred_d,true_1..true_d; rows missing on either side are left empty.
void write_trajectory_csv(const fs::path& path, const Matrix& predicted, const Matrix& truth);

/// 64-bit FNV-1a of a string.
[[nodiscard]] std::uint64_t fnv1a(const std::string& text);
[[nodiscard]] std::string hex64(std::uint64_t v);

}  // namespace kedmd::io
