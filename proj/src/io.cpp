#include "kedmd/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "kedmd/errors.hpp"

namespace kedmd::io {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void append_row(std::string& out, std::initializer_list<std::string> fields) {
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out += ',';
    out += f;
    first = false;
  }
}

std::string report_fields(const LossReport& r) {
  std::string s;
  append_row(s, {format_double(r.pred), format_double(r.dict), format_double(r.eig), format_double(r.eig_pred),
                 format_double(r.tr_dict), format_double(r.tr_eig), format_double(r.tr_eig_pred),
                 format_double(r.reg), format_double(r.total)});
  return s;
}

constexpr const char* kHistoryHeader = "epoch,batch,pred,dict,eig,eig_pred,tr_dict,tr_eig,tr_eig_pred,reg,total\n";

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

double parse_double(const std::string& field, const std::string& where) {
  if (field.empty()) throw IoError(where + ": empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE) {
    throw IoError(where + ": cannot parse '" + field + "' as a number");
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_dataset_csv(const fs::path& path, const PairedDataset& data) {
  const Eigen::Index d = data.pairs.dim();
  std::string out = "trajectory,step";
  for (Eigen::Index k = 1; k <= d; ++k) out += fmt::format(",x{}", k);
  for (Eigen::Index k = 1; k <= d; ++k) out += fmt::format(",y{}", k);
  out += '\n';
  for (Eigen::Index i = 0; i < data.pairs.size(); ++i) {
    out += fmt::format("{},{}", data.trajectory[static_cast<std::size_t>(i)], data.step[static_cast<std::size_t>(i)]);
    for (Eigen::Index k = 0; k < d; ++k) out += ',' + format_double(data.pairs.X(i, k));
    for (Eigen::Index k = 0; k < d; ++k) out += ',' + format_double(data.pairs.Y(i, k));
    out += '\n';
  }
  write_text(path, out);
}

PairedDataset read_dataset_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || (header.size() - 2) % 2 != 0 || header[0] != "trajectory" || header[1] != "step") {
    throw IoError(path.string() + ": unexpected header");
  }
  const auto d = static_cast<Eigen::Index>((header.size() - 2) / 2);
  std::vector<std::vector<double>> rows;
  PairedDataset out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = fmt::format("{}:{}", path.string(), lineno);
    if (f.size() != header.size()) throw IoError(where + ": wrong number of fields");
    out.trajectory.push_back(static_cast<long>(parse_double(f[0], where)));
    out.step.push_back(static_cast<long>(parse_double(f[1], where)));
    std::vector<double> r;
    for (std::size_t k = 2; k < f.size(); ++k) r.push_back(parse_double(f[k], where));
    rows.push_back(std::move(r));
  }
  Matrix X(static_cast<Eigen::Index>(rows.size()), d);
  Matrix Y(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      X(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
      Y(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(d + k)];
    }
  }
  try {
    out.pairs = SnapshotSet(std::move(X), std::move(Y));
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return out;
}

Json kernel_to_json(const WeightedKernelSum& kernel) {
  Json prims = Json::array();
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const auto& p = kernel.primitives()[i];
    if (p.kind() == KernelKind::Custom) throw InvalidArgument("custom primitives cannot be serialized");
    Json rec;
    rec["kind"] = std::string(to_string(p.kind()));
    rec["weight"] = kernel.weights()[i];
    const auto names = p.param_names();
    for (std::size_t k = 0; k < names.size(); ++k) rec[names[k]] = p.params()[k];
    prims.push_back(std::move(rec));
  }
  Json j;
  j["primitives"] = std::move(prims);
  return j;
}

std::string kernel_to_text(const WeightedKernelSum& kernel) {
  const Json j = kernel_to_json(kernel);
  std::string out = "{\n  \"primitives\": [\n";
  const auto& prims = j["primitives"];
  for (std::size_t i = 0; i < prims.size(); ++i) {
    out += "    " + prims[i].dump();
    out += i + 1 < prims.size() ? ",\n" : "\n";
  }
  out += "  ]\n}\n";
  return out;
}

WeightedKernelSum kernel_from_json(const Json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("primitives") || !j["primitives"].is_array()) {
    throw ConfigError(path, "expected an object with a 'primitives' array");
  }
  std::vector<PrimitiveKernel> prims;
  std::vector<double> weights;
  const auto& arr = j["primitives"];
  if (arr.empty()) throw ConfigError(path + ".primitives", "at least one primitive is required");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string at = fmt::format("{}.primitives[{}]", path, i);
    const auto& rec = arr[i];
    if (!rec.is_object()) throw ConfigError(at, "expected an object");
    if (!rec.contains("kind") || !rec["kind"].is_string()) throw ConfigError(at + ".kind", "missing kernel kind");
    KernelKind kind;
    try {
      kind = kernel_kind_from_string(rec["kind"].get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(at + ".kind", e.what());
    }
    const auto names = param_names(kind);
    std::vector<double> params;
    for (const auto& name : names) {
      if (!rec.contains(name) || !rec[name].is_number()) throw ConfigError(at + "." + name, "missing numeric value");
      params.push_back(rec[name].get<double>());
    }
    for (const auto& [key, value] : rec.items()) {
      const bool known = key == "kind" || key == "weight" || std::find(names.begin(), names.end(), key) != names.end();
      // c2 appears among published initial values but in no kernel formula; accepted and ignored.
      const bool ignored = key == "c2" && kind == KernelKind::Linear;
      if (!known && !ignored) throw ConfigError(at + "." + key, "unknown field");
      (void)value;
    }
    if (!rec.contains("weight") || !rec["weight"].is_number()) throw ConfigError(at + ".weight", "missing outer weight");
    try {
      prims.push_back(PrimitiveKernel::make(kind, params));
    } catch (const Error& e) {
      throw ConfigError(at, e.what());
    }
    weights.push_back(rec["weight"].get<double>());
  }
  try {
    return WeightedKernelSum(std::move(prims), std::move(weights));
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

void write_kernel(const fs::path& path, const WeightedKernelSum& kernel) { write_text(path, kernel_to_text(kernel)); }

WeightedKernelSum read_kernel(const fs::path& path) { return kernel_from_json(read_json(path), path.string()); }

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
      throw ConfigError(fmt::format("{}[{}]", path, i), "ragged matrix row");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

void write_model(const fs::path& path, const KoopmanModel& model, double beta_modes,
                 const std::vector<EigenpairReport>& spectrum) {
  Json j;
  j["variant"] = model.variant == Variant::Simplified ? "sk" : "tr";
  j["kernel"] = kernel_to_json(model.kernel);
  j["beta_koop"] = model.beta_koop;
  j["beta_modes"] = beta_modes;
  j["centers"] = {{"X", matrix_to_json(model.centers.X)}, {"Y", matrix_to_json(model.centers.Y)}};
  j["K"] = matrix_to_json(model.K);
  Json eig = Json::array();
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
    eig.push_back(Json::array({model.eigenvalues[i].real(), model.eigenvalues[i].imag()}));
  }
  j["eigenvalues"] = std::move(eig);
  Json res = Json::array();
  Json deg = Json::array();
  for (const auto& r : spectrum) {
    res.push_back(r.residual);
    deg.push_back(r.degenerate);
  }
  j["residuals"] = std::move(res);
  j["degenerate"] = std::move(deg);
  write_json(path, j);
}

ModelFile read_model(const fs::path& path) {
  const Json j = read_json(path);
  const std::string p = path.string();
  if (!j.contains("kernel") || !j.contains("centers")) throw ConfigError(p, "model file needs 'kernel' and 'centers'");
  SnapshotSet centers(matrix_from_json(j["centers"]["X"], p + ".centers.X"),
                      matrix_from_json(j["centers"]["Y"], p + ".centers.Y"));
  ModelFile out{kernel_from_json(j["kernel"], p + ".kernel"), std::move(centers)};
  out.beta_koop = j.value("beta_koop", 0.0);
  out.beta_modes = j.value("beta_modes", 0.0);
  return out;
}

void write_spectrum_csv(const fs::path& path, const std::vector<EigenpairReport>& spectrum) {
  std::string out = "index,re,im,magnitude,residual,degenerate\n";
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const auto& r = spectrum[i];
    append_row(out, {std::to_string(i), format_double(r.eigenvalue.real()), format_double(r.eigenvalue.imag()),
                     format_double(std::abs(r.eigenvalue)), format_double(r.residual), r.degenerate ? "1" : "0"});
    out += '\n';
  }
  write_text(path, out);
}

void write_history_csv(const fs::path& path, const TrainHistory& history) {
  std::string out = kHistoryHeader;
  for (const auto& b : history.batches) out += fmt::format("{},{},{}\n", b.epoch, b.batch, report_fields(b.report));
  write_text(path, out);
}

void write_epoch_history_csv(const fs::path& path, const TrainHistory& history) {
  std::string out = kHistoryHeader;
  for (const auto& e : history.epochs) out += fmt::format("{},0,{}\n", e.epoch, report_fields(e.mean));
  write_text(path, out);
}

void write_parameter_history_csv(const fs::path& path, const TrainHistory& history) {
  std::string out = "epoch";
  for (const auto& n : history.parameter_names) out += "," + n;
  out += '\n';
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch);
    for (Eigen::Index k = 0; k < e.parameters.size(); ++k) out += "," + format_double(e.parameters[k]);
    out += '\n';
  }
  write_text(path, out);
}

void write_trajectory_csv(const fs::path& path, const Matrix& predicted, const Matrix& truth) {
  const Eigen::Index d = std::max(predicted.cols(), truth.cols());
  std::string out = "step";
  for (Eigen::Index k = 1; k <= d; ++k) out += fmt::format(",pred_{}", k);
  for (Eigen::Index k = 1; k <= d; ++k) out += fmt::format(",true_{}", k);
  out += '\n';
  const Eigen::Index rows = std::max(predicted.rows(), truth.rows());
  for (Eigen::Index t = 0; t < rows; ++t) {
    out += std::to_string(t + 1);
    for (Eigen::Index k = 0; k < d; ++k) out += "," + (t < predicted.rows() ? format_double(predicted(t, k)) : "");
    for (Eigen::Index k = 0; k < d; ++k) out += "," + (t < truth.rows() ? format_double(truth(t, k)) : "");
    out += '\n';
  }
  write_text(path, out);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

}  // namespace kedmd::io
