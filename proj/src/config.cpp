#include "kedmd/config.hpp"

#include <fmt/format.h>

#include "kedmd/errors.hpp"
#include "kedmd/io.hpp"

namespace kedmd {
namespace {

using Json = nlohmann::ordered_json;

void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok) throw ConfigError(path + "." + key, "unknown field");
    (void)value;
  }
}

double get_number(const Json& obj, const char* key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
  return obj[key].get<double>();
}

long long get_integer(const Json& obj, const char* key, const std::string& path, long long fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return obj[key].get<long long>();
}

std::uint64_t get_seed(const Json& obj, const char* key, const std::string& path, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj[key];
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(path + "." + key, "expected a nonnegative integer");
}

bool get_bool(const Json& obj, const char* key, const std::string& path, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) throw ConfigError(path + "." + key, "expected true or false");
  return obj[key].get<bool>();
}

std::pair<double, double> get_range(const Json& obj, const char* key, const std::string& path,
                                    std::pair<double, double> fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(path + "." + key, "expected [lo, hi]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

Json system_to_json(const SystemSpec& s) {
  Json j;
  j["kind"] = std::string(to_string(s.kind));
  switch (s.kind) {
    case SystemKind::Duffing:
      j["delta"] = {s.duffing.delta1, s.duffing.delta2, s.duffing.delta3};
      j["dt"] = s.duffing.dt;
      j["substeps"] = s.duffing.substeps;
      j["ic_box"] = {s.duffing.ic_lo, s.duffing.ic_hi};
      break;
    case SystemKind::Modulo:
      j["omega"] = s.modulo.omega;
      break;
    case SystemKind::Kse:
      j["gamma"] = s.kse.gamma;
      j["grid_points"] = s.kse.grid_points;
      j["dt"] = s.kse.dt;
      j["substeps"] = s.kse.substeps;
      j["initial_refinement"] = s.kse.initial_refinement;
      j["grading_ratio"] = s.kse.grading_ratio;
      j["tau1"] = {s.kse.tau1_lo, s.kse.tau1_hi};
      j["tau2"] = {s.kse.tau2_lo, s.kse.tau2_hi};
      break;
  }
  return j;
}

SystemSpec system_from_json(const Json& j, const std::string& path, const SystemSpec& base) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  SystemSpec s = base;
  if (j.contains("kind")) {
    if (!j["kind"].is_string()) throw ConfigError(path + ".kind", "expected a string");
    try {
      const SystemKind kind = system_kind_from_string(j["kind"].get<std::string>());
      if (kind != base.kind) {
        s = SystemSpec();
        s.kind = kind;
      }
    } catch (const Error& e) {
      throw ConfigError(path + ".kind", e.what());
    }
  }
  switch (s.kind) {
    case SystemKind::Duffing: {
      check_keys(j, path, {"kind", "delta", "dt", "substeps", "ic_box"});
      if (j.contains("delta")) {
        const auto& d = j["delta"];
        if (!d.is_array() || d.size() != 3) throw ConfigError(path + ".delta", "expected three numbers");
        s.duffing.delta1 = d[0].get<double>();
        s.duffing.delta2 = d[1].get<double>();
        s.duffing.delta3 = d[2].get<double>();
      }
      s.duffing.dt = get_number(j, "dt", path, s.duffing.dt);
      s.duffing.substeps = static_cast<int>(get_integer(j, "substeps", path, s.duffing.substeps));
      std::tie(s.duffing.ic_lo, s.duffing.ic_hi) = get_range(j, "ic_box", path, {s.duffing.ic_lo, s.duffing.ic_hi});
      break;
    }
    case SystemKind::Modulo:
      check_keys(j, path, {"kind", "omega"});
      s.modulo.omega = get_number(j, "omega", path, s.modulo.omega);
      break;
    case SystemKind::Kse:
      check_keys(j, path, {"kind", "gamma", "grid_points", "dt", "substeps", "initial_refinement", "grading_ratio",
                           "tau1", "tau2"});
      s.kse.gamma = get_number(j, "gamma", path, s.kse.gamma);
      s.kse.grid_points = static_cast<int>(get_integer(j, "grid_points", path, s.kse.grid_points));
      s.kse.dt = get_number(j, "dt", path, s.kse.dt);
      s.kse.substeps = static_cast<int>(get_integer(j, "substeps", path, s.kse.substeps));
      s.kse.initial_refinement =
          static_cast<int>(get_integer(j, "initial_refinement", path, s.kse.initial_refinement));
      s.kse.grading_ratio = get_number(j, "grading_ratio", path, s.kse.grading_ratio);
      std::tie(s.kse.tau1_lo, s.kse.tau1_hi) = get_range(j, "tau1", path, {s.kse.tau1_lo, s.kse.tau1_hi});
      std::tie(s.kse.tau2_lo, s.kse.tau2_hi) = get_range(j, "tau2", path, {s.kse.tau2_lo, s.kse.tau2_hi});
      break;
  }
  return s;
}

Json split_to_json(const DataSplit& d) {
  return Json{{"n_ic", d.n_ic}, {"steps", d.steps}, {"pair_stride", d.pair_stride}, {"seed", d.seed}};
}

DataSplit split_from_json(const Json& j, const std::string& path, DataSplit d) {
  check_keys(j, path, {"n_ic", "steps", "pair_stride", "seed"});
  d.n_ic = static_cast<int>(get_integer(j, "n_ic", path, d.n_ic));
  d.steps = static_cast<int>(get_integer(j, "steps", path, d.steps));
  d.pair_stride = static_cast<int>(get_integer(j, "pair_stride", path, d.pair_stride));
  d.seed = get_seed(j, "seed", path, d.seed);
  return d;
}

Json train_to_json(const TrainConfig& t) {
  Json sched = Json::array();
  for (const auto& e : t.beta_koop_schedule) sched.push_back(Json::array({e.start_epoch, e.value}));
  Json j;
  j["learning_rate"] = t.learning_rate;
  j["epochs"] = t.epochs;
  j["n_centers"] = t.n_centers;
  j["batches"] = t.batches;
  j["beta_koop_schedule"] = std::move(sched);
  j["beta_modes"] = t.beta_modes;
  j["beta1"] = t.loss.beta1;
  j["beta2"] = t.loss.beta2;
  j["alpha"] = {t.loss.alpha[0], t.loss.alpha[1], t.loss.alpha[2], t.loss.alpha[3]};
  j["l1_on_raw_weights"] = t.loss.l1_on_raw_weights;
  j["seed"] = t.seed;
  j["gradient_clip"] = t.gradient_clip;
  j["track_spectral"] = t.tracking.sk_spectral;
  j["track_dict"] = t.tracking.dict;
  j["track_tr"] = t.track_tr;
  return j;
}

TrainConfig train_from_json(const Json& j, const std::string& path, TrainConfig t) {
  check_keys(j, path,
             {"learning_rate", "epochs", "n_centers", "batches", "beta_koop_schedule", "beta_modes", "beta1", "beta2",
              "alpha", "l1_on_raw_weights", "seed", "gradient_clip", "track_spectral", "track_dict", "track_tr"});
  t.learning_rate = get_number(j, "learning_rate", path, t.learning_rate);
  t.epochs = static_cast<int>(get_integer(j, "epochs", path, t.epochs));
  t.n_centers = static_cast<Eigen::Index>(get_integer(j, "n_centers", path, t.n_centers));
  t.batches = static_cast<int>(get_integer(j, "batches", path, t.batches));
  if (j.contains("beta_koop_schedule")) {
    const auto& s = j["beta_koop_schedule"];
    const std::string sp = path + ".beta_koop_schedule";
    if (!s.is_array()) throw ConfigError(sp, "expected a list of [start_epoch, value] pairs");
    t.beta_koop_schedule.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& e = s[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
        throw ConfigError(fmt::format("{}[{}]", sp, i), "expected [start_epoch, value]");
      }
      t.beta_koop_schedule.push_back({e[0].get<int>(), e[1].get<double>()});
    }
  }
  t.beta_modes = get_number(j, "beta_modes", path, t.beta_modes);
  t.loss.beta1 = get_number(j, "beta1", path, t.loss.beta1);
  t.loss.beta2 = get_number(j, "beta2", path, t.loss.beta2);
  if (j.contains("alpha")) {
    const auto& a = j["alpha"];
    if (!a.is_array() || a.size() != 4) throw ConfigError(path + ".alpha", "expected four numbers");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!a[i].is_number()) throw ConfigError(fmt::format("{}.alpha[{}]", path, i), "expected a number");
      t.loss.alpha[i] = a[i].get<double>();
    }
  }
  t.loss.l1_on_raw_weights = get_bool(j, "l1_on_raw_weights", path, t.loss.l1_on_raw_weights);
  t.seed = get_seed(j, "seed", path, t.seed);
  t.gradient_clip = get_number(j, "gradient_clip", path, t.gradient_clip);
  t.tracking.sk_spectral = get_bool(j, "track_spectral", path, t.tracking.sk_spectral);
  t.tracking.dict = get_bool(j, "track_dict", path, t.tracking.dict);
  t.track_tr = get_bool(j, "track_tr", path, t.track_tr);
  return t;
}

ExperimentConfig base_defaults() {
  ExperimentConfig c;
  c.name = "custom";
  return c;
}

ExperimentConfig duffing_preset() {
  ExperimentConfig c;
  c.name = "duffing";
  c.system.kind = SystemKind::Duffing;
  c.train_data = {100, 10, 2, 1};
  c.test_data = {100, 10, 1, 2};
  c.kernel_primitives = {PrimitiveKernel::rbf(1000.0)};
  c.kernel_weights = {1.0};
  c.train.learning_rate = 5e-4;
  c.train.epochs = 20;
  c.train.n_centers = 40;
  c.train.batches = 5;
  c.train.beta_koop_schedule = {{1, 1e-8}};
  c.train.beta_modes = 1e-8;
  c.train.loss.beta1 = 1e-8;
  c.train.loss.beta2 = 1e-8;
  c.train.seed = 7;
  c.train.track_tr = true;
  c.eval.horizon = 10;
  return c;
}

ExperimentConfig modulo_preset() {
  ExperimentConfig c;
  c.name = "modulo";
  c.system.kind = SystemKind::Modulo;
  c.train_data = {100, 50, 1, 1};
  c.test_data = {20, 50, 1, 2};
  c.kernel_primitives = {PrimitiveKernel::embedded_rbf(1.0), PrimitiveKernel::rbf(1.0), PrimitiveKernel::cosine(1.0),
                         PrimitiveKernel::linear(1.0)};
  c.kernel_weights = {0.25, 0.25, 0.25, 0.25};
  c.train.learning_rate = 1e-1;
  c.train.epochs = 15;
  c.train.n_centers = 40;
  c.train.batches = 5;
  c.train.beta_koop_schedule = {{1, 1e-6}, {6, 1e-8}};
  c.train.beta_modes = 1e-8;
  c.train.loss.beta1 = 1e-8;
  c.train.loss.beta2 = 1e-8;
  c.train.seed = 7;
  c.eval.horizon = 50;
  c.prune.keep_top = 1;
  c.prune.retrain_epochs = 0;
  c.prune.reset_to_initial = false;
  return c;
}

ExperimentConfig kse_preset() {
  ExperimentConfig c;
  c.name = "kse";
  c.system.kind = SystemKind::Kse;
  c.train_data = {100, 100, 1, 1};
  c.test_data = {10, 100, 1, 2};
  c.kernel_primitives = {PrimitiveKernel::rbf(1.0),    PrimitiveKernel::rbf(10.0),   PrimitiveKernel::rbf(50.0),
                         PrimitiveKernel::cosine(1.0), PrimitiveKernel::linear(1.0), PrimitiveKernel::nngp(1.0, 0.0)};
  c.kernel_weights = std::vector<double>(6, 0.25);
  c.train.learning_rate = 5e-3;
  c.train.epochs = 200;
  c.train.n_centers = 100;
  c.train.batches = 4;
  c.train.beta_koop_schedule = {{1, 1e-4}, {6, 1e-8}};
  c.train.beta_modes = 1e-8;
  c.train.loss.beta1 = 1e-8;
  c.train.loss.beta2 = 1e-8;
  c.train.seed = 7;
  c.eval.horizon = 100;
  c.prune.keep_top = 2;
  c.prune.retrain_epochs = 30;
  c.prune.reset_to_initial = true;
  c.finetune.n_centers = 500;
  c.finetune.epochs = 5;
  return c;
}

}  // namespace

WeightedKernelSum ExperimentConfig::initial_kernel() const {
  return WeightedKernelSum(kernel_primitives, kernel_weights);
}

void ExperimentConfig::validate() const {
  try {
    system.validate();
  } catch (const Error& e) {
    throw ConfigError("system", e.what());
  }
  auto check_split = [](const DataSplit& d, const std::string& path) {
    if (d.n_ic < 0) throw ConfigError(path + ".n_ic", "must be nonnegative");
    if (d.steps < 0) throw ConfigError(path + ".steps", "must be nonnegative");
    if (d.pair_stride < 1) throw ConfigError(path + ".pair_stride", "must be positive");
  };
  check_split(train_data, "data.train");
  check_split(test_data, "data.test");
  if (kernel_primitives.empty()) throw ConfigError("kernel.primitives", "at least one primitive is required");
  try {
    (void)initial_kernel();
  } catch (const Error& e) {
    throw ConfigError("kernel", e.what());
  }
  for (const auto& p : kernel_primitives) {
    if (p.kind() == KernelKind::EmbeddedRbf && system.state_dim() < 1) {
      throw ConfigError("kernel", "embedded RBF needs a state");
    }
  }
  if (train.learning_rate < 0.0) throw ConfigError("train.learning_rate", "must be nonnegative");
  if (train.epochs < 0) throw ConfigError("train.epochs", "must be nonnegative");
  if (train.n_centers < 1) throw ConfigError("train.n_centers", "must be positive");
  if (train.batches < 1) throw ConfigError("train.batches", "must be positive");
  try {
    validate_schedule(train.beta_koop_schedule);
  } catch (const Error& e) {
    throw ConfigError("train.beta_koop_schedule", e.what());
  }
  if (train.beta_modes < 0.0) throw ConfigError("train.beta_modes", "must be nonnegative");
  try {
    train.loss.validate();
  } catch (const Error& e) {
    throw ConfigError("train", e.what());
  }
  if (eval.horizon < 0) throw ConfigError("eval.horizon", "must be nonnegative");
  if (finetune.n_centers < 0) throw ConfigError("finetune.n_centers", "must be nonnegative");
  if (finetune.epochs < 0) throw ConfigError("finetune.epochs", "must be nonnegative");
  if (prune.retrain_epochs < 0) throw ConfigError("prune.retrain_epochs", "must be nonnegative");
}

std::vector<std::string> preset_names() { return {"duffing", "modulo", "kse"}; }

ExperimentConfig preset(std::string_view name) {
  if (name == "duffing") return duffing_preset();
  if (name == "modulo") return modulo_preset();
  if (name == "kse") return kse_preset();
  throw ConfigError("preset", "unknown preset '" + std::string(name) + "' (expected duffing, modulo or kse)");
}

std::string_view to_string(PredictMethod method) {
  return method == PredictMethod::Spectral ? "spectral" : "recursive";
}

PredictMethod predict_method_from_string(std::string_view name) {
  if (name == "spectral") return PredictMethod::Spectral;
  if (name == "recursive") return PredictMethod::Recursive;
  throw InvalidArgument("unknown prediction method '" + std::string(name) + "'");
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["system"] = system_to_json(c.system);
  j["data"] = {{"train", split_to_json(c.train_data)}, {"test", split_to_json(c.test_data)}};
  j["kernel"] = io::kernel_to_json(c.initial_kernel());
  j["train"] = train_to_json(c.train);
  j["eval"] = {{"horizon", c.eval.horizon}, {"method", std::string(to_string(c.eval.method))}};
  j["prune"] = {{"keep_top", c.prune.keep_top},
                {"retrain_epochs", c.prune.retrain_epochs},
                {"reset_to_initial", c.prune.reset_to_initial}};
  j["finetune"] = {{"n_centers", c.finetune.n_centers}, {"epochs", c.finetune.epochs}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  check_keys(j, "config", {"preset", "name", "system", "data", "kernel", "train", "eval", "prune", "finetune"});
  ExperimentConfig c = base_defaults();
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset", "expected a preset name");
    c = preset(j["preset"].get<std::string>());
  }
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ConfigError("name", "expected a string");
    c.name = j["name"].get<std::string>();
  }
  if (j.contains("system")) c.system = system_from_json(j["system"], "system", c.system);
  if (j.contains("data")) {
    check_keys(j["data"], "data", {"train", "test"});
    if (j["data"].contains("train")) c.train_data = split_from_json(j["data"]["train"], "data.train", c.train_data);
    if (j["data"].contains("test")) c.test_data = split_from_json(j["data"]["test"], "data.test", c.test_data);
  }
  if (j.contains("kernel")) {
    const WeightedKernelSum k = io::kernel_from_json(j["kernel"], "kernel");
    c.kernel_primitives = k.primitives();
    c.kernel_weights = k.weights();
  }
  if (j.contains("train")) c.train = train_from_json(j["train"], "train", c.train);
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"horizon", "method"});
    c.eval.horizon = static_cast<int>(get_integer(e, "horizon", "eval", c.eval.horizon));
    if (e.contains("method")) {
      try {
        c.eval.method = predict_method_from_string(e["method"].get<std::string>());
      } catch (const std::exception& ex) {
        throw ConfigError("eval.method", ex.what());
      }
    }
  }
  if (j.contains("prune")) {
    const auto& p = j["prune"];
    check_keys(p, "prune", {"keep_top", "retrain_epochs", "reset_to_initial"});
    const long long keep = get_integer(p, "keep_top", "prune", static_cast<long long>(c.prune.keep_top));
    if (keep < 0) throw ConfigError("prune.keep_top", "must be nonnegative");
    c.prune.keep_top = static_cast<std::size_t>(keep);
    c.prune.retrain_epochs = static_cast<int>(get_integer(p, "retrain_epochs", "prune", c.prune.retrain_epochs));
    c.prune.reset_to_initial = get_bool(p, "reset_to_initial", "prune", c.prune.reset_to_initial);
  }
  if (j.contains("finetune")) {
    const auto& f = j["finetune"];
    check_keys(f, "finetune", {"n_centers", "epochs"});
    c.finetune.n_centers = static_cast<Eigen::Index>(get_integer(f, "n_centers", "finetune", c.finetune.n_centers));
    c.finetune.epochs = static_cast<int>(get_integer(f, "epochs", "finetune", c.finetune.epochs));
  }
  if (c.kernel_primitives.empty()) throw ConfigError("kernel", "no kernel given and no preset to inherit one from");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, e.what());
  }
  return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& config) { return io::fnv1a(config_to_json(config).dump()); }

}  // namespace kedmd
