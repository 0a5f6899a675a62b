#include "kedmd/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kedmd/config.hpp"
#include "kedmd/errors.hpp"
#include "kedmd/io.hpp"
#include "kedmd/log.hpp"
#include "kedmd/plot.hpp"

#ifndef KEDMD_VERSION
#define KEDMD_VERSION "0.0.0"
#endif

namespace kedmd::cli {
namespace {

namespace fs = std::filesystem;
using io::Json;

/// A prediction counts as divergent once its max-norm exceeds this multiple of the true trajectory's.
constexpr double kDivergenceFactor = 10.0;

struct Options {
  std::string config_path;
  std::string preset_name;
  std::string out;
  std::string data_dir;
  std::string kernel_path;
  std::string model_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<Eigen::Index> n_centers;
  std::optional<double> learning_rate;
  std::optional<int> horizon;
  std::string method;
  std::string split = "test";
  std::string eval = "centers";
  bool quiet = false;
  bool verbose = false;
  bool plot = false;
  bool dump_config = false;
  bool checkpoints = false;
  bool fail_on_divergence = false;
  // prune
  std::optional<std::size_t> keep_top;
  std::optional<double> threshold;
  std::vector<std::size_t> keep;
  std::optional<std::size_t> drop_smallest;
  bool reset_init = false;
  // equivalence-check
  int instances = 200;
  int points = 20;
  int fixed_points = 0;
};

/// Output directory plus the record of everything read and written, turned into a manifest at the end.
class Run {
 public:
  Run(std::string command, std::vector<std::string> args, fs::path out)
      : command_(std::move(command)), args_(std::move(args)), out_(std::move(out)) {}

  [[nodiscard]] const fs::path& out() const { return out_; }
  [[nodiscard]] fs::path path(const std::string& name) const { return out_ / name; }

  void wrote(const fs::path& p) { outputs_.push_back(p); }
  void read(const fs::path& p) { inputs_.push_back(p); }

  void finish(const ExperimentConfig* config) {
    Json m;
    m["command"] = command_;
    m["arguments"] = args_;
    m["version"] = KEDMD_VERSION;
    m["eigen"] = fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
    m["compiler"] = __VERSION__;
    if (config != nullptr) {
      const fs::path cfg = path(command_ + "_config.json");
      io::write_json(cfg, config_to_json(*config));
      m["config"] = cfg.filename().string();
      m["config_hash"] = io::hex64(config_hash(*config));
      m["seeds"] = {{"train", config->train.seed},
                    {"train_data", config->train_data.seed},
                    {"test_data", config->test_data.seed}};
    }
    auto list = [](const std::vector<fs::path>& files, const fs::path& base) {
      Json a = Json::array();
      for (const auto& f : files) {
        const std::string name = base.empty() ? f.string() : f.lexically_relative(base).string();
        a.push_back({{"file", name}, {"fnv1a", io::hex64(io::fnv1a(io::read_text(f)))}});
      }
      return a;
    };
    m["inputs"] = list(inputs_, {});
    m["outputs"] = list(outputs_, out_);
    io::write_json(path(command_ + "_manifest.json"), m);
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  fs::path out_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

fs::path default_out() {
  const char* env = std::getenv(kOutEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("kedmd-out");
}

ExperimentConfig resolve_config(const Options& o) {
  if (!o.config_path.empty() && !o.preset_name.empty()) {
    throw ConfigError("--config", "give either --config or --preset, not both");
  }
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = load_config(o.config_path);
  } else if (!o.preset_name.empty()) {
    c = preset(o.preset_name);
  } else {
    throw ConfigError("--config", "no configuration (use --config PATH or --preset duffing|modulo|kse)");
  }
  if (o.seed) {
    c.train.seed = *o.seed;
    c.train_data.seed = *o.seed;
    c.test_data.seed = *o.seed + 1;
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.n_centers) c.train.n_centers = *o.n_centers;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.horizon) c.eval.horizon = *o.horizon;
  if (!o.method.empty()) {
    try {
      c.eval.method = predict_method_from_string(o.method);
    } catch (const InvalidArgument& e) {
      throw ConfigError("--method", e.what());
    }
  }
  c.validate();
  return c;
}

const DataSplit& split_of(const ExperimentConfig& c, const std::string& name) {
  if (name == "train") return c.train_data;
  if (name == "test") return c.test_data;
  throw ConfigError("--split", "expected train or test, got '" + name + "'");
}

/// Reads <data>/<split>.csv if present, otherwise simulates the split and writes it into the output directory.
PairedDataset load_or_generate(Run& run, const Options& o, const ExperimentConfig& c, const std::string& split) {
  const fs::path dir = o.data_dir.empty() ? run.out() : fs::path(o.data_dir);
  const fs::path file = dir / (split + ".csv");
  if (fs::exists(file)) {
    run.read(file);
    PairedDataset d = io::read_dataset_csv(file);
    if (d.pairs.dim() != c.system.state_dim()) {
      throw ConfigError(file.string(), fmt::format("state dimension {} does not match the configured system ({})",
                                                   d.pairs.dim(), c.system.state_dim()));
    }
    return d;
  }
  const DataSplit& s = split_of(c, split);
  log::info("simulating {} split: {} initial conditions x {} steps", split, s.n_ic, s.steps);
  PairedDataset d = to_pairs(generate_dataset(c.system, s.n_ic, s.steps, s.seed), s.pair_stride);
  const fs::path target = run.path(split + ".csv");
  io::write_dataset_csv(target, d);
  run.wrote(target);
  return d;
}

WeightedKernelSum load_kernel(Run& run, const fs::path& p) {
  run.read(p);
  return io::read_kernel(p);
}

KoopmanModel load_model(Run& run, const Options& o) {
  const fs::path p = o.model_path.empty() ? run.path("model.json") : fs::path(o.model_path);
  run.read(p);
  const io::ModelFile mf = io::read_model(p);
  return fit_training_model(mf.kernel, mf.centers, mf.beta_koop, mf.beta_modes, true);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  return 0.5 * (hi + *std::max_element(v.begin(), mid));
}

void print_residual_summary(const std::vector<EigenpairReport>& spec) {
  std::vector<double> r;
  int degenerate = 0;
  for (const auto& e : spec) {
    if (e.degenerate) {
      ++degenerate;
    } else {
      r.push_back(e.residual);
    }
  }
  if (r.empty()) {
    log::info("residuals: none ({} degenerate)", degenerate);
    return;
  }
  log::info("residuals: min {:.3e}  median {:.3e}  max {:.3e}  ({} eigenpairs, {} degenerate)",
            *std::min_element(r.begin(), r.end()), median(r), *std::max_element(r.begin(), r.end()), spec.size(),
            degenerate);
}

void write_spectrum(Run& run, const std::string& name, const std::vector<EigenpairReport>& spec,
                    const ExperimentConfig& c, bool with_plot) {
  const fs::path csv = run.path(name + ".csv");
  io::write_spectrum_csv(csv, spec);
  run.wrote(csv);
  print_residual_summary(spec);
  if (!with_plot) return;
  CVector ev(static_cast<Eigen::Index>(spec.size()));
  std::vector<double> res;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    ev[static_cast<Eigen::Index>(j)] = spec[j].eigenvalue;
    res.push_back(spec[j].residual);
  }
  const CVector overlay =
      c.system.kind == SystemKind::Modulo ? modulo_true_eigenvalues(c.system.modulo.omega, 20) : CVector();
  const fs::path png = run.path(name + ".png");
  plot::spectrum(png, ev, res, overlay);
  run.wrote(png);
}

void write_histories(Run& run, const std::string& suffix, const TrainHistory& h, bool with_plot) {
  const fs::path a = run.path("history" + suffix + ".csv");
  const fs::path b = run.path("history" + suffix + "_epochs.csv");
  const fs::path p = run.path("parameters" + suffix + ".csv");
  io::write_history_csv(a, h);
  io::write_epoch_history_csv(b, h);
  io::write_parameter_history_csv(p, h);
  run.wrote(a);
  run.wrote(b);
  run.wrote(p);
  if (!with_plot) return;
  std::vector<std::vector<double>> series(4);
  for (const auto& e : h.epochs) {
    series[0].push_back(e.mean.pred);
    series[1].push_back(e.mean.dict);
    series[2].push_back(e.mean.eig);
    series[3].push_back(e.mean.eig_pred);
  }
  const fs::path png = run.path("loss" + suffix + ".png");
  plot::loss_curves(png, series);
  run.wrote(png);
}

EpochObserver checkpoint_observer(Run& run, bool enabled, const std::string& stem) {
  if (!enabled) return {};
  return [&run, stem](const EpochRecord& rec, const WeightedKernelSum& k) {
    const fs::path p = run.path(fmt::format("checkpoints/{}_epoch_{:04d}.json", stem, rec.epoch));
    io::write_kernel(p, k);
    run.wrote(p);
  };
}

/// Fits the final operator for `kernel` and writes model, spectrum and kernel files.
void export_model(Run& run, const std::string& suffix, const TrainResult& r, const ExperimentConfig& c,
                  double beta_koop, bool with_plot) {
  const fs::path kf = run.path("kernel" + suffix + ".json");
  io::write_kernel(kf, r.kernel);
  run.wrote(kf);
  const KoopmanModel model = fit_training_model(r.kernel, r.centers, beta_koop, c.train.beta_modes, true);
  const auto spec = spectrum_report(model, r.centers);
  const fs::path mf = run.path("model" + suffix + ".json");
  io::write_model(mf, model, c.train.beta_modes, spec);
  run.wrote(mf);
  write_spectrum(run, "spectrum" + suffix, spec, c, with_plot);
}

void log_kernel(const WeightedKernelSum& k) {
  const Vector theta = k.parameters();
  std::string line;
  for (std::size_t i = 0; i < k.num_parameters(); ++i) {
    line += fmt::format("{}{} = {:.6g}", i == 0 ? "" : ", ", k.parameter_name(i), theta[static_cast<Eigen::Index>(i)]);
  }
  log::info("kernel: {}", line);
}

int handle_aborted(Run& run, const TrainingAborted& e, const std::string& suffix) {
  log::warn("training aborted at epoch {} batch {}: {}", e.epoch(), e.batch(), e.what());
  write_histories(run, suffix + "_aborted", e.partial_history(), false);
  const fs::path k = run.path("kernel" + suffix + "_aborted.json");
  io::write_kernel(k, e.last_finite_kernel());
  run.wrote(k);
  return kNumericAbort;
}

int cmd_generate(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  Json meta;
  meta["system"] = std::string(to_string(c.system.kind));
  meta["snapshot_dt"] = c.system.snapshot_dt();
  for (const std::string split : {"train", "test"}) {
    const DataSplit& s = split_of(c, split);
    const PairedDataset d = to_pairs(generate_dataset(c.system, s.n_ic, s.steps, s.seed), s.pair_stride);
    const fs::path f = run.path(split + ".csv");
    io::write_dataset_csv(f, d);
    run.wrote(f);
    meta[split] = {{"initial_conditions", s.n_ic}, {"steps", s.steps}, {"pair_stride", s.pair_stride},
                   {"seed", s.seed}, {"pairs", d.pairs.size()}};
    log::info("{}: {} pairs -> {}", split, d.pairs.size(), f.string());
  }
  const fs::path mf = run.path("dataset.json");
  io::write_json(mf, meta);
  run.wrote(mf);
  run.finish(&c);
  return kOk;
}

int cmd_train(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const WeightedKernelSum initial =
      o.kernel_path.empty() ? c.initial_kernel() : load_kernel(run, fs::path(o.kernel_path));
  const PairedDataset data = load_or_generate(run, o, c, "train");
  const fs::path k0 = run.path("kernel_initial.json");
  io::write_kernel(k0, initial);
  run.wrote(k0);
  log::info("training {} on {} pairs, {} centers, {} epochs", c.name, data.pairs.size(), c.train.n_centers,
            c.train.epochs);
  std::optional<TrainResult> r;
  try {
    r = train(initial, data.pairs, c.train, checkpoint_observer(run, o.checkpoints, "kernel"));
  } catch (const TrainingAborted& e) {
    return handle_aborted(run, e, "");
  }
  write_histories(run, "", r->history, o.plot);
  log_kernel(r->kernel);
  export_model(run, "", *r, c, schedule_lookup(c.train.beta_koop_schedule, std::max(1, c.train.epochs)), o.plot);
  run.finish(&c);
  return kOk;
}

int cmd_finetune(Run& run, const Options& o) {
  ExperimentConfig c = resolve_config(o);
  const WeightedKernelSum kernel =
      load_kernel(run, o.kernel_path.empty() ? run.path("kernel.json") : fs::path(o.kernel_path));
  const PairedDataset data = load_or_generate(run, o, c, "train");
  TrainConfig t = c.train;
  t.n_centers = o.n_centers ? *o.n_centers : c.finetune.n_centers;
  t.epochs = o.epochs ? *o.epochs : c.finetune.epochs;
  if (t.n_centers < 1) throw ConfigError("finetune.n_centers", "fine-tuning needs a positive center count");
  // Continue from the end of the main schedule.
  const double beta = schedule_lookup(c.train.beta_koop_schedule, std::max(1, c.train.epochs));
  t.beta_koop_schedule = {{1, beta}};
  log::info("fine-tuning on {} pairs, {} centers, {} epochs", data.pairs.size(), t.n_centers, t.epochs);
  std::optional<TrainResult> r;
  try {
    r = fine_tune(kernel, data.pairs, t, {}, checkpoint_observer(run, o.checkpoints, "kernel_finetuned"));
  } catch (const TrainingAborted& e) {
    return handle_aborted(run, e, "_finetuned");
  }
  write_histories(run, "_finetuned", r->history, o.plot);
  log_kernel(r->kernel);
  c.train = t;
  export_model(run, "_finetuned", *r, c, beta, o.plot);
  run.finish(&c);
  return kOk;
}

int cmd_prune(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const WeightedKernelSum trained =
      load_kernel(run, o.kernel_path.empty() ? run.path("kernel.json") : fs::path(o.kernel_path));
  const int chosen = static_cast<int>(o.keep_top.has_value()) + static_cast<int>(o.threshold.has_value()) +
                     static_cast<int>(!o.keep.empty()) + static_cast<int>(o.drop_smallest.has_value());
  if (chosen > 1) throw ConfigError("prune", "choose one of --keep-top, --threshold, --keep, --drop-smallest");
  KeepPolicy policy = KeepPolicy::all();
  if (o.keep_top) {
    policy = KeepPolicy::largest(*o.keep_top);
  } else if (o.threshold) {
    policy = KeepPolicy::threshold(*o.threshold);
  } else if (!o.keep.empty()) {
    policy = KeepPolicy::indices(o.keep);
  } else if (o.drop_smallest) {
    policy = KeepPolicy::drop_smallest(*o.drop_smallest);
  } else if (c.prune.keep_top > 0) {
    policy = KeepPolicy::largest(c.prune.keep_top);
  }
  const auto keep = policy.select(trained);
  WeightedKernelSum pruned = prune(trained, policy);
  if (o.reset_init) {
    const WeightedKernelSum initial = c.initial_kernel();
    if (initial.size() != trained.size()) {
      throw ConfigError("kernel", "--reset-init needs the configured kernel to match the trained one");
    }
    pruned = keep_primitives(initial, keep);
  }
  std::string kept;
  for (std::size_t i : keep) {
    kept += fmt::format("{}{}[{}] |w| = {:.4g}", kept.empty() ? "" : ", ", to_string(trained.primitives()[i].kind()),
                        i, std::abs(trained.weights()[i]));
  }
  log::info("kept {} of {} primitives: {}", keep.size(), trained.size(), kept);
  const fs::path f = run.path("kernel_pruned.json");
  io::write_kernel(f, pruned);
  run.wrote(f);
  run.finish(&c);
  return kOk;
}

int cmd_spectrum(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const KoopmanModel model = load_model(run, o);
  SnapshotSet eval = model.centers;
  if (o.eval != "centers") eval = load_or_generate(run, o, c, o.eval == "train" ? "train" : "test").pairs;
  if (o.eval != "centers" && o.eval != "train" && o.eval != "test") {
    throw ConfigError("--eval", "expected centers, train or test");
  }
  const auto spec = spectrum_report(model, eval);
  int outside = 0;
  for (const auto& e : spec) outside += std::abs(e.eigenvalue) > 0.5;
  log::info("{} eigenvalues, {} with |lambda| > 0.5", spec.size(), outside);
  write_spectrum(run, "spectrum_" + o.eval, spec, c, o.plot);
  run.finish(&c);
  return kOk;
}

int cmd_predict(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const KoopmanModel model = load_model(run, o);
  const DataSplit& s = split_of(c, o.split);
  const int horizon = c.eval.horizon;
  const TrajectoryBundle truth = generate_dataset(c.system, s.n_ic, horizon, s.seed);
  const Eigen::Index d = c.system.state_dim();

  std::vector<double> step_sq(static_cast<std::size_t>(horizon) + 1, 0.0);
  std::vector<int> step_n(static_cast<std::size_t>(horizon) + 1, 0);
  std::vector<Matrix> preds;
  std::string rows = "trajectory,mse,divergent,divergence_step\n";
  int divergent = 0;
  for (std::size_t i = 0; i < truth.trajectories.size(); ++i) {
    const Matrix& X = truth.trajectories[i];
    Matrix P(horizon + 1, d);
    P.row(0) = X.row(0);
    long bad_step = -1;
    try {
      if (horizon > 0) P.bottomRows(horizon) = predict(model, X.row(0).transpose(), horizon, c.eval.method);
    } catch (const DivergenceError& e) {
      bad_step = e.last_finite_step() + 1;
      P = P.topRows(bad_step).eval();
    }
    const double bound = kDivergenceFactor * std::max(1.0, X.cwiseAbs().maxCoeff());
    for (Eigen::Index t = 0; t < P.rows() && bad_step < 0; ++t) {
      if (P.row(t).cwiseAbs().maxCoeff() > bound) bad_step = static_cast<long>(t);
    }
    const bool div = bad_step >= 0;
    divergent += div;
    double mse = 0.0;
    for (Eigen::Index t = 0; t < P.rows(); ++t) {
      const double e = (P.row(t) - X.row(t)).squaredNorm() / static_cast<double>(d);
      mse += e;
      if (!div) {
        step_sq[static_cast<std::size_t>(t)] += e;
        step_n[static_cast<std::size_t>(t)] += 1;
      }
    }
    mse /= static_cast<double>(std::max<Eigen::Index>(1, P.rows()));
    rows += fmt::format("{},{},{},{}\n", i, io::format_double(mse), div ? 1 : 0, bad_step);
    const fs::path f = run.path(fmt::format("predictions/trajectory_{:04d}.csv", i));
    io::write_trajectory_csv(f, horizon == 0 ? Matrix(0, d) : P, horizon == 0 ? Matrix(0, d) : X);
    run.wrote(f);
    preds.push_back(std::move(P));
  }
  const fs::path tf = run.path("prediction_trajectories.csv");
  io::write_text(tf, rows);
  run.wrote(tf);
  std::string steps = "step,mse,trajectories\n";
  for (std::size_t t = 0; t < step_sq.size(); ++t) {
    const double m = step_n[t] > 0 ? step_sq[t] / step_n[t] : std::nan("");
    steps += fmt::format("{},{},{}\n", t, io::format_double(m), step_n[t]);
  }
  const fs::path sf = run.path("prediction_errors.csv");
  io::write_text(sf, steps);
  run.wrote(sf);

  double total = 0.0;
  int n = 0;
  for (std::size_t t = 1; t < step_sq.size(); ++t) {
    total += step_sq[t];
    n += step_n[t];
  }
  log::info("{} prediction over {} steps: mean squared error {:.4e}, {} of {} trajectories divergent",
            to_string(c.eval.method), horizon, n > 0 ? total / n : std::nan(""), divergent, truth.trajectories.size());

  if (o.plot && horizon > 0 && !preds.empty()) {
    if (d == 2) {
      const fs::path p = run.path("phase_portrait.png");
      plot::phase_portrait(p, preds, truth.trajectories);
      run.wrote(p);
    } else if (d > 2) {
      const fs::path a = run.path("heatmap_pred_0000.png");
      const fs::path b = run.path("heatmap_true_0000.png");
      plot::heatmap(a, preds.front());
      plot::heatmap(b, truth.trajectories.front());
      run.wrote(a);
      run.wrote(b);
    }
  }
  run.finish(&c);
  return divergent > 0 && o.fail_on_divergence ? kDivergence : kOk;
}

int cmd_losses(Run& run, const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const KoopmanModel model = load_model(run, o);
  KoopmanModel model_tr = fit_tr(model.kernel, model.centers);
  model_tr.modes = fit_modes(model_tr, c.train.beta_modes);
  const PairedDataset data = load_or_generate(run, o, c, o.split);
  LossTracking tracking;
  tracking.sk_spectral = true;
  tracking.dict = true;
  const LossReport r = combined_loss(model, data.pairs, c.train.loss, nullptr, tracking, &model_tr);
  const fs::path f = run.path("losses_" + o.split + ".csv");
  io::write_text(f, fmt::format("pred,dict,eig,eig_pred,tr_dict,tr_eig,tr_eig_pred,reg,total\n{},{},{},{},{},{},{},{},{}\n",
                                io::format_double(r.pred), io::format_double(r.dict), io::format_double(r.eig),
                                io::format_double(r.eig_pred), io::format_double(r.tr_dict),
                                io::format_double(r.tr_eig), io::format_double(r.tr_eig_pred),
                                io::format_double(r.reg), io::format_double(r.total)));
  run.wrote(f);
  log::info("{} split, {} pairs", o.split, data.pairs.size());
  log::info("sk: pred {:.4e}  dict {:.4e}  eig {:.4e}  eig_pred {:.4e}", r.pred, r.dict, r.eig, r.eig_pred);
  log::info("tr: dict {:.4e}  eig {:.4e}  eig_pred {:.4e}{}", r.tr_dict, r.tr_eig, r.tr_eig_pred,
            r.tr_rank_deficient ? "  (left eigenvectors rank deficient)" : "");
  run.finish(&c);
  return kOk;
}

int cmd_equivalence(Run& run, const Options& o, const Hooks& hooks) {
  const std::uint64_t seed = o.seed.value_or(1);
  if (o.instances < 1) throw ConfigError("--instances", "must be positive");
  if (o.points < 1) throw ConfigError("--points", "must be positive");
  const EquivalenceReport r = equivalence_check(o.instances, o.points, seed, hooks.equivalence_kernel, o.fixed_points);
  const bool ok = r.passed();
  Json j;
  j["instances"] = r.instances;
  j["redraws"] = r.redraws;
  j["max_eigenvalue_mismatch"] = r.max_eigenvalue_mismatch;
  j["max_count_mismatch"] = r.max_count_mismatch;
  j["max_operator_mismatch"] = r.max_operator_mismatch;
  j["max_vector_defect"] = r.max_vector_defect;
  j["passed"] = ok;
  const fs::path f = run.path("equivalence.json");
  io::write_json(f, j);
  run.wrote(f);
  log::info("{} instances ({} redrawn): eigenvalue mismatch {:.3e}, operator mismatch {:.3e}, vector defect {:.3e}",
            r.instances, r.redraws, r.max_eigenvalue_mismatch, r.max_operator_mismatch, r.max_vector_defect);
  fmt::print("{}\n", ok ? "PASS" : "FAIL");
  run.finish(nullptr);
  return ok ? kOk : kCheckFailed;
}

void add_config_flags(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "Experiment config (JSON)");
  app->add_option("--preset", o.preset_name, "Built-in preset: duffing, modulo or kse");
  app->add_option("--seed", o.seed, "Override the training seed (data seeds become SEED and SEED+1)");
  app->add_flag("--dump-config", o.dump_config, "Print the resolved config as JSON and exit");
}

void add_common_flags(CLI::App* app, Options& o) {
  app->add_option("--out", o.out, "Output directory (default $KEDMD_OUT or ./kedmd-out)");
  app->add_flag("--quiet", o.quiet, "Only print errors");
  app->add_flag("--verbose", o.verbose, "Also print per-batch losses");
  app->add_flag("--plot", o.plot, "Also render PNG plots");
}

int dispatch(const std::string& name, Run& run, const Options& o, const Hooks& hooks) {
  if (name == "generate") return cmd_generate(run, o);
  if (name == "train") return cmd_train(run, o);
  if (name == "finetune") return cmd_finetune(run, o);
  if (name == "prune") return cmd_prune(run, o);
  if (name == "spectrum") return cmd_spectrum(run, o);
  if (name == "predict") return cmd_predict(run, o);
  if (name == "losses") return cmd_losses(run, o);
  return cmd_equivalence(run, o, hooks);
}

}  // namespace

int run(int argc, const char* const* argv, const Hooks& hooks) {
  CLI::App app{"Kernel dictionary learning for kernel EDMD"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KEDMD_VERSION);
  Options o;

  auto* gen = app.add_subcommand("generate", "Simulate the train and test datasets");
  auto* tr = app.add_subcommand("train", "Learn the kernel parameters");
  auto* ft = app.add_subcommand("finetune", "Continue training with a new, usually larger, center set");
  auto* pr = app.add_subcommand("prune", "Drop primitives with small outer weights");
  auto* sp = app.add_subcommand("spectrum", "Eigenvalues and residuals of a fitted model");
  auto* pd = app.add_subcommand("predict", "Predict trajectories from a fitted model");
  auto* ls = app.add_subcommand("losses", "Evaluate every loss on a dataset split");
  auto* eq = app.add_subcommand("equivalence-check", "Compare the simplified and truncated operators on random data");

  for (auto* s : {gen, tr, ft, pr, sp, pd, ls}) add_config_flags(s, o);
  for (auto* s : {gen, tr, ft, pr, sp, pd, ls, eq}) add_common_flags(s, o);
  for (auto* s : {tr, ft, sp, pd, ls}) s->add_option("--data", o.data_dir, "Directory holding train.csv/test.csv");
  for (auto* s : {tr, ft}) {
    s->add_option("--epochs", o.epochs, "Override the epoch count");
    s->add_option("--n-centers", o.n_centers, "Override the number of centers");
    s->add_option("--learning-rate", o.learning_rate, "Override the learning rate");
    s->add_flag("--checkpoints", o.checkpoints, "Write the kernel after every epoch");
  }
  for (auto* s : {tr, ft, pr}) s->add_option("--kernel", o.kernel_path, "Kernel file to start from");
  for (auto* s : {sp, pd, ls}) s->add_option("--model", o.model_path, "Model file (default OUT/model.json)");

  pr->add_option("--keep-top", o.keep_top, "Keep the K largest |w_i|");
  pr->add_option("--threshold", o.threshold, "Keep primitives with |w_i| >= T");
  pr->add_option("--keep", o.keep, "Keep these primitive indices")->delimiter(',');
  pr->add_option("--drop-smallest", o.drop_smallest, "Drop the N smallest |w_i|");
  pr->add_flag("--reset-init", o.reset_init, "Restart survivors from their configured initial values");

  sp->add_option("--eval", o.eval, "Residual evaluation set: centers, train or test");
  pd->add_option("--method", o.method, "spectral or recursive");
  pd->add_option("--horizon", o.horizon, "Prediction steps");
  pd->add_option("--split", o.split, "Initial conditions from the train or test split");
  pd->add_flag("--fail-on-divergence", o.fail_on_divergence, "Exit with the divergence code if any prediction diverges");
  ls->add_option("--split", o.split, "train or test");

  eq->add_option("--instances", o.instances, "Random instances");
  eq->add_option("--points", o.points, "Largest number of points per instance");
  eq->add_option("--fixed-points", o.fixed_points, "Use exactly this many points (0: random up to --points)");
  eq->add_option("--seed", o.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  log::set_level(o.quiet ? log::Level::Quiet : o.verbose ? log::Level::Verbose : log::Level::Normal);
  std::string name;
  for (auto* s : app.get_subcommands()) name = s->get_name();
  std::vector<std::string> args(argv + 1, argv + argc);

  try {
    if (o.dump_config) {
      fmt::print("{}\n", config_to_json(resolve_config(o)).dump(2));
      return kOk;
    }
    Run r(name, args, o.out.empty() ? default_out() : fs::path(o.out));
    fs::create_directories(r.out());
    return dispatch(name, r, o, hooks);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "divergence: {}\n", e.what());
    return kDivergence;
  } catch (const NumericError& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return kNumericAbort;
  } catch (const DegenerateEigenfunction& e) {
    fmt::print(stderr, "numeric error: {}\n", e.what());
    return kNumericAbort;
  } catch (const IoError& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIoError;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kInternal;
  }
}

}  // namespace kedmd::cli
