#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "kedmd/config.hpp"
#include "kedmd/errors.hpp"
#include "kedmd/io.hpp"
#include "support.hpp"

using namespace kedmd;
namespace fs = std::filesystem;

namespace {

std::string config_error_path(const std::string& text) {
  try {
    (void)config_from_json(io::Json::parse(text));
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("doubles survive formatting") {
    RandomStream rng(71, {1});
    for (int i = 0; i < 1000; ++i) {
      const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(200)) - 100);
      CHECK(io::parse_double(io::format_double(v), "t") == v);
    }
    CHECK(std::isnan(io::parse_double("nan", "t")));
    CHECK(io::parse_double("inf", "t") == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS((void)io::parse_double("1.0x", "t"), IoError);
    CHECK_THROWS_AS((void)io::parse_double("", "t"), IoError);
  }

  TEST_CASE("dataset CSV round trip is byte-identical") {
    test::TempDir dir;
    SystemSpec s;
    const PairedDataset data = to_pairs(generate_dataset(s, 7, 5, 3), 2);
    io::write_dataset_csv(dir / "a.csv", data);
    const PairedDataset back = io::read_dataset_csv(dir / "a.csv");
    CHECK(back.pairs.X == data.pairs.X);
    CHECK(back.pairs.Y == data.pairs.Y);
    CHECK(back.trajectory == data.trajectory);
    CHECK(back.step == data.step);
    io::write_dataset_csv(dir / "b.csv", back);
    CHECK(io::read_text(dir / "a.csv") == io::read_text(dir / "b.csv"));
  }

  TEST_CASE("malformed dataset CSV is rejected") {
    test::TempDir dir;
    io::write_text(dir / "bad.csv", "trajectory,step,x1,y1\n0,0,1.0\n");
    CHECK_THROWS_AS((void)io::read_dataset_csv(dir / "bad.csv"), IoError);
    io::write_text(dir / "bad2.csv", "trajectory,step,x1,y1\n0,0,abc,1\n");
    CHECK_THROWS_AS((void)io::read_dataset_csv(dir / "bad2.csv"), IoError);
    CHECK_THROWS_AS((void)io::read_dataset_csv(dir / "missing.csv"), IoError);
  }

  TEST_CASE("kernel file round trip") {
    test::TempDir dir;
    RandomStream rng(72, {1});
    for (int i = 0; i < 20; ++i) {
      const WeightedKernelSum k = test::random_kernel(rng);
      io::write_kernel(dir / "k.json", k);
      const WeightedKernelSum back = io::read_kernel(dir / "k.json");
      CHECK(back.parameters() == k.parameters());
      REQUIRE(back.size() == k.size());
      for (std::size_t p = 0; p < k.size(); ++p) CHECK(back.primitives()[p].kind() == k.primitives()[p].kind());
      CHECK(io::kernel_to_text(back) == io::kernel_to_text(k));
    }
  }

  TEST_CASE("kernel file errors name the field") {
    auto path_of = [](const std::string& text) {
      try {
        (void)io::kernel_from_json(io::Json::parse(text));
      } catch (const ConfigError& e) {
        return e.path();
      }
      return std::string("<no error>");
    };
    CHECK(path_of(R"({"primitives":[{"kind":"rbf","weight":1}]})") == "kernel.primitives[0].sigma");
    CHECK(path_of(R"({"primitives":[{"kind":"rbf","sigma":1}]})") == "kernel.primitives[0].weight");
    CHECK(path_of(R"({"primitives":[{"kind":"nope","weight":1}]})") == "kernel.primitives[0].kind");
    CHECK(path_of(R"({"primitives":[{"kind":"rbf","sigma":1,"weight":1,"extra":2}]})") ==
          "kernel.primitives[0].extra");
    CHECK(path_of(R"({"primitives":[]})") == "kernel.primitives");
    CHECK(path_of(R"({"primitives":[{"kind":"linear","c1":1,"c2":3,"weight":1}]})") == "<no error>");
  }

  TEST_CASE("config round trip through JSON") {
    for (const auto& name : preset_names()) {
      const ExperimentConfig c = preset(name);
      const io::Json j = config_to_json(c);
      const ExperimentConfig back = config_from_json(j);
      CHECK(config_to_json(back).dump() == j.dump());
      CHECK(config_hash(back) == config_hash(c));
    }
  }

  TEST_CASE("config overrides fall back to the preset") {
    const ExperimentConfig c =
        config_from_json(io::Json::parse(R"({"preset":"kse","data":{"train":{"n_ic":20}},"train":{"epochs":60}})"));
    CHECK(c.train_data.n_ic == 20);
    CHECK(c.train.epochs == 60);
    CHECK(c.train.n_centers == preset("kse").train.n_centers);
    CHECK(c.kernel_primitives.size() == 6);
  }

  TEST_CASE("config errors carry the JSON path") {
    CHECK(config_error_path(R"({"preset":"duffing","train":{"learning_rate":-1}})") == "train.learning_rate");
    CHECK(config_error_path(R"({"preset":"duffing","train":{"bogus":1}})") == "train.bogus");
    CHECK(config_error_path(R"({"preset":"nope"})") == "preset");
    CHECK(config_error_path(R"({"preset":"duffing","data":{"train":{"n_ic":"many"}}})") == "data.train.n_ic");
    CHECK(config_error_path(R"({"preset":"duffing","eval":{"method":"magic"}})") == "eval.method");
    CHECK(config_error_path(R"({"preset":"duffing","unknown":{}})") == "config.unknown");
    CHECK(config_error_path(R"({"preset":"duffing"})") == "<no error>");
  }

  TEST_CASE("load_config reports parse errors as config errors") {
    test::TempDir dir;
    io::write_text(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS((void)load_config((dir / "bad.json").string()), ConfigError);
    CHECK_THROWS_AS((void)load_config((dir / "missing.json").string()), Error);
  }

  TEST_CASE("model file round trip") {
    test::TempDir dir;
    RandomStream rng(73, {1});
    const SnapshotSet c = test::random_snapshots(rng, 10, 2);
    const WeightedKernelSum k({PrimitiveKernel::rbf(1.2), PrimitiveKernel::nngp(1.0, 0.3)}, {0.6, 0.4});
    const KoopmanModel m = fit_sk(k, c, 1e-8);
    io::write_model(dir / "m.json", m, 1e-7, spectrum_report(m, c));
    const io::ModelFile back = io::read_model(dir / "m.json");
    CHECK(back.kernel.parameters() == k.parameters());
    CHECK(back.centers.X == c.X);
    CHECK(back.centers.Y == c.Y);
    CHECK(back.beta_koop == 1e-8);
    CHECK(back.beta_modes == 1e-7);
    const KoopmanModel again = fit_sk(back.kernel, back.centers, back.beta_koop);
    CHECK(again.K == m.K);
  }

  TEST_CASE("history and spectrum CSV headers") {
    test::TempDir dir;
    io::write_spectrum_csv(dir / "s.csv", {});
    CHECK(io::read_text(dir / "s.csv") == "index,re,im,magnitude,residual,degenerate\n");
    TrainHistory h;
    io::write_history_csv(dir / "h.csv", h);
    CHECK(io::read_text(dir / "h.csv").rfind("epoch,batch,pred,dict,eig,eig_pred,tr_dict,tr_eig,tr_eig_pred,reg,total",
                                             0) == 0);
  }

  TEST_CASE("trajectory CSV pads the shorter side") {
    test::TempDir dir;
    Matrix pred(2, 1), truth(3, 1);
    pred << 1.0, 2.0;
    truth << 1.5, 2.5, 3.5;
    io::write_trajectory_csv(dir / "t.csv", pred, truth);
    CHECK(io::read_text(dir / "t.csv") == "step,pred_1,true_1\n1,1,1.5\n2,2,2.5\n3,,3.5\n");
  }

  TEST_CASE("fnv1a reference values") {
    CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(io::hex64(0xabcULL) == "0000000000000abc");
  }
}
