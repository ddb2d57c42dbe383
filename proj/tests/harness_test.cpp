#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "opforge/harness.hpp"

using namespace opforge;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_experiment(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset.originals = 12;
  cfg.dataset.synth_size = 32;
  cfg.dataset.crop = 32;
  cfg.dataset.classes = {"Orig", "MedF"};
  cfg.dataset.seed = 3;
  cfg.model.input_size = 32;
  cfg.model.num_classes = 2;
  cfg.model.base_width = 4;
  cfg.trainer.batch_size = 8;
  cfg.trainer.max_epochs = 2;
  cfg.trainer.seed = 3;
  cfg.out_dir = out_dir;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrainReport report_with_train_accuracy(const std::vector<double>& accs) {
  TrainReport r;
  for (double a : accs) r.epochs.push_back({0.5, a, a, 0.01});
  return r;
}

}  // namespace

TEST_CASE("experiment config json and file round trips") {
  ExperimentConfig cfg = tiny_experiment("somewhere");
  cfg.model.activation = Activation::Relu;
  cfg.trainer.learning_rate = 0.004;

  ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.dataset.originals == 12);
  CHECK(back.dataset.classes == std::vector<std::string>{"Orig", "MedF"});
  CHECK(back.model.activation == Activation::Relu);
  CHECK(back.trainer.learning_rate == 0.004);
  CHECK(back.out_dir == "somewhere");

  const fs::path dir = fresh_dir("opforge_cfg_test");
  const std::string path = (dir / "config.json").string();
  cfg.save_file(path);
  ExperimentConfig loaded = ExperimentConfig::load_file(path);
  CHECK(loaded.to_json() == cfg.to_json());
  fs::remove_all(dir);
}

TEST_CASE("config validation names the mismatched fields") {
  ExperimentConfig cfg = tiny_experiment("x");
  cfg.dataset.crop = 64;  // model still expects 32
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("64"), std::invalid_argument);

  cfg = tiny_experiment("x");
  cfg.model.num_classes = 3;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("num_classes"), std::invalid_argument);

  cfg = tiny_experiment("x");
  cfg.dataset.resplits = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("config loader distinguishes missing files from broken json") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::load_file("/nonexistent/opforge.json"), doctest::Contains("cannot open"),
                       std::runtime_error);
  const fs::path dir = fresh_dir("opforge_badjson_test");
  const std::string path = (dir / "broken.json").string();
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_WITH_AS(ExperimentConfig::load_file(path), doctest::Contains("not valid JSON"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("stall detection needs five consecutive epochs near chance") {
  // chance for 2 classes is 0.5; the band is +-0.02
  CHECK(is_stalled(report_with_train_accuracy({0.50, 0.51, 0.49, 0.52, 0.50}), 2));
  CHECK(!is_stalled(report_with_train_accuracy({0.50, 0.51, 0.49, 0.52}), 2));
  CHECK(!is_stalled(report_with_train_accuracy({0.50, 0.51, 0.60, 0.52, 0.50, 0.49}), 2));
  CHECK(is_stalled(report_with_train_accuracy({0.9, 0.9, 0.50, 0.51, 0.49, 0.52, 0.50}), 2));
  // the same trace is nowhere near chance for 4 classes
  CHECK(!is_stalled(report_with_train_accuracy({0.50, 0.51, 0.49, 0.52, 0.50}), 4));
  CHECK(is_stalled(report_with_train_accuracy({0.25, 0.26, 0.24, 0.27, 0.25}), 4));
}

TEST_CASE("run_experiment produces the advertised artifacts") {
  const fs::path dir = fresh_dir("opforge_exp_test");
  ExperimentConfig cfg = tiny_experiment(dir.string());
  ExperimentResult result = run_experiment(cfg);

  CHECK(result.manifest_hash.size() == 16);  // fnv1a64 in hex
  CHECK(result.test_accuracy >= 0.0);
  CHECK(result.test_accuracy <= 1.0);
  CHECK(result.report.epochs.size() <= 2);
  CHECK(result.test_confusion.total() == 4 * 2);  // 4 test originals x 2 classes

  for (const char* name :
       {"config.json", "report.json", "confusion.csv", "curve.csv", "manifest.jsonl", "checkpoint.ofc"})
    CHECK(fs::exists(dir / name));

  // report.json carries the hash and the training record
  std::ifstream is(dir / "report.json");
  nlohmann::json report;
  is >> report;
  CHECK(report["manifest_hash"] == result.manifest_hash);
  CHECK(!report["train"]["stop_reason"].get<std::string>().empty());
  CHECK(report.contains("stalled"));

  // the checkpoint can be evaluated against the same dataset config
  ExperimentConfig eval_cfg = cfg;
  eval_cfg.out_dir = (dir / "eval").string();
  const double acc = run_eval(eval_cfg, (dir / "checkpoint.ofc").string());
  CHECK(acc == doctest::Approx(result.test_accuracy));
  CHECK(fs::exists(dir / "eval" / "eval_confusion.csv"));
  fs::remove_all(dir);
}

TEST_CASE("run_experiment aggregates resplits") {
  const fs::path dir = fresh_dir("opforge_resplit_test");
  ExperimentConfig cfg = tiny_experiment(dir.string());
  cfg.trainer.max_epochs = 1;
  cfg.dataset.resplits = 2;
  run_experiment(cfg);

  CHECK(fs::exists(dir / "resplit_0" / "report.json"));
  CHECK(fs::exists(dir / "resplit_1" / "report.json"));
  std::ifstream is(dir / "resplits.json");
  nlohmann::json agg;
  is >> agg;
  CHECK(agg["resplits"] == 2);
  CHECK(agg["test_accuracies"].size() == 2);
  CHECK(agg["min_test_accuracy"].get<double>() <= agg["max_test_accuracy"].get<double>());
  fs::remove_all(dir);
}

TEST_CASE("failures are reported with the failing stage named") {
  const fs::path dir = fresh_dir("opforge_stage_test");
  ExperimentConfig cfg = tiny_experiment(dir.string());
  cfg.dataset.source = "corpus";
  cfg.dataset.corpus_dir = (dir / "no_such_corpus").string();
  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("stage forge"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("run_eval rejects a checkpoint whose geometry disagrees") {
  const fs::path dir = fresh_dir("opforge_evalgeom_test");
  ExperimentConfig cfg = tiny_experiment(dir.string());
  run_experiment(cfg);

  ExperimentConfig other = cfg;
  other.dataset.synth_size = 64;
  other.dataset.crop = 64;
  other.model.input_size = 64;
  CHECK_THROWS_WITH_AS(run_eval(other, (dir / "checkpoint.ofc").string()), doctest::Contains("input size"),
                       std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("run_forge writes the split/class tree and hashes deterministically") {
  const fs::path dir_a = fresh_dir("opforge_forge_a");
  const fs::path dir_b = fresh_dir("opforge_forge_b");
  ExperimentConfig cfg = tiny_experiment(dir_a.string());
  const std::string hash_a = run_forge(cfg);
  cfg.out_dir = dir_b.string();
  const std::string hash_b = run_forge(cfg);
  CHECK(hash_a == hash_b);

  CHECK(fs::exists(dir_a / "manifest.jsonl"));
  size_t pgm_count = 0;
  for (const char* split : {"train", "validation", "test"})
    for (const char* cls : {"Orig", "MedF"}) {
      REQUIRE(fs::is_directory(dir_a / split / cls));
      for (const auto& entry : fs::directory_iterator(dir_a / split / cls))
        pgm_count += entry.path().extension() == ".pgm";
    }
  CHECK(pgm_count == 24);  // 12 originals x 2 classes
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("ablation trains every variant of an axis on one shared dataset") {
  const fs::path dir = fresh_dir("opforge_ablate_test");
  ExperimentConfig cfg = tiny_experiment(dir.string());
  cfg.trainer.max_epochs = 1;
  AblationReport report = run_ablation(cfg, "last_pool");

  CHECK(report.axis == "last_pool");
  REQUIRE(report.variants.size() == 3);
  CHECK(report.variants[0].name == "gap");
  CHECK(report.variants[1].name == "max_s2");
  CHECK(report.variants[2].name == "avg_s2");
  for (const auto& v : report.variants) {
    CHECK((v.status == "completed" || v.status == "stalled"));
    CHECK(v.error.empty());
    CHECK(fs::exists(dir / "ablation_last_pool" / ("curve_" + v.name + ".csv")));
  }
  CHECK(fs::exists(dir / "ablation_last_pool" / "report.json"));
  CHECK(report.manifest_hash.size() == 16);

  CHECK_THROWS_WITH_AS(run_ablation(cfg, "optimizer"), doctest::Contains("axis"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck sweep passes clean and catches an injected bug") {
  const auto clean = run_gradcheck(17, 2);
  REQUIRE(!clean.empty());
  for (const auto& row : clean) {
    CHECK(row.pass);
    CHECK(row.max_rel_error < 1e-4);
  }
  bool has_model_row = false;
  for (const auto& row : clean) has_model_row |= row.layer.find("model") != std::string::npos;
  CHECK(has_model_row);

  const auto buggy = run_gradcheck(17, 2, true);
  bool caught = false;
  for (const auto& row : buggy)
    if (!row.pass && row.layer.find("conv2d") != std::string::npos) caught = true;
  CHECK(caught);

  const std::string table = format_gradcheck(clean);
  CHECK(table.find("PASS") != std::string::npos);
  CHECK(table.find("conv2d") != std::string::npos);
}
