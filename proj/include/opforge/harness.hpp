#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "opforge/dataset.hpp"
#include "opforge/model.hpp"
#include "opforge/trainer.hpp"

namespace opforge {

struct DatasetConfig {
  std::string source = "synth";  // "synth" or "corpus"
  std::string corpus_dir;
  int originals = 2000;
  int synth_size = 64;
  double beta = 1.5;
  int crop = 64;
  std::vector<std::string> classes = all_class_names();
  uint64_t seed = 1;
  int resplits = 1;

  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchitectureConfig model;
  TrainConfig trainer;
  std::string out_dir = "out";

  void validate() const;  // crop must match model input size, classes must match num_classes
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

/// Training accuracy within 2 points of chance for 5 consecutive epochs.
bool is_stalled(const TrainReport& report, Index num_classes);

struct ExperimentResult {
  TrainReport report;
  double test_accuracy = 0.0;
  ConfusionMatrix test_confusion;
  std::string manifest_hash;
  bool stalled = false;
};

/// Forge -> train -> evaluate -> artifacts (config.json, report.json,
/// confusion.csv, curve.csv, checkpoint.ofc, manifest.jsonl). Errors are
/// surfaced with the failing stage named. resplits > 1 repeats the whole
/// run on re-seeded splits under resplit_<i>/ and aggregates.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Forge only: writes <out>/<split>/<class>/<id>.pgm plus manifest.jsonl.
std::string run_forge(const ExperimentConfig& config);

/// Evaluate a saved checkpoint on the config's test split; writes
/// eval_confusion.csv and returns the accuracy.
double run_eval(const ExperimentConfig& config, const std::string& checkpoint_path);

struct AblationVariant {
  std::string name;
  std::string status;  // "completed", "stalled" or "aborted"
  std::string error;
  double final_validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  TrainReport report;
};

struct AblationReport {
  std::string axis;
  std::string manifest_hash;
  std::vector<AblationVariant> variants;

  nlohmann::json to_json() const;
};

/// Trains every variant of one study axis (hpf, expansion, last_pool,
/// activation) on a single shared dataset and initialization seed. A
/// variant that diverges is recorded as aborted instead of killing the run.
AblationReport run_ablation(const ExperimentConfig& base, const std::string& axis);

struct GradCheckResult {
  std::string layer;
  double max_rel_error = 0.0;
  uint64_t seed = 0;
  bool pass = false;
};

/// Finite-difference sweep over every layer type and the composed model,
/// `rounds` random shapes/points per layer. inject_bug doubles one analytic
/// gradient so the self-test can prove the checker catches it.
std::vector<GradCheckResult> run_gradcheck(uint64_t seed, int rounds = 20, bool inject_bug = false);
std::string format_gradcheck(const std::vector<GradCheckResult>& results);

}  // namespace opforge
