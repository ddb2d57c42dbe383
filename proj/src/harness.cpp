#include "opforge/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace opforge {
namespace {

namespace fs = std::filesystem;

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::vector<GrayImage> make_originals(const DatasetConfig& cfg) {
  if (cfg.source == "synth") {
    SynthConfig synth;
    synth.size = cfg.synth_size;
    synth.beta = cfg.beta;
    synth.seed = cfg.seed;
    return synth_corpus(synth, cfg.originals);
  }
  if (cfg.source == "corpus") {
    std::vector<GrayImage> images = load_corpus(cfg.corpus_dir, cfg.crop);
    check_arg(!images.empty(), "corpus directory " + cfg.corpus_dir + " is empty");
    if (cfg.originals > 0 && static_cast<size_t>(cfg.originals) < images.size())
      images.resize(static_cast<size_t>(cfg.originals));
    return images;
  }
  throw std::invalid_argument("dataset source must be 'synth' or 'corpus', got '" + cfg.source + "'");
}

struct ForgedData {
  DatasetSplits splits;
  std::string manifest;
  std::string manifest_hash;
};

ForgedData forge(const DatasetConfig& cfg, uint64_t split_seed) {
  ForgedData data;
  const std::vector<GrayImage> originals = make_originals(cfg);
  data.splits = build_dataset(originals, cfg.classes, cfg.crop, split_seed);
  data.manifest = manifest_jsonl(data.splits, cfg.crop);
  data.manifest_hash = hex64(fnv1a64(data.manifest));
  return data;
}

Model build_experiment_model(const ExperimentConfig& config) {
  Rng init_rng(mix_seed(config.trainer.seed, 0xB11Dull));
  return build_model(config.model, init_rng);
}

ExperimentResult run_single(const ExperimentConfig& config, uint64_t split_seed, const fs::path& out) {
  const ForgedData data = stage("forge", [&] { return forge(config.dataset, split_seed); });

  Model model = build_experiment_model(config);
  ExperimentResult result;
  result.manifest_hash = data.manifest_hash;
  result.report = stage("train", [&] { return train(model, data.splits.train, data.splits.validation, config.trainer); });
  std::tie(result.test_accuracy, result.test_confusion) =
      stage("evaluate", [&] { return evaluate(model, data.splits.test, config.trainer.batch_size); });
  result.stalled = is_stalled(result.report, config.model.num_classes);

  stage("artifacts", [&] {
    fs::create_directories(out);
    write_text(out / "config.json", config.to_json().dump(2) + "\n");
    nlohmann::json report = {{"train", result.report.to_json()},
                             {"test_accuracy", result.test_accuracy},
                             {"test_confusion", result.test_confusion.to_json()},
                             {"manifest_hash", result.manifest_hash},
                             {"stalled", result.stalled}};
    write_text(out / "report.json", report.dump(2) + "\n");
    write_text(out / "confusion.csv", result.test_confusion.to_csv());
    write_text(out / "curve.csv", result.report.curve_csv());
    write_text(out / "manifest.jsonl", data.manifest);
    save_checkpoint(model, (out / "checkpoint.ofc").string());
    return 0;
  });
  return result;
}

}  // namespace

nlohmann::json DatasetConfig::to_json() const {
  return {{"source", source}, {"corpus_dir", corpus_dir}, {"originals", originals},
          {"synth_size", synth_size}, {"beta", beta},     {"crop", crop},
          {"classes", classes},       {"seed", seed},     {"resplits", resplits}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.source = j.value("source", c.source);
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  c.originals = j.value("originals", c.originals);
  c.synth_size = j.value("synth_size", c.synth_size);
  c.beta = j.value("beta", c.beta);
  c.crop = j.value("crop", c.crop);
  if (j.contains("classes")) c.classes = j.at("classes").get<std::vector<std::string>>();
  c.seed = j.value("seed", c.seed);
  c.resplits = j.value("resplits", c.resplits);
  return c;
}

void ExperimentConfig::validate() const {
  model.validate();
  check_arg(dataset.crop == model.input_size,
            "config: dataset crop " + std::to_string(dataset.crop) + " must equal model input_size " +
                std::to_string(model.input_size));
  check_arg(static_cast<Index>(dataset.classes.size()) == model.num_classes,
            "config: " + std::to_string(dataset.classes.size()) + " dataset classes vs model num_classes " +
                std::to_string(model.num_classes));
  check_arg(dataset.resplits >= 1, "config: resplits must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"dataset", dataset.to_json()}, {"model", model.to_json()}, {"trainer", trainer.to_json()},
          {"out_dir", out_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = DatasetConfig::from_json(j.at("dataset"));
  if (j.contains("model")) c.model = ArchitectureConfig::from_json(j.at("model"));
  if (j.contains("trainer")) c.trainer = TrainConfig::from_json(j.at("trainer"));
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::save_file(const std::string& path) const { write_text(path, to_json().dump(2) + "\n"); }

bool is_stalled(const TrainReport& report, Index num_classes) {
  const double chance = 1.0 / static_cast<double>(num_classes);
  int run = 0;
  for (const auto& e : report.epochs) {
    if (std::abs(e.train_accuracy - chance) <= 0.02 + 1e-12) {
      if (++run >= 5) return true;
    } else {
      run = 0;
    }
  }
  return false;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out(config.out_dir);
  if (config.dataset.resplits == 1) return run_single(config, config.dataset.seed, out);

  std::vector<double> accuracies;
  ExperimentResult first;
  for (int r = 0; r < config.dataset.resplits; ++r) {
    const uint64_t split_seed = mix_seed(config.dataset.seed, static_cast<uint64_t>(r));
    ExperimentResult result = run_single(config, split_seed, out / ("resplit_" + std::to_string(r)));
    accuracies.push_back(result.test_accuracy);
    if (r == 0) first = std::move(result);
  }
  double sum = 0.0, lo = accuracies[0], hi = accuracies[0];
  for (double a : accuracies) {
    sum += a;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  nlohmann::json agg = {{"resplits", config.dataset.resplits},
                        {"test_accuracies", accuracies},
                        {"mean_test_accuracy", sum / static_cast<double>(accuracies.size())},
                        {"min_test_accuracy", lo},
                        {"max_test_accuracy", hi}};
  write_text(out / "resplits.json", agg.dump(2) + "\n");
  return first;
}

std::string run_forge(const ExperimentConfig& config) {
  config.validate();
  const ForgedData data = stage("forge", [&] { return forge(config.dataset, config.dataset.seed); });
  const fs::path out(config.out_dir);
  stage("artifacts", [&] {
    const std::pair<const char*, const LabeledSet*> sets[3] = {
        {"train", &data.splits.train}, {"validation", &data.splits.validation}, {"test", &data.splits.test}};
    for (const auto& [name, set] : sets)
      for (const auto& item : set->items) {
        const std::string& cls = set->class_names[static_cast<size_t>(item.label)];
        const fs::path dir = out / name / cls;
        fs::create_directories(dir);
        write_pgm(item.image, (dir / (std::to_string(item.original_id) + ".pgm")).string());
      }
    write_text(out / "manifest.jsonl", data.manifest);
    return 0;
  });
  return data.manifest_hash;
}

double run_eval(const ExperimentConfig& config, const std::string& checkpoint_path) {
  config.validate();
  const Model model = stage("load", [&] { return load_checkpoint(checkpoint_path); });
  check_arg(model.config.input_size == config.dataset.crop,
            "eval: checkpoint input size " + std::to_string(model.config.input_size) + " vs dataset crop " +
                std::to_string(config.dataset.crop));
  const ForgedData data = stage("forge", [&] { return forge(config.dataset, config.dataset.seed); });
  const auto [accuracy, confusion] =
      stage("evaluate", [&] { return evaluate(model, data.splits.test, config.trainer.batch_size); });
  stage("artifacts", [&] {
    write_text(fs::path(config.out_dir) / "eval_confusion.csv", confusion.to_csv());
    return 0;
  });
  return accuracy;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json jv = {{"name", v.name},
                         {"status", v.status},
                         {"final_validation_accuracy", v.final_validation_accuracy},
                         {"test_accuracy", v.test_accuracy},
                         {"report", v.report.to_json()}};
    if (!v.error.empty()) jv["error"] = v.error;
    vars.push_back(jv);
  }
  return {{"axis", axis}, {"manifest_hash", manifest_hash}, {"variants", vars}};
}

AblationReport run_ablation(const ExperimentConfig& base, const std::string& axis) {
  base.validate();
  std::vector<std::string> variant_names;
  if (axis == "hpf")
    variant_names = {"untrainable", "trainable", "random", "no_high_pass"};
  else if (axis == "expansion")
    variant_names = {"on", "off", "on_plus_pool"};
  else if (axis == "last_pool")
    variant_names = {"gap", "max_s2", "avg_s2"};
  else if (axis == "activation")
    variant_names = {"tanh", "relu", "sigmoid"};
  else
    throw std::invalid_argument("ablate: unknown axis '" + axis + "' (hpf, expansion, last_pool, activation)");

  const ForgedData data = stage("forge", [&] { return forge(base.dataset, base.dataset.seed); });
  AblationReport report;
  report.axis = axis;
  report.manifest_hash = data.manifest_hash;

  const fs::path out = fs::path(base.out_dir) / ("ablation_" + axis);
  fs::create_directories(out);
  for (const std::string& name : variant_names) {
    ExperimentConfig cfg = base;
    if (axis == "hpf")
      cfg.model.hpf_mode = hpf_mode_from_string(name);
    else if (axis == "expansion")
      cfg.model.expansion = expansion_from_string(name);
    else if (axis == "last_pool")
      cfg.model.last_pool = last_pool_from_string(name);
    else
      cfg.model.activation = activation_from_string(name);

    AblationVariant variant;
    variant.name = name;
    try {
      Model model = build_experiment_model(cfg);
      variant.report = train(model, data.splits.train, data.splits.validation, cfg.trainer);
      std::tie(variant.test_accuracy, std::ignore) = evaluate(model, data.splits.test, cfg.trainer.batch_size);
      variant.final_validation_accuracy = variant.report.final_validation_accuracy();
      variant.status = is_stalled(variant.report, cfg.model.num_classes) ? "stalled" : "completed";
      write_text(out / ("curve_" + name + ".csv"), variant.report.curve_csv());
    } catch (const std::exception& e) {
      variant.status = "aborted";
      variant.error = e.what();
    }
    std::cerr << "ablation " << axis << "/" << name << ": " << variant.status << ", val acc "
              << variant.final_validation_accuracy << "\n";
    report.variants.push_back(std::move(variant));
  }
  write_text(out / "report.json", report.to_json().dump(2) + "\n");
  write_text(out / "manifest.jsonl", data.manifest);
  return report;
}

}  // namespace opforge
