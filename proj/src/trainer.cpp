#include "opforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace opforge {

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"momentum", momentum},   {"weight_decay", weight_decay},
          {"batch_size", batch_size},       {"patience", patience},   {"min_delta", min_delta},
          {"max_epochs", max_epochs},       {"seed", seed},           {"verbose", verbose}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.verbose = j.value("verbose", c.verbose);
  check_arg(c.learning_rate > 0 && c.momentum >= 0 && c.momentum < 1 && c.weight_decay >= 0,
            "train config: invalid optimizer values");
  check_arg(c.batch_size >= 1 && c.patience >= 1 && c.max_epochs >= 1, "train config: invalid loop bounds");
  return c;
}

NesterovOptimizer::NesterovOptimizer(double learning_rate, double momentum, double weight_decay)
    : lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
  check_arg(learning_rate > 0, "optimizer: learning rate must be positive");
  check_arg(momentum >= 0 && momentum < 1, "optimizer: momentum must be in [0, 1)");
  check_arg(weight_decay >= 0, "optimizer: weight decay must be non-negative");
}

const Tensor& NesterovOptimizer::velocity(const std::string& name) const {
  for (const auto& [n, v] : velocity_)
    if (n == name) return v;
  throw std::invalid_argument("optimizer: no velocity for parameter " + name);
}

void NesterovOptimizer::step(const std::vector<std::pair<std::string, Parameter*>>& params) {
  if (velocity_.empty())
    for (const auto& [name, p] : params) {
      const auto& s = p->value.shape();
      velocity_.emplace_back(name, Tensor(s[0], s[1], s[2], s[3]));
    }
  check_arg(velocity_.size() == params.size(), "optimizer: parameter list changed between steps");
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i].second;
    if (!p.trainable) continue;
    if (!p.grad.all_finite())
      throw std::runtime_error("optimizer: non-finite gradient for parameter " + params[i].first +
                               "; training aborted");
    Tensor& v = velocity_[i].second;
    const Real lr = static_cast<Real>(lr_), mu = static_cast<Real>(momentum_), wd = static_cast<Real>(weight_decay_);
    Tensor adjusted = p.grad;
    adjusted.array() += wd * p.value.array();
    v.array() = mu * v.array() - lr * adjusted.array();
    p.value.array() += mu * v.array() - lr * adjusted.array();
  }
}

PlateauDecision plateau_step(PlateauDetector& detector, double validation_accuracy, int decay_count) {
  check_arg(validation_accuracy >= 0.0 && validation_accuracy <= 1.0, "plateau: accuracy outside [0, 1]");
  if (validation_accuracy > detector.best + detector.min_delta) {
    detector.best = validation_accuracy;
    detector.epochs_since_improvement = 0;
    return PlateauDecision::Continue;
  }
  ++detector.epochs_since_improvement;
  if (detector.epochs_since_improvement < detector.patience) return PlateauDecision::Continue;
  detector.epochs_since_improvement = 0;
  return decay_count >= 3 ? PlateauDecision::Stop : PlateauDecision::DecayLr;
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names) : class_names_(std::move(class_names)) {
  check_arg(class_names_.size() >= 2, "confusion: need at least two classes");
  counts_.assign(class_names_.size() * class_names_.size(), 0);
}

void ConfusionMatrix::add(int actual, int predicted) {
  const int k = static_cast<int>(class_names_.size());
  check_arg(actual >= 0 && actual < k && predicted >= 0 && predicted < k, "confusion: class index out of range");
  ++counts_[static_cast<size_t>(actual) * static_cast<size_t>(k) + static_cast<size_t>(predicted)];
}

long long ConfusionMatrix::at(int actual, int predicted) const {
  const int k = static_cast<int>(class_names_.size());
  check_arg(actual >= 0 && actual < k && predicted >= 0 && predicted < k, "confusion: class index out of range");
  return counts_[static_cast<size_t>(actual) * static_cast<size_t>(k) + static_cast<size_t>(predicted)];
}

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long c : counts_) t += c;
  return t;
}

double ConfusionMatrix::accuracy() const {
  const long long t = total();
  if (t == 0) return 0.0;
  long long trace = 0;
  for (size_t i = 0; i < class_names_.size(); ++i) trace += counts_[i * class_names_.size() + i];
  return static_cast<double>(trace) / static_cast<double>(t);
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "actual\\predicted";
  for (const auto& n : class_names_) os << "," << n;
  os << "\n";
  const size_t k = class_names_.size();
  for (size_t a = 0; a < k; ++a) {
    os << class_names_[a];
    for (size_t p = 0; p < k; ++p) os << "," << counts_[a * k + p];
    os << "\n";
  }
  return os.str();
}

nlohmann::json ConfusionMatrix::to_json() const {
  const size_t k = class_names_.size();
  nlohmann::json rows = nlohmann::json::array();
  for (size_t a = 0; a < k; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (size_t p = 0; p < k; ++p) row.push_back(counts_[a * k + p]);
    rows.push_back(row);
  }
  return {{"class_names", class_names_}, {"counts", rows}, {"accuracy", accuracy()}};
}

double TrainReport::final_validation_accuracy() const {
  return epochs.empty() ? 0.0 : epochs.back().validation_accuracy;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs)
    ep.push_back({{"train_loss", e.train_loss},
                  {"train_accuracy", e.train_accuracy},
                  {"validation_accuracy", e.validation_accuracy},
                  {"learning_rate", e.learning_rate}});
  return {{"epochs", ep},
          {"total_iterations", total_iterations},
          {"stop_reason", stop_reason},
          {"final_validation_accuracy", final_validation_accuracy()},
          {"validation_confusion", confusion.to_json()}};
}

std::string TrainReport::curve_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_accuracy,validation_accuracy,learning_rate\n";
  for (size_t i = 0; i < epochs.size(); ++i) {
    const auto& e = epochs[i];
    os << i + 1 << "," << e.train_loss << "," << e.train_accuracy << "," << e.validation_accuracy << ","
       << e.learning_rate << "\n";
  }
  return os.str();
}

int argmax_class(const Tensor& probabilities, Index item) {
  const Index k = probabilities.channels();
  int best = 0;
  for (Index c = 1; c < k; ++c)
    if (probabilities(item, c, 0, 0) > probabilities(item, best, 0, 0)) best = static_cast<int>(c);
  return best;
}

TrainReport train(Model& model, const LabeledSet& train_set, const LabeledSet& validation_set,
                  const TrainConfig& config) {
  check_arg(!train_set.items.empty(), "train: empty training split");
  check_arg(!validation_set.items.empty(), "train: empty validation split");
  check_arg(static_cast<Index>(train_set.class_names.size()) == model.config.num_classes,
            "train: dataset has " + std::to_string(train_set.class_names.size()) + " classes, model expects " +
                std::to_string(model.config.num_classes));

  NesterovOptimizer opt(config.learning_rate, config.momentum, config.weight_decay);
  PlateauDetector detector{-1.0, 0, config.patience, config.min_delta};
  const auto params = model.named_parameters();

  TrainReport report;
  report.stop_reason = "max_epochs";
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const BatchStream stream(train_set, config.batch_size, mix_seed(config.seed, static_cast<uint64_t>(epoch)),
                             model.config.input_scale);
    double loss_sum = 0.0;
    long long correct = 0, seen = 0;
    for (Index b = 0; b < stream.batch_count(); ++b) {
      const Batch batch = stream.get(b);
      const LossResult r = loss_and_gradients(model, batch.input, batch.labels);
      const Index n = batch.input.batch();
      loss_sum += r.loss * static_cast<double>(n);
      for (Index i = 0; i < n; ++i)
        if (argmax_class(r.probabilities, i) == batch.labels[static_cast<size_t>(i)]) ++correct;
      seen += n;
      opt.step(params);
      ++report.total_iterations;
    }

    const auto [val_accuracy, confusion] = evaluate(model, validation_set, config.batch_size);
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.validation_accuracy = val_accuracy;
    stats.learning_rate = opt.learning_rate();
    report.epochs.push_back(stats);
    report.confusion = confusion;
    if (config.verbose)
      std::cerr << "epoch " << epoch << ": loss " << stats.train_loss << ", train acc " << stats.train_accuracy
                << ", val acc " << val_accuracy << ", lr " << stats.learning_rate << "\n";

    const PlateauDecision decision = plateau_step(detector, val_accuracy, opt.decay_count());
    if (decision == PlateauDecision::DecayLr) {
      opt.decay_learning_rate();
    } else if (decision == PlateauDecision::Stop) {
      report.stop_reason = "plateau";
      break;
    }
  }
  return report;
}

std::pair<double, ConfusionMatrix> evaluate(const Model& model, const LabeledSet& set, Index batch_size) {
  check_arg(!set.items.empty(), "evaluate: empty set");
  ConfusionMatrix confusion(set.class_names);
  // Evaluation order does not affect the counts; any fixed seed keeps it deterministic.
  BatchStream stream(set, batch_size, 0, model.config.input_scale);
  for (Index b = 0; b < stream.batch_count(); ++b) {
    const Batch batch = stream.get(b);
    const Tensor logits = forward(model, batch.input);
    for (Index i = 0; i < batch.input.batch(); ++i)
      confusion.add(batch.labels[static_cast<size_t>(i)], argmax_class(logits, i));
  }
  return {confusion.accuracy(), confusion};
}

}  // namespace opforge
