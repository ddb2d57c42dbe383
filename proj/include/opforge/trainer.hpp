#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "opforge/dataset.hpp"
#include "opforge/model.hpp"

namespace opforge {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  Index batch_size = 64;
  int patience = 3;       // validation epochs without improvement before a decay
  double min_delta = 0.001;  // absolute accuracy improvement that resets the clock
  int max_epochs = 200;
  uint64_t seed = 1;
  bool verbose = false;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Sutskever-form Nesterov momentum with coupled L2 decay:
/// g' = g + wd*theta; v <- mu*v - lr*g'; theta <- theta + mu*v - lr*g'.
class NesterovOptimizer {
 public:
  NesterovOptimizer(double learning_rate, double momentum, double weight_decay);

  void step(const std::vector<std::pair<std::string, Parameter*>>& params);

  double learning_rate() const { return lr_; }
  void decay_learning_rate() {
    lr_ /= 10.0;
    ++decay_count_;
  }
  int decay_count() const { return decay_count_; }
  const Tensor& velocity(const std::string& name) const;

 private:
  double lr_, momentum_, weight_decay_;
  int decay_count_ = 0;
  std::vector<std::pair<std::string, Tensor>> velocity_;
};

struct PlateauDetector {
  double best = -1.0;
  int epochs_since_improvement = 0;
  int patience = 3;
  double min_delta = 0.001;
};

enum class PlateauDecision { Continue, DecayLr, Stop };

/// Decays after `patience` non-improving validation epochs; the fourth
/// would-be decay (decay_count already 3) stops training instead.
PlateauDecision plateau_step(PlateauDetector& detector, double validation_accuracy, int decay_count);

class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  void add(int actual, int predicted);
  long long at(int actual, int predicted) const;
  long long total() const;
  double accuracy() const;  // trace / total
  Index num_classes() const { return static_cast<Index>(class_names_.size()); }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::string to_csv() const;
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> class_names_;
  std::vector<long long> counts_;
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  long long total_iterations = 0;
  std::string stop_reason;       // "plateau" or "max_epochs"
  ConfusionMatrix confusion;     // final validation confusion

  double final_validation_accuracy() const;
  nlohmann::json to_json() const;
  std::string curve_csv() const;  // epoch, train_loss, train_accuracy, validation_accuracy, learning_rate
};

/// Argmax with ties to the lowest class index.
int argmax_class(const Tensor& probabilities, Index item);

TrainReport train(Model& model, const LabeledSet& train_set, const LabeledSet& validation_set,
                  const TrainConfig& config);

std::pair<double, ConfusionMatrix> evaluate(const Model& model, const LabeledSet& set, Index batch_size = 64);

}  // namespace opforge
