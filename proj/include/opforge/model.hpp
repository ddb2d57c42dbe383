#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "opforge/image.hpp"
#include "opforge/nn.hpp"
#include "opforge/rng.hpp"
#include "opforge/tensor.hpp"

namespace opforge {

enum class HpfMode { Untrainable, Trainable, Random, NoHighPass };
enum class Expansion { On, Off, OnPlusPool };
enum class LastPool { Gap, MaxS2, AvgS2 };
enum class InputScale { Unit, Raw };

std::string to_string(HpfMode v);
std::string to_string(Expansion v);
std::string to_string(LastPool v);
std::string to_string(InputScale v);
std::string to_string(Activation v);
HpfMode hpf_mode_from_string(const std::string& s);
Expansion expansion_from_string(const std::string& s);
LastPool last_pool_from_string(const std::string& s);
InputScale input_scale_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

/// Every structural switch of the network: the defaults are the published
/// architecture, the other values are the ablation variants.
struct ArchitectureConfig {
  Index input_size = 256;
  Index num_classes = 12;
  Index base_width = 32;
  HpfMode hpf_mode = HpfMode::Untrainable;
  Expansion expansion = Expansion::On;
  LastPool last_pool = LastPool::Gap;
  Activation activation = Activation::Tanh;
  bool all_avg_pool = false;
  InputScale input_scale = InputScale::Unit;

  void validate() const;  // input_size must be a positive multiple of 32, num_classes >= 2
  nlohmann::json to_json() const;
  static ArchitectureConfig from_json(const nlohmann::json& j);
};

/// Filter bank weights [4,1,3,3]: four first-order adjacent-difference
/// kernels (right, below, down-right, down-left) for the fixed modes, a
/// gaussian draw for random, and center-tap identity kernels for
/// no_high_pass (which replicates the input plane into 4 channels).
Tensor make_hpf_bank(HpfMode mode, Rng& rng);

struct Model {
  ArchitectureConfig config;
  Parameter hpf_w, hpf_b;
  Parameter expand_w, expand_b;  // empty when expansion is off
  std::vector<Parameter> group_w, group_b;
  Parameter fc_w, fc_b;

  std::vector<std::pair<std::string, Parameter*>> named_parameters();
  std::vector<std::pair<std::string, const Parameter*>> named_parameters() const;
};

Model build_model(const ArchitectureConfig& config, Rng& rng);

struct LayerInfo {
  std::string name;
  std::array<Index, 4> output_shape;  // for batch size 1
  Index param_count;
};

/// Pure shape arithmetic for the configured layer stack.
std::vector<LayerInfo> shape_report(const ArchitectureConfig& config);
std::string format_shape_report(const ArchitectureConfig& config);

/// Inference pass; batch must be [N, 1, M, M] and already scaled per
/// config.input_scale.
Tensor forward(const Model& model, const Tensor& batch);

struct LossResult {
  double loss = 0.0;
  Tensor probabilities;  // [N, K, 1, 1]
};

/// Forward + backward; gradients are accumulated into each trainable
/// parameter's grad buffer (zeroed first). The untrainable filter bank
/// receives no gradient.
LossResult loss_and_gradients(Model& model, const Tensor& batch, const std::vector<int>& labels);

/// Argmax class (ties to the lowest index) plus the softmax vector.
std::pair<int, std::vector<double>> predict(const Model& model, const GrayImage& image);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace opforge
