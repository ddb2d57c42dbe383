#include "opforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

namespace opforge {
namespace {

// The published init is N(0, 0.01) on the variance reading: stddev 0.1.
constexpr Real kWeightStddev = static_cast<Real>(0.1);

Index pool_out(Index h) { return conv_out_dim(h, 3, 2, 1); }

template <typename T>
std::string enum_to_string(T v, const std::vector<std::pair<T, std::string>>& table, const char* what) {
  for (const auto& [e, s] : table)
    if (e == v) return s;
  throw std::invalid_argument(std::string("unknown ") + what + " enum value");
}

template <typename T>
T enum_from_string(const std::string& s, const std::vector<std::pair<T, std::string>>& table, const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw std::invalid_argument(std::string("unknown ") + what + ": " + s);
}

const std::vector<std::pair<HpfMode, std::string>>& hpf_table() {
  static const std::vector<std::pair<HpfMode, std::string>> t = {{HpfMode::Untrainable, "untrainable"},
                                                                 {HpfMode::Trainable, "trainable"},
                                                                 {HpfMode::Random, "random"},
                                                                 {HpfMode::NoHighPass, "no_high_pass"}};
  return t;
}
const std::vector<std::pair<Expansion, std::string>>& expansion_table() {
  static const std::vector<std::pair<Expansion, std::string>> t = {
      {Expansion::On, "on"}, {Expansion::Off, "off"}, {Expansion::OnPlusPool, "on_plus_pool"}};
  return t;
}
const std::vector<std::pair<LastPool, std::string>>& last_pool_table() {
  static const std::vector<std::pair<LastPool, std::string>> t = {
      {LastPool::Gap, "gap"}, {LastPool::MaxS2, "max_s2"}, {LastPool::AvgS2, "avg_s2"}};
  return t;
}
const std::vector<std::pair<InputScale, std::string>>& input_scale_table() {
  static const std::vector<std::pair<InputScale, std::string>> t = {{InputScale::Unit, "unit"},
                                                                    {InputScale::Raw, "raw"}};
  return t;
}
const std::vector<std::pair<Activation, std::string>>& activation_table() {
  static const std::vector<std::pair<Activation, std::string>> t = {
      {Activation::Tanh, "tanh"}, {Activation::Relu, "relu"}, {Activation::Sigmoid, "sigmoid"}};
  return t;
}

struct Trace {
  Conv2d hpf;
  bool has_expand = false;
  Conv2d expand;
  ActivationOp expand_act;
  bool has_expand_pool = false;
  Pool2d expand_pool;
  std::array<Conv2d, 6> convs;
  std::array<ActivationOp, 6> acts;
  std::array<bool, 6> has_pool{};
  std::array<Pool2d, 6> pools;
  bool has_gap = false;
  GlobalAvgPool gap;
  bool has_flatten = false;
  std::array<Index, 4> pre_flatten_shape{};
  Dense fc;
};

Tensor run_forward(const Model& m, const Tensor& batch, Trace& t) {
  const auto& cfg = m.config;
  check_arg(batch.channels() == 1 && batch.height() == cfg.input_size && batch.width() == cfg.input_size,
            "forward: batch shape " + batch.shape_string() + " does not match input size " +
                std::to_string(cfg.input_size));
  check_arg(batch.batch() >= 1, "forward: empty batch");
  const PoolKind main_pool = cfg.all_avg_pool ? PoolKind::Avg : PoolKind::Max;

  t.hpf = conv2d(batch, m.hpf_w, m.hpf_b, 1, 1);
  Tensor x = t.hpf.output;
  if (cfg.expansion != Expansion::Off) {
    t.has_expand = true;
    t.expand = conv2d(x, m.expand_w, m.expand_b, 1, 1);
    t.expand_act = activation(t.expand.output, cfg.activation);
    x = t.expand_act.output;
    if (cfg.expansion == Expansion::OnPlusPool) {
      t.has_expand_pool = true;
      t.expand_pool = pool2d(x, main_pool);
      x = t.expand_pool.output;
    }
  }
  for (int g = 0; g < 6; ++g) {
    t.convs[static_cast<size_t>(g)] = conv2d(x, m.group_w[static_cast<size_t>(g)], m.group_b[static_cast<size_t>(g)], 1, 1);
    t.acts[static_cast<size_t>(g)] = activation(t.convs[static_cast<size_t>(g)].output, cfg.activation);
    x = t.acts[static_cast<size_t>(g)].output;
    if (g < 5) {
      t.has_pool[static_cast<size_t>(g)] = true;
      t.pools[static_cast<size_t>(g)] = pool2d(x, main_pool);
      x = t.pools[static_cast<size_t>(g)].output;
    }
  }
  switch (cfg.last_pool) {
    case LastPool::Gap:
      t.has_gap = true;
      t.gap = global_avg_pool(x);
      x = t.gap.output;
      break;
    case LastPool::MaxS2:
      t.has_pool[5] = true;
      t.pools[5] = pool2d(x, main_pool);
      x = t.pools[5].output;
      break;
    case LastPool::AvgS2:
      t.has_pool[5] = true;
      t.pools[5] = pool2d(x, PoolKind::Avg);
      x = t.pools[5].output;
      break;
  }
  if (x.height() != 1 || x.width() != 1) {
    t.has_flatten = true;
    t.pre_flatten_shape = x.shape();
    x = x.reshaped(x.batch(), x.channels() * x.height() * x.width(), 1, 1);
  }
  t.fc = dense(x, m.fc_w, m.fc_b);
  return t.fc.output;
}

void accumulate(Parameter& p, const Tensor& g) {
  if (p.trainable) p.grad.array() += g.array();
}

void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  write_bytes(os, b, 4);
}

void write_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  write_bytes(os, b, 8);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 | static_cast<uint32_t>(b[2]) << 16 |
         static_cast<uint32_t>(b[3]) << 24;
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

std::string to_string(HpfMode v) { return enum_to_string(v, hpf_table(), "hpf_mode"); }
std::string to_string(Expansion v) { return enum_to_string(v, expansion_table(), "expansion"); }
std::string to_string(LastPool v) { return enum_to_string(v, last_pool_table(), "last_pool"); }
std::string to_string(InputScale v) { return enum_to_string(v, input_scale_table(), "input_scale"); }
std::string to_string(Activation v) { return enum_to_string(v, activation_table(), "activation"); }
HpfMode hpf_mode_from_string(const std::string& s) { return enum_from_string(s, hpf_table(), "hpf_mode"); }
Expansion expansion_from_string(const std::string& s) { return enum_from_string(s, expansion_table(), "expansion"); }
LastPool last_pool_from_string(const std::string& s) { return enum_from_string(s, last_pool_table(), "last_pool"); }
InputScale input_scale_from_string(const std::string& s) {
  return enum_from_string(s, input_scale_table(), "input_scale");
}
Activation activation_from_string(const std::string& s) {
  return enum_from_string(s, activation_table(), "activation");
}

void ArchitectureConfig::validate() const {
  check_arg(input_size > 0 && input_size % 32 == 0,
            "architecture: input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  check_arg(num_classes >= 2, "architecture: num_classes must be >= 2");
  check_arg(base_width >= 1, "architecture: base_width must be >= 1");
}

nlohmann::json ArchitectureConfig::to_json() const {
  return {{"input_size", input_size},     {"num_classes", num_classes},
          {"base_width", base_width},     {"hpf_mode", to_string(hpf_mode)},
          {"expansion", to_string(expansion)}, {"last_pool", to_string(last_pool)},
          {"activation", to_string(activation)}, {"all_avg_pool", all_avg_pool},
          {"input_scale", to_string(input_scale)}};
}

ArchitectureConfig ArchitectureConfig::from_json(const nlohmann::json& j) {
  ArchitectureConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.base_width = j.value("base_width", c.base_width);
  if (j.contains("hpf_mode")) c.hpf_mode = hpf_mode_from_string(j.at("hpf_mode").get<std::string>());
  if (j.contains("expansion")) c.expansion = expansion_from_string(j.at("expansion").get<std::string>());
  if (j.contains("last_pool")) c.last_pool = last_pool_from_string(j.at("last_pool").get<std::string>());
  if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.all_avg_pool = j.value("all_avg_pool", c.all_avg_pool);
  if (j.contains("input_scale")) c.input_scale = input_scale_from_string(j.at("input_scale").get<std::string>());
  c.validate();
  return c;
}

Tensor make_hpf_bank(HpfMode mode, Rng& rng) {
  if (mode == HpfMode::Random) return Tensor::gaussian(4, 1, 3, 3, kWeightStddev, rng);
  Tensor bank(4, 1, 3, 3);
  if (mode == HpfMode::NoHighPass) {
    for (Index f = 0; f < 4; ++f) bank(f, 0, 1, 1) = 1;  // identity taps: replicate the input plane
    return bank;
  }
  // First-order differences toward right, below, down-right, down-left.
  const Index dy[4] = {0, 1, 1, 1};
  const Index dx[4] = {1, 0, 1, -1};
  for (Index f = 0; f < 4; ++f) {
    bank(f, 0, 1, 1) = -1;
    bank(f, 0, 1 + dy[f], 1 + dx[f]) = 1;
  }
  return bank;
}

std::vector<std::pair<std::string, Parameter*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  out.emplace_back("hpf.weight", &hpf_w);
  out.emplace_back("hpf.bias", &hpf_b);
  if (config.expansion != Expansion::Off) {
    out.emplace_back("expand.weight", &expand_w);
    out.emplace_back("expand.bias", &expand_b);
  }
  for (size_t g = 0; g < group_w.size(); ++g) {
    const std::string base = "group" + std::to_string(g + 1);
    out.emplace_back(base + ".weight", &group_w[g]);
    out.emplace_back(base + ".bias", &group_b[g]);
  }
  out.emplace_back("fc.weight", &fc_w);
  out.emplace_back("fc.bias", &fc_b);
  return out;
}

std::vector<std::pair<std::string, const Parameter*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Parameter*>> out;
  for (auto& [name, p] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, p);
  return out;
}

Model build_model(const ArchitectureConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config = config;
  const bool hpf_trainable = config.hpf_mode == HpfMode::Trainable || config.hpf_mode == HpfMode::Random;
  m.hpf_w = Parameter(make_hpf_bank(config.hpf_mode, rng), hpf_trainable);
  m.hpf_b = Parameter(Tensor::zeros(4, 1, 1, 1), hpf_trainable);

  Index ch = 4;
  if (config.expansion != Expansion::Off) {
    m.expand_w = Parameter(Tensor::gaussian(config.base_width, ch, 3, 3, kWeightStddev, rng));
    m.expand_b = Parameter(Tensor::zeros(config.base_width, 1, 1, 1));
    ch = config.base_width;
  }
  for (int g = 0; g < 6; ++g) {
    const Index out = ch * 2;
    m.group_w.emplace_back(Tensor::gaussian(out, ch, 3, 3, kWeightStddev, rng));
    m.group_b.emplace_back(Tensor::zeros(out, 1, 1, 1));
    ch = out;
  }

  Index sp = config.input_size;
  if (config.expansion == Expansion::OnPlusPool) sp = pool_out(sp);
  for (int g = 0; g < 5; ++g) sp = pool_out(sp);
  Index fc_in = ch;
  if (config.last_pool != LastPool::Gap) {
    sp = pool_out(sp);
    fc_in = ch * sp * sp;
  }
  m.fc_w = Parameter(Tensor::gaussian(config.num_classes, fc_in, 1, 1, kWeightStddev, rng));
  m.fc_b = Parameter(Tensor::zeros(config.num_classes, 1, 1, 1));
  return m;
}

std::vector<LayerInfo> shape_report(const ArchitectureConfig& config) {
  config.validate();
  std::vector<LayerInfo> report;
  Index ch = 1, sp = config.input_size;
  report.push_back({"input", {1, ch, sp, sp}, 0});
  ch = 4;
  report.push_back({"hpf", {1, ch, sp, sp}, 4 * 1 * 9 + 4});
  if (config.expansion != Expansion::Off) {
    const Index out = config.base_width;
    report.push_back({"expand", {1, out, sp, sp}, out * ch * 9 + out});
    ch = out;
    if (config.expansion == Expansion::OnPlusPool) {
      sp = pool_out(sp);
      report.push_back({"expand_pool", {1, ch, sp, sp}, 0});
    }
  }
  for (int g = 1; g <= 6; ++g) {
    const Index out = ch * 2;
    const std::string base = "group" + std::to_string(g);
    report.push_back({base + "_conv", {1, out, sp, sp}, out * ch * 9 + out});
    ch = out;
    if (g <= 5) {
      sp = pool_out(sp);
      report.push_back({base + "_pool", {1, ch, sp, sp}, 0});
    }
  }
  Index fc_in = ch;
  if (config.last_pool == LastPool::Gap) {
    report.push_back({"gap", {1, ch, 1, 1}, 0});
  } else {
    sp = pool_out(sp);
    report.push_back({config.last_pool == LastPool::MaxS2 ? "last_max_s2" : "last_avg_s2", {1, ch, sp, sp}, 0});
    fc_in = ch * sp * sp;
    if (sp != 1) report.push_back({"flatten", {1, fc_in, 1, 1}, 0});
  }
  report.push_back({"fc", {1, config.num_classes, 1, 1}, config.num_classes * fc_in + config.num_classes});
  return report;
}

std::string format_shape_report(const ArchitectureConfig& config) {
  std::ostringstream os;
  os << "layer            output shape       params\n";
  long long total = 0;
  for (const auto& info : shape_report(config)) {
    os << info.name;
    for (size_t i = info.name.size(); i < 17; ++i) os << ' ';
    const std::string shape = Tensor::shape_to_string(info.output_shape);
    os << shape;
    for (size_t i = shape.size(); i < 19; ++i) os << ' ';
    os << info.param_count << "\n";
    total += info.param_count;
  }
  os << "total parameters: " << total << "\n";
  return os.str();
}

Tensor forward(const Model& model, const Tensor& batch) {
  Trace t;
  return run_forward(model, batch, t);
}

LossResult loss_and_gradients(Model& model, const Tensor& batch, const std::vector<int>& labels) {
  for (auto& [name, p] : model.named_parameters()) {
    (void)name;
    p->zero_grad();
  }
  Trace t;
  const Tensor logits = run_forward(model, batch, t);
  const SoftmaxLoss sm = softmax_cross_entropy(logits, labels);

  const Dense::Grads fc_g = t.fc.backward(sm.grad_logits);
  accumulate(model.fc_w, fc_g.weights);
  accumulate(model.fc_b, fc_g.bias);
  Tensor g = fc_g.input;
  if (t.has_flatten)
    g = g.reshaped(t.pre_flatten_shape[0], t.pre_flatten_shape[1], t.pre_flatten_shape[2], t.pre_flatten_shape[3]);
  if (t.has_gap) g = t.gap.backward(g);
  for (int gi = 5; gi >= 0; --gi) {
    const auto i = static_cast<size_t>(gi);
    if (t.has_pool[i]) g = t.pools[i].backward(g);
    g = t.acts[i].backward(g);
    const Conv2d::Grads cg = t.convs[i].backward(g);
    accumulate(model.group_w[i], cg.weights);
    accumulate(model.group_b[i], cg.bias);
    g = cg.input;
  }
  if (t.has_expand_pool) g = t.expand_pool.backward(g);
  if (t.has_expand) {
    g = t.expand_act.backward(g);
    const Conv2d::Grads eg = t.expand.backward(g);
    accumulate(model.expand_w, eg.weights);
    accumulate(model.expand_b, eg.bias);
    g = eg.input;
  }
  if (model.hpf_w.trainable) {
    const Conv2d::Grads hg = t.hpf.backward(g);
    accumulate(model.hpf_w, hg.weights);
    accumulate(model.hpf_b, hg.bias);
  }
  return {sm.loss, sm.probabilities};
}

std::pair<int, std::vector<double>> predict(const Model& model, const GrayImage& image) {
  const Index m = model.config.input_size;
  check_arg(image.width == m && image.height == m,
            "predict: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                ", model expects " + std::to_string(m) + "x" + std::to_string(m));
  Tensor batch(1, 1, m, m);
  const Real scale = model.config.input_scale == InputScale::Unit ? static_cast<Real>(1.0 / 255.0) : 1;
  for (Index i = 0; i < batch.size(); ++i) batch[i] = scale * static_cast<Real>(image.pixels[static_cast<size_t>(i)]);
  const Tensor logits = forward(model, batch);

  const Index k = logits.channels();
  double max_logit = logits[0];
  for (Index i = 1; i < k; ++i) max_logit = std::max(max_logit, static_cast<double>(logits[i]));
  std::vector<double> probs(static_cast<size_t>(k));
  double total = 0.0;
  for (Index i = 0; i < k; ++i) {
    probs[static_cast<size_t>(i)] = std::exp(static_cast<double>(logits[i]) - max_logit);
    total += probs[static_cast<size_t>(i)];
  }
  int best = 0;
  for (Index i = 0; i < k; ++i) {
    probs[static_cast<size_t>(i)] /= total;
    if (probs[static_cast<size_t>(i)] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return {best, probs};
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("OFCNN1", 6);
  const auto params = model.named_parameters();
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    write_bytes(os, name.data(), name.size());
    for (Index d : p->value.shape()) write_u32(os, static_cast<uint32_t>(d));
    for (Index i = 0; i < p->value.size(); ++i) write_f64(os, static_cast<double>(p->value[i]));
  }
  const std::string cfg = model.config.to_json().dump();
  write_u32(os, static_cast<uint32_t>(cfg.size()));
  write_bytes(os, cfg.data(), cfg.size());
  if (!os) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[6];
  is.read(magic, 6);
  if (!is || std::string(magic, 6) != "OFCNN1") throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t count = read_u32(is);
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::array<Index, 4> shape{};
    for (auto& d : shape) d = static_cast<Index>(read_u32(is));
    Tensor value(shape[0], shape[1], shape[2], shape[3]);
    for (Index i = 0; i < value.size(); ++i) value[i] = static_cast<Real>(read_f64(is));
    tensors.emplace_back(std::move(name), std::move(value));
  }
  const uint32_t cfg_len = read_u32(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), cfg_len);
  if (!is) throw std::runtime_error("checkpoint: truncated config in " + path);

  Rng rng(0);
  Model model = build_model(ArchitectureConfig::from_json(nlohmann::json::parse(cfg)), rng);
  auto params = model.named_parameters();
  if (params.size() != tensors.size())
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                             std::to_string(tensors.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    auto& [saved_name, value] = tensors[i];
    if (name != saved_name) throw std::runtime_error("checkpoint: tensor " + saved_name + " where " + name + " expected");
    if (!(value.shape() == p->value.shape()))
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": " + value.shape_string() + " vs " +
                               p->value.shape_string());
    p->value = std::move(value);
  }
  return model;
}

}  // namespace opforge
