#include <algorithm>
#include <cmath>
#include <sstream>

#include "opforge/harness.hpp"

namespace opforge {
namespace {

Tensor random_tensor(Rng& rng, Index n, Index c, Index h, Index w, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

double dot(const Tensor& a, const Tensor& b) { return (a.array() * b.array()).sum(); }

constexpr double kEpsPrimitive = 1e-5;

double check_conv(Rng& rng, bool inject_bug) {
  const Index n = 1 + rng.uniform_int(2);
  const Index in_c = 1 + rng.uniform_int(3);
  const Index out_c = 1 + rng.uniform_int(4);
  const Index h = 4 + rng.uniform_int(5);
  const Index w = 4 + rng.uniform_int(5);
  const int stride = 1 + rng.uniform_int(2);
  const int pad = rng.uniform_int(2);
  const Tensor input = random_tensor(rng, n, in_c, h, w);
  const Parameter weights(random_tensor(rng, out_c, in_c, 3, 3));
  const Parameter bias(random_tensor(rng, out_c, 1, 1, 1));
  const Conv2d op = conv2d(input, weights, bias, stride, pad);
  const Tensor proj = random_tensor(rng, op.output.batch(), op.output.channels(), op.output.height(), op.output.width());
  Conv2d::Grads grads = op.backward(proj);
  if (inject_bug) grads.input.array() *= 2;

  double err = finite_diff_check(
      [&](const Tensor& x) { return dot(conv2d(x, weights, bias, stride, pad).output, proj); }, input, grads.input,
      kEpsPrimitive);
  err = std::max(err, finite_diff_check(
                          [&](const Tensor& x) {
                            return dot(conv2d(input, Parameter(x), bias, stride, pad).output, proj);
                          },
                          weights.value, grads.weights, kEpsPrimitive));
  err = std::max(err, finite_diff_check(
                          [&](const Tensor& x) {
                            return dot(conv2d(input, weights, Parameter(x), stride, pad).output, proj);
                          },
                          bias.value, grads.bias, kEpsPrimitive));
  return err;
}

double check_pool(Rng& rng, PoolKind kind) {
  const Index n = 1 + rng.uniform_int(2);
  const Index c = 1 + rng.uniform_int(3);
  const Index h = 4 + rng.uniform_int(5);
  const Index w = 4 + rng.uniform_int(5);
  const Tensor input = random_tensor(rng, n, c, h, w);
  const Pool2d op = pool2d(input, kind);
  const Tensor proj = random_tensor(rng, op.output.batch(), op.output.channels(), op.output.height(), op.output.width());
  return finite_diff_check([&](const Tensor& x) { return dot(pool2d(x, kind).output, proj); }, input,
                           op.backward(proj), kEpsPrimitive);
}

double check_gap(Rng& rng) {
  const Tensor input = random_tensor(rng, 1 + rng.uniform_int(2), 1 + rng.uniform_int(5), 3 + rng.uniform_int(4),
                                     3 + rng.uniform_int(4));
  const GlobalAvgPool op = global_avg_pool(input);
  const Tensor proj = random_tensor(rng, op.output.batch(), op.output.channels(), 1, 1);
  return finite_diff_check([&](const Tensor& x) { return dot(global_avg_pool(x).output, proj); }, input,
                           op.backward(proj), kEpsPrimitive);
}

double check_activation(Rng& rng, Activation kind) {
  Tensor input = random_tensor(rng, 1 + rng.uniform_int(2), 1 + rng.uniform_int(3), 4, 4, -2.0, 2.0);
  if (kind == Activation::Relu)  // keep the finite-difference step away from the kink at 0
    for (Index i = 0; i < input.size(); ++i)
      if (std::abs(static_cast<double>(input[i])) <= 1e-3) input[i] = input[i] < 0 ? Real(-0.01) : Real(0.01);
  const ActivationOp op = activation(input, kind);
  const Tensor proj = random_tensor(rng, input.batch(), input.channels(), input.height(), input.width());
  return finite_diff_check([&](const Tensor& x) { return dot(activation(x, kind).output, proj); }, input,
                           op.backward(proj), kEpsPrimitive);
}

double check_dense(Rng& rng) {
  const Index n = 1 + rng.uniform_int(3);
  const Index c = 2 + rng.uniform_int(15);
  const Index k = 2 + rng.uniform_int(11);
  const Tensor input = random_tensor(rng, n, c, 1, 1);
  const Parameter weights(random_tensor(rng, k, c, 1, 1));
  const Parameter bias(random_tensor(rng, k, 1, 1, 1));
  const Dense op = dense(input, weights, bias);
  const Tensor proj = random_tensor(rng, n, k, 1, 1);
  const Dense::Grads grads = op.backward(proj);

  double err = finite_diff_check([&](const Tensor& x) { return dot(dense(x, weights, bias).output, proj); }, input,
                                 grads.input, kEpsPrimitive);
  err = std::max(err, finite_diff_check([&](const Tensor& x) { return dot(dense(input, Parameter(x), bias).output, proj); },
                                        weights.value, grads.weights, kEpsPrimitive));
  err = std::max(err, finite_diff_check([&](const Tensor& x) { return dot(dense(input, weights, Parameter(x)).output, proj); },
                                        bias.value, grads.bias, kEpsPrimitive));
  return err;
}

double check_softmax(Rng& rng) {
  const Index n = 1 + rng.uniform_int(3);
  const Index k = 2 + rng.uniform_int(11);
  const Tensor logits = random_tensor(rng, n, k, 1, 1, -3.0, 3.0);
  std::vector<int> labels;
  for (Index i = 0; i < n; ++i) labels.push_back(rng.uniform_int(static_cast<int>(k)));
  const SoftmaxLoss sm = softmax_cross_entropy(logits, labels);
  return finite_diff_check([&](const Tensor& x) { return softmax_cross_entropy(x, labels).loss; }, logits,
                           sm.grad_logits, kEpsPrimitive);
}

double check_model(Rng& rng, int trial) {
  ArchitectureConfig cfg;
  cfg.input_size = 32;
  cfg.num_classes = 3;
  cfg.base_width = 2;
  // Average pooling keeps the loss smooth in every parameter. A central
  // difference across a max-pool argmax flip straddles a kink and measures a
  // one-sided slope, not a wrong gradient; max routing is covered by the
  // pool_max primitive row.
  cfg.all_avg_pool = true;
  cfg.last_pool = trial % 2 == 0 ? LastPool::Gap : LastPool::AvgS2;
  Model model = build_model(cfg, rng);
  // The training init shrinks signals layer by layer; for a conditioning-safe
  // check, rescale every learned tensor to unit layer gain so gradients at
  // depth sit far above the central-difference noise floor.
  for (auto& [name, p] : model.named_parameters()) {
    if (name.rfind("hpf.", 0) == 0) continue;  // the fixed residual bank is already O(1)
    const auto& s = p->value.shape();
    const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
    const double b = fan_in == 1 ? 0.1 : std::sqrt(3.0 / fan_in);
    for (Index i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<Real>(rng.uniform(-b, b));
  }
  const Tensor batch = random_tensor(rng, 2, 1, 32, 32, 0.0, 1.0);
  const std::vector<int> labels = {rng.uniform_int(3), rng.uniform_int(3)};

  std::vector<Parameter*> targets = {&model.expand_w, &model.group_w[0], &model.group_w[5], &model.fc_w};
  Parameter* target = targets[static_cast<size_t>(trial) % targets.size()];
  loss_and_gradients(model, batch, labels);
  const Tensor analytic = target->grad;

  // 20 coordinates, preferring ones whose gradient is large enough that the
  // finite-difference quotient itself is trustworthy at eps=1e-4.
  std::vector<Index> candidates;
  for (int i = 0; i < 60; ++i) candidates.push_back(rng.uniform_int(static_cast<int>(target->value.size())));
  std::sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
    return std::abs(static_cast<double>(analytic[a])) > std::abs(static_cast<double>(analytic[b]));
  });
  const std::vector<Index> coords(candidates.begin(), candidates.begin() + 20);

  const Tensor point = target->value;
  const auto f = [&](const Tensor& x) {
    target->value = x;
    const double loss = softmax_cross_entropy(forward(model, batch), labels).loss;
    target->value = point;
    return loss;
  };
  return finite_diff_check(f, point, analytic, 1e-4, coords);
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(uint64_t seed, int rounds, bool inject_bug) {
  check_arg(rounds >= 1, "gradcheck: rounds must be >= 1");
  struct Row {
    const char* name;
    double threshold;
    std::function<double(Rng&, int)> check;
  };
  const std::vector<Row> rows = {
      {"conv2d", 1e-6, [&](Rng& r, int) { return check_conv(r, inject_bug); }},
      {"pool_max", 1e-6, [](Rng& r, int) { return check_pool(r, PoolKind::Max); }},
      {"pool_avg", 1e-6, [](Rng& r, int) { return check_pool(r, PoolKind::Avg); }},
      {"global_avg_pool", 1e-6, [](Rng& r, int) { return check_gap(r); }},
      {"tanh", 1e-6, [](Rng& r, int) { return check_activation(r, Activation::Tanh); }},
      {"relu", 1e-6, [](Rng& r, int) { return check_activation(r, Activation::Relu); }},
      {"sigmoid", 1e-6, [](Rng& r, int) { return check_activation(r, Activation::Sigmoid); }},
      {"dense", 1e-6, [](Rng& r, int) { return check_dense(r); }},
      {"softmax_cross_entropy", 1e-6, [](Rng& r, int) { return check_softmax(r); }},
      {"composed_model", 1e-4, [](Rng& r, int t) { return check_model(r, t); }},
  };
  std::vector<GradCheckResult> results;
  for (const Row& row : rows) {
    GradCheckResult result;
    result.layer = row.name;
    result.seed = seed;
    for (int t = 0; t < rounds; ++t) {
      Rng rng(mix_seed(seed, static_cast<uint64_t>(t), fnv1a64(row.name)));
      result.max_rel_error = std::max(result.max_rel_error, row.check(rng, t));
    }
    result.pass = result.max_rel_error < row.threshold;
    results.push_back(result);
  }
  return results;
}

std::string format_gradcheck(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  os << "layer                  max_rel_error  result  (replay seed)\n";
  for (const auto& r : results) {
    os << r.layer;
    for (size_t i = r.layer.size(); i < 23; ++i) os << ' ';
    os.setf(std::ios::scientific);
    os.precision(3);
    os << r.max_rel_error << "  " << (r.pass ? "PASS" : "FAIL") << "    " << r.seed << "\n";
    os.unsetf(std::ios::scientific);
  }
  return os.str();
}

}  // namespace opforge
