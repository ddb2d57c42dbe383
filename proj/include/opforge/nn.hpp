#pragma once

#include <functional>
#include <vector>

#include "opforge/tensor.hpp"

namespace opforge {

enum class Activation { Tanh, Relu, Sigmoid };
enum class PoolKind { Max, Avg };

inline Index conv_out_dim(Index in, int k, int stride, int pad) {
  return (in + 2 * static_cast<Index>(pad) - static_cast<Index>(k)) / static_cast<Index>(stride) + 1;
}

/// Cross-correlation with zero padding plus per-output-channel bias.
/// Weights are [outC, inC, kH, kW], bias [outC,1,1,1].
struct Conv2d {
  Tensor output;

  struct Grads {
    Tensor input;
    Tensor weights;
    Tensor bias;
  };
  Grads backward(const Tensor& grad_output) const;

  Tensor saved_input;
  Tensor saved_weights;
  int stride = 1;
  int pad = 0;
};

Conv2d conv2d(const Tensor& input, const Parameter& weights, const Parameter& bias, int stride = 1, int pad = 0);

/// k x k pooling with windows clipped at the borders: padding cells never
/// enter the max or the average. Max routes gradient to the first
/// (lowest linear index) argmax cell of each window.
struct Pool2d {
  Tensor output;
  Tensor backward(const Tensor& grad_output) const;

  std::array<Index, 4> input_shape{};
  PoolKind kind = PoolKind::Max;
  std::vector<Index> argmax;        // max: linear input index per output cell
  std::vector<int> window_cells;    // avg: valid cell count per output cell
  int k = 3;
  int stride = 2;
  int pad = 1;
};

Pool2d pool2d(const Tensor& input, PoolKind kind, int k = 3, int stride = 2, int pad = 1);

/// Mean over each H x W plane; output is [N, C, 1, 1].
struct GlobalAvgPool {
  Tensor output;
  Tensor backward(const Tensor& grad_output) const;

  std::array<Index, 4> input_shape{};
};

GlobalAvgPool global_avg_pool(const Tensor& input);

/// Elementwise nonlinearity with the exact analytic derivative
/// (relu derivative at 0 is 0).
struct ActivationOp {
  Tensor output;
  Tensor backward(const Tensor& grad_output) const;

  Activation kind = Activation::Tanh;
  Tensor saved;  // tanh/sigmoid: output; relu: input
};

ActivationOp activation(const Tensor& input, Activation kind);

/// Fully connected layer on [N, C, 1, 1] features: logits = W x + b.
/// Weights are [K, C, 1, 1], bias [K,1,1,1], output [N, K, 1, 1].
struct Dense {
  Tensor output;

  struct Grads {
    Tensor input;
    Tensor weights;
    Tensor bias;
  };
  Grads backward(const Tensor& grad_output) const;

  Tensor saved_input;
  Tensor saved_weights;
};

Dense dense(const Tensor& input, const Parameter& weights, const Parameter& bias);

/// Mean negative log-likelihood under softmax, stabilized by max
/// subtraction. grad_logits is (softmax - onehot) / N.
struct SoftmaxLoss {
  double loss = 0.0;
  Tensor grad_logits;
  Tensor probabilities;
};

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Max over coordinates of |analytic - central difference| /
/// max(|analytic|, |central|, 1e-12). Rejects non-finite function values.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                         const Tensor& analytic_grad, double eps);

/// Same check restricted to an explicit coordinate subset (for expensive f).
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                         const Tensor& analytic_grad, double eps, const std::vector<Index>& coords);

}  // namespace opforge
