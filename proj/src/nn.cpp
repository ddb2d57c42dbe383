#include "opforge/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace opforge {

namespace {

using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixC = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// col(r, q) with r = (ic, kh, kw) and q = (oh, ow); zero where the tap
// falls outside the input.
void im2col(const Tensor& in, Index n, int kh, int kw, int stride, int pad, Index oh, Index ow, MatrixR& col) {
  const Index ic_count = in.channels(), h = in.height(), w = in.width();
  for (Index ic = 0; ic < ic_count; ++ic) {
    for (int dh = 0; dh < kh; ++dh) {
      for (int dw = 0; dw < kw; ++dw) {
        const Index r = (ic * kh + dh) * kw + dw;
        Real* dst = col.data() + r * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index ih = y * stride - pad + dh;
          if (ih < 0 || ih >= h) {
            for (Index x = 0; x < ow; ++x) dst[y * ow + x] = Real(0);
            continue;
          }
          const Real* src = in.data() + ((n * ic_count + ic) * h + ih) * w;
          for (Index x = 0; x < ow; ++x) {
            const Index iw = x * stride - pad + dw;
            dst[y * ow + x] = (iw >= 0 && iw < w) ? src[iw] : Real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const MatrixR& col, Tensor& din, Index n, int kh, int kw, int stride, int pad, Index oh, Index ow) {
  const Index ic_count = din.channels(), h = din.height(), w = din.width();
  for (Index ic = 0; ic < ic_count; ++ic) {
    for (int dh = 0; dh < kh; ++dh) {
      for (int dw = 0; dw < kw; ++dw) {
        const Index r = (ic * kh + dh) * kw + dw;
        const Real* src = col.data() + r * oh * ow;
        for (Index y = 0; y < oh; ++y) {
          const Index ih = y * stride - pad + dh;
          if (ih < 0 || ih >= h) continue;
          Real* dst = din.data() + ((n * ic_count + ic) * h + ih) * w;
          for (Index x = 0; x < ow; ++x) {
            const Index iw = x * stride - pad + dw;
            if (iw >= 0 && iw < w) dst[iw] += src[y * ow + x];
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d conv2d(const Tensor& input, const Parameter& weights, const Parameter& bias, int stride, int pad) {
  const Tensor& wv = weights.value;
  check_arg(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  check_arg(pad >= 0, "conv2d: pad must be >= 0, got " + std::to_string(pad));
  check_arg(input.channels() == wv.channels(),
            "conv2d: input channels != weight channels [input " + input.shape_string() + ", weights " + wv.shape_string() + "]");
  check_arg(bias.value.size() == wv.batch(),
            "conv2d: bias size " + std::to_string(bias.value.size()) + " != output channels " + std::to_string(wv.batch()));
  const Index oc = wv.batch();
  const int kh = static_cast<int>(wv.height()), kw = static_cast<int>(wv.width());
  const Index oh = conv_out_dim(input.height(), kh, stride, pad);
  const Index ow = conv_out_dim(input.width(), kw, stride, pad);
  check_arg(oh >= 1 && ow >= 1,
            "conv2d: non-positive output dims for input " + input.shape_string() + " with kernel " + wv.shape_string() +
                ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));

  Conv2d op;
  op.saved_input = input;
  op.saved_weights = wv;
  op.stride = stride;
  op.pad = pad;
  op.output = Tensor(input.batch(), oc, oh, ow);

  const Index ick = wv.channels() * kh * kw;
  Eigen::Map<const MatrixR> wmat(wv.data(), oc, ick);
  Eigen::Map<const VectorR> bvec(bias.value.data(), oc);
  MatrixR col(ick, oh * ow);
  for (Index n = 0; n < input.batch(); ++n) {
    im2col(input, n, kh, kw, stride, pad, oh, ow, col);
    Eigen::Map<MatrixR> outm(op.output.data() + n * oc * oh * ow, oc, oh * ow);
    outm.noalias() = wmat * col;
    outm.colwise() += bvec;
  }
  return op;
}

Conv2d::Grads Conv2d::backward(const Tensor& grad_output) const {
  const Tensor& in = saved_input;
  const Tensor& wv = saved_weights;
  const Index oc = wv.batch();
  const int kh = static_cast<int>(wv.height()), kw = static_cast<int>(wv.width());
  const Index oh = grad_output.height(), ow = grad_output.width();
  check_arg(grad_output.batch() == in.batch() && grad_output.channels() == oc,
            "conv2d backward: gradient shape " + grad_output.shape_string() + " does not match output");

  Grads g;
  g.input = Tensor(in.batch(), in.channels(), in.height(), in.width());
  g.weights = Tensor(wv.batch(), wv.channels(), wv.height(), wv.width());
  g.bias = Tensor(oc, 1, 1, 1);

  const Index ick = wv.channels() * kh * kw;
  Eigen::Map<const MatrixR> wmat(wv.data(), oc, ick);
  Eigen::Map<MatrixR> dwmat(g.weights.data(), oc, ick);
  Eigen::Map<VectorR> dbias(g.bias.data(), oc);
  MatrixR col(ick, oh * ow);
  MatrixR dcol(ick, oh * ow);
  for (Index n = 0; n < in.batch(); ++n) {
    Eigen::Map<const MatrixR> dout(grad_output.data() + n * oc * oh * ow, oc, oh * ow);
    im2col(in, n, kh, kw, stride, pad, oh, ow, col);
    dwmat.noalias() += dout * col.transpose();
    dbias += dout.rowwise().sum();
    dcol.noalias() = wmat.transpose() * dout;
    col2im_add(dcol, g.input, n, kh, kw, stride, pad, oh, ow);
  }
  return g;
}

Pool2d pool2d(const Tensor& input, PoolKind kind, int k, int stride, int pad) {
  check_arg(k >= 1 && stride >= 1 && pad >= 0, "pool2d: invalid window parameters");
  const Index oh = conv_out_dim(input.height(), k, stride, pad);
  const Index ow = conv_out_dim(input.width(), k, stride, pad);
  check_arg(oh >= 1 && ow >= 1, "pool2d: non-positive output dims for input " + input.shape_string());

  Pool2d op;
  op.input_shape = input.shape();
  op.kind = kind;
  op.k = k;
  op.stride = stride;
  op.pad = pad;
  op.output = Tensor(input.batch(), input.channels(), oh, ow);
  if (kind == PoolKind::Max)
    op.argmax.assign(static_cast<std::size_t>(op.output.size()), -1);
  else
    op.window_cells.assign(static_cast<std::size_t>(op.output.size()), 0);

  const Index h = input.height(), w = input.width();
  Index out_idx = 0;
  for (Index n = 0; n < input.batch(); ++n) {
    for (Index c = 0; c < input.channels(); ++c) {
      const Real* plane = input.data() + (n * input.channels() + c) * h * w;
      const Index plane_base = (n * input.channels() + c) * h * w;
      for (Index y = 0; y < oh; ++y) {
        const Index h0 = std::max<Index>(0, y * stride - pad);
        const Index h1 = std::min<Index>(h - 1, y * stride - pad + k - 1);
        for (Index x = 0; x < ow; ++x, ++out_idx) {
          const Index w0 = std::max<Index>(0, x * stride - pad);
          const Index w1 = std::min<Index>(w - 1, x * stride - pad + k - 1);
          if (kind == PoolKind::Max) {
            Real best = -std::numeric_limits<Real>::infinity();
            Index best_at = -1;
            for (Index ih = h0; ih <= h1; ++ih)
              for (Index iw = w0; iw <= w1; ++iw) {
                const Real v = plane[ih * w + iw];
                if (v > best) {
                  best = v;
                  best_at = plane_base + ih * w + iw;
                }
              }
            op.output[out_idx] = best;
            op.argmax[static_cast<std::size_t>(out_idx)] = best_at;
          } else {
            Real sum = 0;
            for (Index ih = h0; ih <= h1; ++ih)
              for (Index iw = w0; iw <= w1; ++iw) sum += plane[ih * w + iw];
            const int cells = static_cast<int>((h1 - h0 + 1) * (w1 - w0 + 1));
            op.output[out_idx] = sum / static_cast<Real>(cells);
            op.window_cells[static_cast<std::size_t>(out_idx)] = cells;
          }
        }
      }
    }
  }
  return op;
}

Tensor Pool2d::backward(const Tensor& grad_output) const {
  check_arg(grad_output.shape() == output.shape(),
            "pool2d backward: gradient shape " + grad_output.shape_string() + " does not match output " + output.shape_string());
  Tensor din(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
  const Index h = input_shape[2], w = input_shape[3];
  const Index oh = output.height(), ow = output.width();
  Index out_idx = 0;
  for (Index n = 0; n < input_shape[0]; ++n) {
    for (Index c = 0; c < input_shape[1]; ++c) {
      const Index plane_base = (n * input_shape[1] + c) * h * w;
      for (Index y = 0; y < oh; ++y) {
        const Index h0 = std::max<Index>(0, y * stride - pad);
        const Index h1 = std::min<Index>(h - 1, y * stride - pad + k - 1);
        for (Index x = 0; x < ow; ++x, ++out_idx) {
          const Real go = grad_output[out_idx];
          if (kind == PoolKind::Max) {
            din[argmax[static_cast<std::size_t>(out_idx)]] += go;
          } else {
            const Index w0 = std::max<Index>(0, x * stride - pad);
            const Index w1 = std::min<Index>(w - 1, x * stride - pad + k - 1);
            const Real share = go / static_cast<Real>(window_cells[static_cast<std::size_t>(out_idx)]);
            for (Index ih = h0; ih <= h1; ++ih)
              for (Index iw = w0; iw <= w1; ++iw) din[plane_base + ih * w + iw] += share;
          }
        }
      }
    }
  }
  return din;
}

GlobalAvgPool global_avg_pool(const Tensor& input) {
  check_arg(input.height() >= 1 && input.width() >= 1, "global_avg_pool: empty plane in " + input.shape_string());
  GlobalAvgPool op;
  op.input_shape = input.shape();
  op.output = Tensor(input.batch(), input.channels(), 1, 1);
  const Index plane = input.height() * input.width();
  for (Index p = 0; p < input.batch() * input.channels(); ++p) {
    const Real* src = input.data() + p * plane;
    Real sum = 0;
    for (Index i = 0; i < plane; ++i) sum += src[i];
    op.output[p] = sum / static_cast<Real>(plane);
  }
  return op;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_output) const {
  check_arg(grad_output.shape() == output.shape(), "global_avg_pool backward: bad gradient shape " + grad_output.shape_string());
  Tensor din(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
  const Index plane = input_shape[2] * input_shape[3];
  for (Index p = 0; p < input_shape[0] * input_shape[1]; ++p) {
    const Real share = grad_output[p] / static_cast<Real>(plane);
    Real* dst = din.data() + p * plane;
    for (Index i = 0; i < plane; ++i) dst[i] = share;
  }
  return din;
}

ActivationOp activation(const Tensor& input, Activation kind) {
  ActivationOp op;
  op.kind = kind;
  const auto& s = input.shape();
  op.output = Tensor(s[0], s[1], s[2], s[3]);
  switch (kind) {
    case Activation::Tanh:
      op.output.array() = input.array().tanh();
      op.saved = op.output;
      break;
    case Activation::Relu:
      op.output.array() = input.array().max(Real(0));
      op.saved = input;
      break;
    case Activation::Sigmoid:
      op.output.array() = Real(1) / (Real(1) + (-input.array()).exp());
      op.saved = op.output;
      break;
  }
  return op;
}

Tensor ActivationOp::backward(const Tensor& grad_output) const {
  check_arg(grad_output.shape() == output.shape(), "activation backward: bad gradient shape " + grad_output.shape_string());
  const auto& s = output.shape();
  Tensor din(s[0], s[1], s[2], s[3]);
  switch (kind) {
    case Activation::Tanh:
      din.array() = grad_output.array() * (Real(1) - saved.array().square());
      break;
    case Activation::Relu:
      din.array() = grad_output.array() * (saved.array() > Real(0)).template cast<Real>();
      break;
    case Activation::Sigmoid:
      din.array() = grad_output.array() * saved.array() * (Real(1) - saved.array());
      break;
  }
  return din;
}

Dense dense(const Tensor& input, const Parameter& weights, const Parameter& bias) {
  check_arg(input.height() == 1 && input.width() == 1,
            "dense: input spatial dims must be 1x1, got " + input.shape_string());
  const Tensor& wv = weights.value;
  check_arg(wv.channels() == input.channels(),
            "dense: weight columns != input features [input " + input.shape_string() + ", weights " + wv.shape_string() + "]");
  const Index kk = wv.batch(), c = input.channels(), n = input.batch();
  check_arg(bias.value.size() == kk, "dense: bias size " + std::to_string(bias.value.size()) + " != classes " + std::to_string(kk));

  Dense op;
  op.saved_input = input;
  op.saved_weights = wv;
  op.output = Tensor(n, kk, 1, 1);
  Eigen::Map<const MatrixC> x(input.data(), c, n);
  Eigen::Map<const MatrixR> w(wv.data(), kk, c);
  Eigen::Map<const VectorR> b(bias.value.data(), kk);
  Eigen::Map<MatrixC> logits(op.output.data(), kk, n);
  logits.noalias() = w * x;
  logits.colwise() += b;
  return op;
}

Dense::Grads Dense::backward(const Tensor& grad_output) const {
  const Index kk = saved_weights.batch(), c = saved_weights.channels(), n = saved_input.batch();
  check_arg(grad_output.batch() == n && grad_output.channels() == kk,
            "dense backward: gradient shape " + grad_output.shape_string() + " does not match logits");
  Grads g;
  g.input = Tensor(n, c, 1, 1);
  g.weights = Tensor(kk, c, 1, 1);
  g.bias = Tensor(kk, 1, 1, 1);
  Eigen::Map<const MatrixC> dl(grad_output.data(), kk, n);
  Eigen::Map<const MatrixC> x(saved_input.data(), c, n);
  Eigen::Map<const MatrixR> w(saved_weights.data(), kk, c);
  Eigen::Map<MatrixC> dx(g.input.data(), c, n);
  Eigen::Map<MatrixR> dw(g.weights.data(), kk, c);
  Eigen::Map<VectorR> db(g.bias.data(), kk);
  dx.noalias() = w.transpose() * dl;
  dw.noalias() = dl * x.transpose();
  db = dl.rowwise().sum();
  return g;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_arg(logits.height() == 1 && logits.width() == 1,
            "softmax_cross_entropy: logits spatial dims must be 1x1, got " + logits.shape_string());
  const Index n = logits.batch(), kk = logits.channels();
  check_arg(static_cast<Index>(labels.size()) == n,
            "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(n));
  for (int y : labels)
    check_arg(y >= 0 && y < kk, "softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(kk) + ")");

  SoftmaxLoss res;
  res.grad_logits = Tensor(n, kk, 1, 1);
  res.probabilities = Tensor(n, kk, 1, 1);
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    const Real* l = logits.data() + i * kk;
    Real m = l[0];
    for (Index j = 1; j < kk; ++j) m = std::max(m, l[j]);
    Real z = 0;
    for (Index j = 0; j < kk; ++j) z += std::exp(l[j] - m);
    const Real logz = std::log(z);
    const int y = labels[static_cast<std::size_t>(i)];
    total += static_cast<double>(logz - (l[y] - m));
    for (Index j = 0; j < kk; ++j) {
      const Real p = std::exp(l[j] - m) / z;
      res.probabilities[i * kk + j] = p;
      res.grad_logits[i * kk + j] = (p - (j == y ? Real(1) : Real(0))) / static_cast<Real>(n);
    }
  }
  res.loss = total / static_cast<double>(n);
  return res;
}

namespace {

double fd_check_impl(const std::function<double(const Tensor&)>& f, Tensor point, const Tensor& analytic_grad,
                     double eps, const std::vector<Index>* coords) {
  check_arg(eps > 0, "finite_diff_check: eps must be positive");
  check_arg(point.same_shape(analytic_grad),
            "finite_diff_check: gradient shape " + analytic_grad.shape_string() + " != point shape " + point.shape_string());
  double worst = 0;
  const Index count = coords ? static_cast<Index>(coords->size()) : point.size();
  for (Index ci = 0; ci < count; ++ci) {
    const Index i = coords ? (*coords)[static_cast<std::size_t>(ci)] : ci;
    const Real saved = point[i];
    point[i] = saved + static_cast<Real>(eps);
    const double fp = f(point);
    point[i] = saved - static_cast<Real>(eps);
    const double fm = f(point);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_check: non-finite function value at coordinate " + std::to_string(i));
    const double central = (fp - fm) / (2 * eps);
    const double analytic = static_cast<double>(analytic_grad[i]);
    const double denom = std::max({std::abs(analytic), std::abs(central), 1e-12});
    worst = std::max(worst, std::abs(analytic - central) / denom);
  }
  return worst;
}

}  // namespace

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                         const Tensor& analytic_grad, double eps) {
  return fd_check_impl(f, point, analytic_grad, eps, nullptr);
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                         const Tensor& analytic_grad, double eps, const std::vector<Index>& coords) {
  return fd_check_impl(f, point, analytic_grad, eps, &coords);
}

}  // namespace opforge
