#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opforge/rng.hpp"

namespace opforge {

#ifdef OPFORGE_USE_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Index = Eigen::Index;

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

/// Dense 4-D array in (batch, channel, height, width) order, row-major,
/// backed by a flat Eigen array so elementwise work stays expression-based.
template <typename Scalar>
class DenseTensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  DenseTensor() : shape_{0, 0, 0, 0} {}

  DenseTensor(Index n, Index c, Index h, Index w) : shape_{n, c, h, w} {
    check_arg(n >= 0 && c >= 0 && h >= 0 && w >= 0, "tensor: negative dimension in " + shape_to_string({n, c, h, w}));
    data_ = Storage::Zero(n * c * h * w);
  }

  static DenseTensor zeros(Index n, Index c, Index h, Index w) { return DenseTensor(n, c, h, w); }

  static DenseTensor full(Index n, Index c, Index h, Index w, Scalar v) {
    DenseTensor t(n, c, h, w);
    t.data_.setConstant(v);
    return t;
  }

  static DenseTensor from_values(Index n, Index c, Index h, Index w, const std::vector<Scalar>& values) {
    DenseTensor t(n, c, h, w);
    check_arg(static_cast<Index>(values.size()) == t.size(),
              "tensor: value count " + std::to_string(values.size()) + " does not fill shape " + t.shape_string());
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = values[static_cast<std::size_t>(i)];
    return t;
  }

  static DenseTensor gaussian(Index n, Index c, Index h, Index w, Scalar stddev, Rng& rng) {
    DenseTensor t(n, c, h, w);
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = stddev * static_cast<Scalar>(rng.normal());
    return t;
  }

  Index batch() const { return shape_[0]; }
  Index channels() const { return shape_[1]; }
  Index height() const { return shape_[2]; }
  Index width() const { return shape_[3]; }
  Index size() const { return data_.size(); }
  const std::array<Index, 4>& shape() const { return shape_; }

  bool same_shape(const DenseTensor& o) const { return shape_ == o.shape_; }

  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  /// Reinterpret as (n', c', h', w'); element count must be preserved.
  DenseTensor reshaped(Index n, Index c, Index h, Index w) const {
    check_arg(n * c * h * w == size(), "tensor: reshape " + shape_string() + " -> " + shape_to_string({n, c, h, w}) + " changes element count");
    DenseTensor t = *this;
    t.shape_ = {n, c, h, w};
    return t;
  }

  bool all_finite() const { return data_.isFinite().all(); }

  std::string shape_string() const { return shape_to_string(shape_); }

  static std::string shape_to_string(const std::array<Index, 4>& s) {
    std::ostringstream os;
    os << s[0] << "x" << s[1] << "x" << s[2] << "x" << s[3];
    return os.str();
  }

 private:
  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::array<Index, 4> shape_;
  Storage data_;
};

using Tensor = DenseTensor<Real>;

/// A tensor paired with its gradient buffer. Non-trainable parameters are
/// never touched by the optimizer.
template <typename Scalar>
struct BasicParameter {
  DenseTensor<Scalar> value;
  DenseTensor<Scalar> grad;
  bool trainable = true;

  BasicParameter() = default;

  explicit BasicParameter(DenseTensor<Scalar> v, bool trainable_ = true)
      : value(std::move(v)), trainable(trainable_) {
    const auto& s = value.shape();
    grad = DenseTensor<Scalar>(s[0], s[1], s[2], s[3]);
  }

  void zero_grad() { grad.array().setZero(); }
};

using Parameter = BasicParameter<Real>;

}  // namespace opforge
