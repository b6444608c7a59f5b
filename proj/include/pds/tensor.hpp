#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pds/common.hpp"

namespace pds {

// Dense row-major tensor of doubles. Sequence data uses (batch, time,
// channel) axis order throughout the project.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Tensor(std::vector<int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != static_cast<int64_t>(data_.size()))
      throw ConfigError("tensor: shape does not match data length");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data_) v = dist(rng);
    return t;
  }

  static Tensor uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data_) v = dist(rng);
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[flat_index(ix...)];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    return data_[flat_index(ix...)];
  }

  // Gradient buffer, same shape as data. Allocated on first use so
  // eval-only models never pay for it.
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (!on) grad_.clear();
  }
  bool has_grad() const { return !grad_.empty(); }
  std::vector<double>& grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
    return grad_;
  }
  const std::vector<double>& grad() const { return grad_; }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw ConfigError("tensor: negative extent");
      n *= d;
    }
    return n;
  }

 private:
  template <typename... Ix>
  size_t flat_index(Ix... ix) const {
    assert(sizeof...(Ix) == shape_.size());
    int64_t idx = 0;
    size_t axis = 0;
    ((idx = idx * shape_[axis] + static_cast<int64_t>(ix), ++axis), ...);
    return static_cast<size_t>(idx);
  }

  std::vector<int64_t> shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

// Named learnable tensor. Names are hierarchical paths assigned at model
// construction ("stage2.ds.kernel") and must be unique within a model.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
  }

  std::vector<double>& grad() { return value.grad(); }
  int64_t numel() const { return value.numel(); }
};

// Per-(batch, time) validity derived from per-item lengths; valid frames
// always form a prefix.
struct ValidMask {
  std::vector<int64_t> lengths;
  int64_t max_time = 0;

  ValidMask() = default;
  ValidMask(std::vector<int64_t> lens, int64_t time) : lengths(std::move(lens)), max_time(time) {
    for (int64_t l : lengths)
      if (l < 0 || l > max_time) throw ConfigError("mask: length out of range");
  }

  static ValidMask full(int64_t batch, int64_t time) {
    return ValidMask(std::vector<int64_t>(static_cast<size_t>(batch), time), time);
  }

  int64_t batch() const { return static_cast<int64_t>(lengths.size()); }
  bool valid(int64_t b, int64_t t) const { return t < lengths[static_cast<size_t>(b)]; }
  int64_t total_valid() const { return std::accumulate(lengths.begin(), lengths.end(), int64_t{0}); }
};

// Zeroes every feature row at or beyond the item's valid length. Applied
// after every op that can write into the padded tail.
inline void zero_padded(Tensor& x, const ValidMask& mask) {
  const int64_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t len = mask.lengths[static_cast<size_t>(b)];
    if (len >= time) continue;
    double* row = x.data() + (b * time + len) * ch;
    std::fill(row, row + (time - len) * ch, 0.0);
  }
}

}  // namespace pds
