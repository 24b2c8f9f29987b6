#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "avseg/error.hpp"
#include "avseg/rng.hpp"

namespace avseg {

// Dense row-major matrix of T. All graph values are 2-D: row vectors are
// (1, n), scalars are (1, 1). Spatial maps are stored flattened as
// (H*W, channels) with H and W tracked by the calling code.
template <typename T>
class Tensor {
 public:
  using Map = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(std::size_t(rows) * cols, T(0)) {
    if (rows < 0 || cols < 0) throw ContractError("tensor dimensions must be non-negative");
  }

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }

  static Tensor full(int rows, int cols, T value) {
    Tensor t(rows, cols);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return full(1, 1, value); }

  static Tensor from_rows(int rows, int cols, std::vector<T> values) {
    if (values.size() != std::size_t(rows) * cols)
      throw ContractError("from_rows: value count does not match shape");
    Tensor t;
    t.rows_ = rows;
    t.cols_ = cols;
    t.data_ = std::move(values);
    return t;
  }

  static Tensor uniform(int rows, int cols, T lo, T hi, Rng& rng) {
    Tensor t(rows, cols);
    for (auto& x : t.data_) x = T(rng.uniform(double(lo), double(hi)));
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  T& operator()(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
  T operator()(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  Map map() { return Map(data_.data(), rows_, cols_); }
  ConstMap map() const { return ConstMap(data_.data(), rows_, cols_); }

  void set_zero() { std::fill(data_.begin(), data_.end(), T(0)); }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace avseg
