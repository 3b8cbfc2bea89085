#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "icld/common.hpp"

namespace icld {

// Dense row-major array, rank 1..3. Rank 3 is used only for attention maps.
template <typename T>
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<T> data;

  Tensor() = default;

  static Tensor zeros(std::initializer_list<std::int64_t> dims) {
    Tensor t;
    t.shape.assign(dims);
    std::int64_t n = 1;
    for (std::int64_t d : t.shape) n *= d;
    t.data.assign(static_cast<std::size_t>(n), T(0));
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T* row(std::int64_t r) { return data.data() + r * cols(); }
  const T* row(std::int64_t r) const { return data.data() + r * cols(); }

  T& at(std::int64_t i, std::int64_t j) { return data[i * cols() + j]; }
  T at(std::int64_t i, std::int64_t j) const { return data[i * cols() + j]; }

  void fill(T v) { data.assign(data.size(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// C[m,p] += A[m,n] * B[n,p]
template <typename T>
void matmul_add(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const std::int64_t m = a.rows(), n = a.cols(), p = b.cols();
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (std::int64_t k = 0; k < n; ++k) {
      const T s = arow[k];
      const T* brow = b.row(k);
      for (std::int64_t j = 0; j < p; ++j) crow[j] += s * brow[j];
    }
  }
}

// C[m,p] += A[m,n] * B^T where B is [p,n]. B is transposed into a scratch
// buffer first so the inner loop accumulates along contiguous memory instead
// of a dot-product reduction.
template <typename T>
void matmul_add_bt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const std::int64_t m = a.rows(), n = a.cols(), p = b.rows();
  std::vector<T> bt(static_cast<std::size_t>(n * p));
  for (std::int64_t j = 0; j < p; ++j) {
    const T* brow = b.row(j);
    for (std::int64_t k = 0; k < n; ++k) bt[static_cast<std::size_t>(k * p + j)] = brow[k];
  }
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (std::int64_t k = 0; k < n; ++k) {
      const T s = arow[k];
      const T* btrow = bt.data() + k * p;
      for (std::int64_t j = 0; j < p; ++j) crow[j] += s * btrow[j];
    }
  }
}

// C[n,p] += A^T * B where A is [m,n], B is [m,p]
template <typename T>
void matmul_add_at(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
  const std::int64_t m = a.rows(), n = a.cols(), p = b.cols();
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.row(i);
    const T* brow = b.row(i);
    for (std::int64_t k = 0; k < n; ++k) {
      const T s = arow[k];
      T* crow = c.row(k);
      for (std::int64_t j = 0; j < p; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace icld
