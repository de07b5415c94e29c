#ifndef TWOPASS_TENSOR_HPP
#define TWOPASS_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "twopass/common.hpp"

namespace twopass {

// Dense tensor of 64-bit floats. Rank is 1 or 2; vectors are stored as a
// single row so every value sits in one row-major Eigen matrix. `grad`,
// when present, always matches the value dimensions.
struct Tensor {
  std::vector<int> shape;    // {n} for vectors, {rows, cols} for matrices
  Mat values;                // vectors are 1 x n
  std::optional<Mat> grad;

  Tensor() = default;

  static Tensor scalar(Scalar v) {
    Tensor t;
    t.shape = {1};
    t.values = Mat::Constant(1, 1, v);
    return t;
  }

  static Tensor vector(int n, Scalar fill = 0.0) {
    if (n < 1) throw ShapeError("tensor vector length must be positive");
    Tensor t;
    t.shape = {n};
    t.values = Mat::Constant(1, n, fill);
    return t;
  }

  static Tensor matrix(int rows, int cols, Scalar fill = 0.0) {
    if (rows < 1 || cols < 1) throw ShapeError("tensor dims must be positive");
    Tensor t;
    t.shape = {rows, cols};
    t.values = Mat::Constant(rows, cols, fill);
    return t;
  }

  // Adopts a matrix; single-row inputs become rank-1 tensors.
  static Tensor from(Mat m) {
    Tensor t;
    if (m.rows() == 1) {
      t.shape = {static_cast<int>(m.cols())};
    } else {
      t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
    }
    t.values = std::move(m);
    return t;
  }

  std::int64_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                           [](std::int64_t a, int b) { return a * b; });
  }

  bool is_scalar() const { return numel() == 1; }

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }

  void alloc_grad() {
    if (!grad) grad = Mat::Zero(values.rows(), values.cols());
  }

  void zero_grad() {
    if (grad) grad->setZero();
  }

  // product(shape) == numel and the storage agrees with the declared shape
  void validate() const {
    if (shape.empty() || shape.size() > 2) {
      throw ShapeError("tensor rank must be 1 or 2");
    }
    if (numel() != values.size()) {
      throw ShapeError("tensor shape does not match value count");
    }
    if (grad && (grad->rows() != values.rows() || grad->cols() != values.cols())) {
      throw ShapeError("tensor grad dims do not match values");
    }
    check_finite(values, "tensor values");
  }
};

}  // namespace twopass

#endif  // TWOPASS_TENSOR_HPP
