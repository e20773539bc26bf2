#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evd {

using index_t = std::ptrdiff_t;

/// Unit roundoff used throughout: 2^-52.
inline constexpr double kEps = 0x1p-52;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("shape mismatch: ") + what);
}

// Non-owning column-major view with leading dimension.
template <typename T>
struct BasicView {
  T* data = nullptr;
  index_t rows = 0;
  index_t cols = 0;
  index_t ld = 0;

  T& operator()(index_t i, index_t j) const { return data[i + j * ld]; }
  T* col(index_t j) const { return data + j * ld; }

  BasicView block(index_t i, index_t j, index_t r, index_t c) const {
    return BasicView{data + i + j * ld, r, c, ld};
  }

  operator BasicView<const T>() const
    requires(!std::is_const_v<T>)
  {
    return BasicView<const T>{data, rows, cols, ld};
  }
};

using MatrixView = BasicView<double>;
using ConstMatrixView = BasicView<const double>;

/// Dense FP64 matrix, column-major.
class Matrix {
 public:
  Matrix() = default;
  Matrix(index_t rows, index_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {
    if (rows < 0 || cols < 0) throw ShapeError("negative matrix dimension");
  }

  static Matrix identity(index_t n) {
    Matrix m(n, n);
    for (index_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(index_t i, index_t j) { return data_[i + j * rows_]; }
  double operator()(index_t i, index_t j) const { return data_[i + j * rows_]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* col(index_t j) { return data_.data() + j * rows_; }
  const double* col(index_t j) const { return data_.data() + j * rows_; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  MatrixView view() { return {data_.data(), rows_, cols_, std::max<index_t>(rows_, 1)}; }
  ConstMatrixView view() const { return {data_.data(), rows_, cols_, std::max<index_t>(rows_, 1)}; }
  MatrixView block(index_t i, index_t j, index_t r, index_t c) { return view().block(i, j, r, c); }
  ConstMatrixView block(index_t i, index_t j, index_t r, index_t c) const {
    return view().block(i, j, r, c);
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (index_t j = 0; j < cols_; ++j)
      for (index_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  index_t rows_ = 0;
  index_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix to_matrix(ConstMatrixView v) {
  Matrix m(v.rows, v.cols);
  for (index_t j = 0; j < v.cols; ++j)
    std::copy_n(v.col(j), v.rows, m.col(j));
  return m;
}

inline void copy_into(ConstMatrixView src, MatrixView dst) {
  require_shape(src.rows == dst.rows && src.cols == dst.cols, "copy_into");
  for (index_t j = 0; j < src.cols; ++j) std::copy_n(src.col(j), src.rows, dst.col(j));
}

inline double frobenius_norm(ConstMatrixView a) {
  // Scaled sum of squares so that 1e6-scale spectra at n=4096 cannot overflow.
  double scale = 0.0, ssq = 1.0;
  for (index_t j = 0; j < a.cols; ++j) {
    const double* c = a.col(j);
    for (index_t i = 0; i < a.rows; ++i) {
      double x = std::abs(c[i]);
      if (x == 0.0) continue;
      if (scale < x) {
        ssq = 1.0 + ssq * (scale / x) * (scale / x);
        scale = x;
      } else {
        ssq += (x / scale) * (x / scale);
      }
    }
  }
  return scale * std::sqrt(ssq);
}

inline double frobenius_norm(const Matrix& a) { return frobenius_norm(a.view()); }

inline double max_abs(ConstMatrixView a) {
  double m = 0.0;
  for (index_t j = 0; j < a.cols; ++j)
    for (index_t i = 0; i < a.rows; ++i) m = std::max(m, std::abs(a(i, j)));
  return m;
}

/// The dense input A. Symmetry is validated on construction.
class SymmetricMatrix {
 public:
  static constexpr double kDefaultSymTol = 1e-12;

  explicit SymmetricMatrix(Matrix data, double sym_tol = kDefaultSymTol)
      : data_(std::move(data)), sym_tol_(sym_tol) {
    if (data_.rows() != data_.cols()) throw ShapeError("symmetric matrix must be square");
    if (data_.rows() < 1) throw ShapeError("symmetric matrix order must be >= 1");
    const double limit = sym_tol_ * std::max(1.0, frobenius_norm(data_));
    for (index_t j = 0; j < n(); ++j)
      for (index_t i = j + 1; i < n(); ++i)
        if (std::abs(data_(i, j) - data_(j, i)) > limit)
          throw Error("matrix is not symmetric at (" + std::to_string(i) + ", " +
                      std::to_string(j) + ")");
  }

  index_t n() const { return data_.rows(); }
  double sym_tol() const { return sym_tol_; }
  const Matrix& matrix() const { return data_; }
  double operator()(index_t i, index_t j) const { return data_(i, j); }
  ConstMatrixView view() const { return data_.view(); }

 private:
  Matrix data_;
  double sym_tol_;
};

/// Multiply-add accounting, broken down by stage label. Safe to share
/// between threads; merges are additive.
class FlopCounter {
 public:
  FlopCounter() = default;
  FlopCounter(const FlopCounter& other) : total_(other.total()), by_stage_(other.breakdown()) {}
  FlopCounter& operator=(const FlopCounter& other) {
    if (this != &other) {
      auto snapshot = other.breakdown();
      std::lock_guard lock(mu_);
      by_stage_ = std::move(snapshot);
      total_.store(other.total());
    }
    return *this;
  }

  void add(std::uint64_t multiply_adds, const std::string& stage = "other") {
    total_.fetch_add(multiply_adds, std::memory_order_relaxed);
    std::lock_guard lock(mu_);
    by_stage_[stage] += multiply_adds;
  }

  void merge(const FlopCounter& other) {
    if (this == &other) return;
    for (const auto& [stage, count] : other.breakdown()) add(count, stage);
  }

  std::uint64_t total() const { return total_.load(std::memory_order_relaxed); }

  std::uint64_t stage(const std::string& label) const {
    std::lock_guard lock(mu_);
    auto it = by_stage_.find(label);
    return it == by_stage_.end() ? 0 : it->second;
  }

  std::map<std::string, std::uint64_t> breakdown() const {
    std::lock_guard lock(mu_);
    return by_stage_;
  }

 private:
  std::atomic<std::uint64_t> total_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> by_stage_;
};

/// Optional counter plus the stage label charged for the work.
struct Charge {
  FlopCounter* counter = nullptr;
  std::string stage = "other";

  void operator()(std::uint64_t multiply_adds) const {
    if (counter && multiply_adds) counter->add(multiply_adds, stage);
  }
};

}  // namespace evd
