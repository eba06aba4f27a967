#pragma once

// Dense row-major matrices and the pure (non-recording) kernels used by
// both inference and the autodiff tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmxc {

/// Shape mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input for which the operation is undefined (e.g. normalizing a zero vector).
struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Norm floor below which normalization refuses to proceed.
inline constexpr double kNormEpsilon = 1e-12;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }
  static Matrix row_vector(std::initializer_list<double> values) {
    return Matrix(1, values.size(), std::vector<double>(values));
  }

  /// Builds from nested rows; all rows must have the same length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
  }
}

inline void require_row_vector(const Matrix& v, const char* op) {
  if (v.rows() != 1) throw DimensionError(std::string(op) + ": expected a row vector, got " + shape_str(v));
}

/// True when every entry is finite.
inline bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// products

/// out += a * b
inline void matmul_acc(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw DimensionError("matmul: " + shape_str(a) + " * " + shape_str(b) + " into " + shape_str(out));
  }
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_acc(out, a, b);
  return out;
}

/// out += a * b^T
inline void matmul_nt_acc(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw DimensionError("matmul_nt: " + shape_str(a) + " * (" + shape_str(b) + ")^T into " + shape_str(out));
  }
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += ar[k] * br[k];
      out(i, j) += acc;
    }
  }
}

/// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  matmul_nt_acc(out, a, b);
  return out;
}

/// out += a^T * b
inline void matmul_tn_acc(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw DimensionError("matmul_tn: (" + shape_str(a) + ")^T * " + shape_str(b) + " into " + shape_str(out));
  }
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(k, i);
      if (s == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
}

/// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(out, a, b);
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot");
  return dot(a.values(), b.values());
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// ---------------------------------------------------------------------------
// elementwise

inline Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

inline Matrix add_scalar(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v += s;
  return out;
}

/// s (1x1) times m.
inline Matrix scale_by(const Matrix& s, const Matrix& m) {
  if (s.size() != 1) throw DimensionError("scale_by: scalar operand is " + shape_str(s));
  return scale(m, s[0]);
}

inline Matrix relu(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

/// Adds a 1xc bias to every row.
inline Matrix add_row_bias(const Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw DimensionError("add_row_bias: " + shape_str(m) + " + " + shape_str(bias));
  }
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias[c];
  return out;
}

/// 1^T m: column sums as a 1xc row.
inline Matrix row_sum(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  return out;
}

/// 1x1 inner product of two equally shaped matrices.
inline Matrix inner(const Matrix& a, const Matrix& b) { return Matrix(1, 1, dot(a, b)); }

inline Matrix sum_scalars(std::span<const Matrix> terms) {
  double acc = 0.0;
  for (const auto& t : terms) {
    if (t.size() != 1) throw DimensionError("sum_scalars: non-scalar term " + shape_str(t));
    acc += t[0];
  }
  return Matrix(1, 1, acc);
}

inline Matrix select_row(const Matrix& m, std::size_t r) {
  if (r >= m.rows()) throw DimensionError("select_row: row out of range");
  return Matrix::row_vector(m.row(r));
}

inline Matrix vstack(std::span<const Matrix> rows) {
  if (rows.empty()) throw DimensionError("vstack: no inputs");
  const std::size_t c = rows.front().cols();
  std::size_t total = 0;
  for (const auto& r : rows) {
    if (r.cols() != c) throw DimensionError("vstack: column mismatch");
    total += r.rows();
  }
  std::vector<double> data;
  data.reserve(total * c);
  for (const auto& r : rows) data.insert(data.end(), r.values().begin(), r.values().end());
  return Matrix(total, c, std::move(data));
}

/// Horizontal concatenation of two matrices with equal row counts.
inline Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("hcat: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization, softmax, pooling

/// v / ||v||_2 for a row vector; throws DegenerateInputError when ||v|| <= 1e-12.
inline Matrix l2_normalize(const Matrix& v) {
  require_row_vector(v, "l2_normalize");
  const double n = norm2(v.values());
  if (!(n > kNormEpsilon)) throw DegenerateInputError("l2_normalize: norm below epsilon");
  return scale(v, 1.0 / n);
}

/// Row-wise softmax of scale * m, with max subtraction.
inline Matrix row_softmax(const Matrix& m, double scale_factor = 1.0) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, scale_factor * v);
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(scale_factor * in[c] - mx);
      total += o[c];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

/// Segment i of an adaptive pool covers [floor(i*n/d), floor((i+1)*n/d)).
inline std::pair<std::size_t, std::size_t> pool_segment(std::size_t i, std::size_t n, std::size_t d) {
  return {i * n / d, (i + 1) * n / d};
}

/// Argmax index (first on ties) of each adaptive max-pool segment.
inline std::vector<std::size_t> adaptive_max_pool_argmax(std::span<const double> v, std::size_t d_out) {
  if (d_out == 0 || d_out > v.size()) {
    throw DimensionError("adaptive_max_pool: d_out=" + std::to_string(d_out) +
                         " for input width " + std::to_string(v.size()));
  }
  std::vector<std::size_t> idx(d_out);
  for (std::size_t i = 0; i < d_out; ++i) {
    auto [lo, hi] = pool_segment(i, v.size(), d_out);
    std::size_t best = lo;
    for (std::size_t j = lo + 1; j < hi; ++j)
      if (v[j] > v[best]) best = j;
    idx[i] = best;
  }
  return idx;
}

/// Pools every row of m down to d_out columns.
inline Matrix adaptive_max_pool(const Matrix& m, std::size_t d_out) {
  Matrix out(m.rows(), d_out);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto idx = adaptive_max_pool_argmax(in, d_out);
    for (std::size_t i = 0; i < d_out; ++i) out(r, i) = in[idx[i]];
  }
  return out;
}

/// Mean of the selected rows of table, as a 1xcols row.
inline Matrix gather_mean(const Matrix& table, std::span<const std::size_t> ids) {
  if (ids.empty()) throw DimensionError("gather_mean: empty id list");
  Matrix out(1, table.cols());
  for (std::size_t id : ids) {
    if (id >= table.rows()) throw DimensionError("gather_mean: row id out of range");
    auto r = table.row(id);
    for (std::size_t c = 0; c < r.size(); ++c) out[c] += r[c];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& v : out.values()) v *= inv;
  return out;
}

/// The pure path creates constants by value; mirrors Tape-backed overloads.
inline Matrix constant_like(const Matrix&, Matrix value) { return value; }

}  // namespace mmxc
