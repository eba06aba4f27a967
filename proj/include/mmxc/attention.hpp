#pragma once

#include <cmath>
#include <type_traits>

#include "mmxc/autodiff.hpp"

namespace mmxc {

/// How a model function sees a parameter: a const reference on the pure
/// path, a tape handle on the differentiable path.
template <class T>
using ParamRef = std::conditional_t<std::is_same_v<T, Matrix>, const Matrix&, Var>;

/// Stored weights of one attention block: four DxD transforms.
struct AttentionParams {
  Matrix q, k, v, o;

  std::size_t dim() const noexcept { return q.rows(); }
};

/// All four transforms set to I_D.
inline AttentionParams init_identity(std::size_t dim) {
  return {Matrix::identity(dim), Matrix::identity(dim), Matrix::identity(dim), Matrix::identity(dim)};
}

template <class T>
struct AttentionView {
  ParamRef<T> q, k, v, o;
};

inline AttentionView<Matrix> view(const AttentionParams& p) { return {p.q, p.k, p.v, p.o}; }

inline AttentionView<Var> lift(Tape& tape, const AttentionParams& p) {
  return {tape.leaf(p.q), tape.leaf(p.k), tape.leaf(p.v), tape.leaf(p.o)};
}

/// Query side of an attention call: the attending rows and their projections XQ.
template <class T>
struct AttendQuery {
  T x;
  T xq;
};

/// Key side: ZK and the value rows already mapped through the output
/// transform, (ZV)O.
template <class T>
struct AttendKeys {
  T zk;
  T zvo;
};

template <class T>
AttendQuery<T> attend_query(const T& x, const AttentionView<T>& p) {
  if (p.q.rows() != x.cols() || p.q.cols() != x.cols()) {
    throw DimensionError("attend: width mismatch (X " + std::to_string(x.cols()) + ", params " +
                         std::to_string(p.q.rows()) + ")");
  }
  return {x, matmul(x, p.q)};
}

template <class T>
AttendKeys<T> attend_keys(const T& z, const AttentionView<T>& p) {
  if (p.k.rows() != z.cols() || p.k.cols() != z.cols()) {
    throw DimensionError("attend: width mismatch (Z " + std::to_string(z.cols()) + ", params " +
                         std::to_string(p.k.rows()) + ")");
  }
  return {matmul(z, p.k), matmul(matmul(z, p.v), p.o)};
}

/// Attention from precomputed sides. Either side can be reused across calls.
template <class T>
T attend(const AttendQuery<T>& q, const AttendKeys<T>& k) {
  const std::size_t d = q.x.cols();
  if (k.zk.cols() != d) throw DimensionError("attend: query and key widths differ");
  T weights = row_softmax(matmul_nt(q.xq, k.zk), 1.0 / std::sqrt(static_cast<double>(d)));
  return add(q.x, matmul(weights, k.zvo));
}

/// Single-head scaled dot-product attention with a residual connection:
///   X + softmax((XQ)(ZK)^T / sqrt(D)) (ZV) O
/// Rows of X attend over rows of Z. Equivariant in the rows of X and
/// invariant to the row order of Z.
template <class T>
T attend(const T& x, const T& z, const AttentionView<T>& p) {
  return attend(attend_query(x, p), attend_keys(z, p));
}

inline Matrix attend(const Matrix& x, const Matrix& z, const AttentionParams& p) {
  return attend<Matrix>(x, z, view(p));
}

}  // namespace mmxc
