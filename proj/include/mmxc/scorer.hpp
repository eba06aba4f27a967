#pragma once

// Label classifiers, label-adapted datapoint embeddings and score fusion.

#include <optional>

#include "mmxc/representation.hpp"

namespace mmxc {

/// Per-label free vectors (rows of eta) and blend weights alpha in [0, 1].
struct ClassifierBank {
  Matrix eta;    // L x D
  Matrix alpha;  // L x 1

  std::size_t labels() const noexcept { return alpha.rows(); }

  void clamp_alpha() {
    for (double& a : alpha.values()) a = std::clamp(a, 0.0, 1.0);
  }
};

/// Bank with every free vector drawn from the uniform Xavier range for a
/// D -> D map and every blend weight set to `alpha0`.
inline ClassifierBank init_bank(std::size_t labels, std::size_t dim, double alpha0, std::mt19937_64& rng) {
  ClassifierBank bank{Matrix(labels, dim), Matrix(labels, 1, alpha0)};
  const double bound = std::sqrt(6.0 / static_cast<double>(dim + dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : bank.eta.values()) v = u(rng);
  return bank;
}

/// How a datapoint bag is adapted to a label.
enum class AdaptMode : std::uint8_t {
  cross_attention = 0,  // N(1^T A_C(X, Z))
  bypass = 1,           // N(1^T X)
  concat = 2,           // N(FF2(FF1([x ; z])))
};

/// Two feed-forward layers 2D -> 2D -> D used by the concatenation head.
struct ConcatParams {
  Matrix w1, b1, w2, b2;
};

inline ConcatParams init_concat(std::size_t dim, std::mt19937_64& rng) {
  auto xavier = [&](std::size_t in, std::size_t out) {
    Matrix m(in, out);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : m.values()) v = u(rng);
    return m;
  };
  return {xavier(2 * dim, 2 * dim), Matrix(1, 2 * dim), xavier(2 * dim, dim), Matrix(1, dim)};
}

template <class T>
struct ConcatView {
  ParamRef<T> w1, b1, w2, b2;
};

inline ConcatView<Matrix> view(const ConcatParams& p) { return {p.w1, p.b1, p.w2, p.b2}; }
inline ConcatView<Var> lift(Tape& tape, const ConcatParams& p) {
  return {tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.w2), tape.leaf(p.b2)};
}

/// w = N(alpha * z + (1 - alpha) * N(eta)); `alpha` is 1x1.
template <class T>
T classifier(const T& z_hat, const T& eta, const T& alpha) {
  T free = l2_normalize(eta);
  T mix = add(scale_by(alpha, z_hat), scale_by(add_scalar(scale(alpha, -1.0), 1.0), free));
  return l2_normalize(mix);
}

/// Classifier of label `l`. With `alpha_one` the free vector is never read
/// and w_l is exactly z_hat.
inline Matrix classifier(const Matrix& z_hat, const ClassifierBank& bank, std::size_t l, bool alpha_one = false) {
  const double a = alpha_one ? 1.0 : bank.alpha[l];
  if (a == 1.0) return z_hat;
  return classifier<Matrix>(z_hat, select_row(bank.eta, l), Matrix(1, 1, a));
}

template <class T>
T adapt_cross(const T& x_bag, const T& z_bag, const AttentionView<T>& cross) {
  return embed_vector(attend(x_bag, z_bag, cross));
}

template <class T>
T adapt_concat(const T& x_vec, const T& z_vec, const ConcatView<T>& ff) {
  T h = relu(add_row_bias(matmul(hcat(x_vec, z_vec), ff.w1), ff.b1));
  return l2_normalize(add_row_bias(matmul(h, ff.w2), ff.b2));
}

/// Everything the adaptation step may need, in one place.
template <class T>
struct AdaptView {
  AdaptMode mode = AdaptMode::cross_attention;
  std::optional<AttentionView<T>> cross;
  std::optional<ConcatView<T>> concat;
};

/// Per-datapoint work shared by every label it is scored against.
template <class T>
struct PreparedPoint {
  T bag;
  T vec;
  std::optional<AttendQuery<T>> query;
};

/// Per-label work shared by every datapoint scored against it.
template <class T>
struct PreparedLabel {
  T vec;
  std::optional<AttendKeys<T>> keys;
};

template <class T>
PreparedPoint<T> prepare_point(const T& x_bag, const AdaptView<T>& v) {
  PreparedPoint<T> p{x_bag, embed_vector(x_bag), std::nullopt};
  if (v.mode == AdaptMode::cross_attention) p.query.emplace(attend_query(x_bag, *v.cross));
  return p;
}

template <class T>
PreparedLabel<T> prepare_label(const T& z_bag, const AdaptView<T>& v) {
  PreparedLabel<T> l{embed_vector(z_bag), std::nullopt};
  if (v.mode == AdaptMode::cross_attention) l.keys.emplace(attend_keys(z_bag, *v.cross));
  return l;
}

/// Label-adapted datapoint vector x^{2,l} from prepared sides.
template <class T>
T adapt(const PreparedPoint<T>& x, const PreparedLabel<T>& z, const AdaptView<T>& v) {
  switch (v.mode) {
    case AdaptMode::bypass:
      return x.vec;
    case AdaptMode::concat:
      return adapt_concat(x.vec, z.vec, *v.concat);
    case AdaptMode::cross_attention:
    default:
      return embed_vector(attend(*x.query, *z.keys));
  }
}

/// Label-adapted datapoint vector x^{2,l}.
template <class T>
T adapt(const T& x_bag, const T& z_bag, const AdaptView<T>& v) {
  return adapt(prepare_point(x_bag, v), prepare_label(z_bag, v), v);
}

/// s = beta * c + (1 - beta) * a
inline double fuse(double c, double a, double beta) { return beta * c + (1.0 - beta) * a; }

struct ScoreTriple {
  std::uint32_t label = 0;
  double a = 0.0;  // similarity from retrieval
  double c = 0.0;  // classifier score
  double s = 0.0;  // fused score

  friend bool operator==(const ScoreTriple&, const ScoreTriple&) = default;
};

/// Scores one label for one datapoint given the label's bag/vector and a
/// retrieval similarity `a`.
inline ScoreTriple score_label(const Matrix& x_bag, std::uint32_t label, const Matrix& z_bag, const Matrix& z_vec,
                               const ClassifierBank& bank, const AdaptView<Matrix>& adapt_view, double a,
                               double beta, bool alpha_one = false) {
  Matrix w = classifier(z_vec, bank, label, alpha_one);
  Matrix x2 = adapt(x_bag, z_bag, adapt_view);
  const double c = dot(w, x2);
  return {label, a, c, fuse(c, a, beta)};
}

}  // namespace mmxc
