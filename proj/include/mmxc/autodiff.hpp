#pragma once

// Define-by-run reverse-mode differentiation over Matrix values.
//
// Every op below mirrors a pure kernel in tensor.hpp with the same name, so
// model code templated on the value type runs unchanged on Matrix (inference)
// and Var (training).

#include <cassert>
#include <functional>
#include <memory>

#include "mmxc/tensor.hpp"

namespace mmxc {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value) { return push(std::move(value), true, nullptr); }
  /// Non-differentiable input.
  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Accumulated gradient; a zero matrix of the value's shape when nothing flowed.
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.empty() && !n.value.empty() ? Matrix(n.value.rows(), n.value.cols()) : n.grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Back-propagates from a 1x1 output.
  void backward(Var out) {
    if (nodes_[out.id].value.size() != 1) throw DimensionError("backward: output must be scalar");
    for (auto& n : nodes_) n.grad = Matrix();
    nodes_[out.id].grad = Matrix(1, 1, 1.0);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // The closure may push gradients into earlier nodes only.
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
      n.grad = std::move(g);
    }
  }

  /// Records a new node computed from `parents`.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    bool rg = false;
    for (Var p : parents) rg = rg || nodes_[p.id].requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr);
  }
  Var record(Matrix value, std::span<const Var> parents, Backward backward) {
    bool rg = false;
    for (Var p : parents) rg = rg || nodes_[p.id].requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : nullptr);
  }

  /// Adds g into the gradient of v (no-op for constants).
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }
  void accumulate(Var v, Matrix&& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  /// Direct access for sparse accumulation (row-gather style ops).
  Matrix& grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool rg, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), rg, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

inline Var constant_like(const Var& like, Matrix value) { return like.tape->constant(std::move(value)); }

// ---------------------------------------------------------------------------
// recorded ops

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) matmul_nt_acc(tp.grad_buffer(a), g, b.value());
    if (tp.requires_grad(b)) matmul_tn_acc(tp.grad_buffer(b), a.value(), g);
  });
}

inline Var matmul_nt(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) matmul_acc(tp.grad_buffer(a), g, b.value());
    if (tp.requires_grad(b)) matmul_tn_acc(tp.grad_buffer(b), g, a.value());
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(sub(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, scale(g, -1.0));
  });
}

inline Var scale(Var a, double s) {
  return a.tape->record(scale(a.value(), s), {a},
                        [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, scale(g, s)); });
}

inline Var add_scalar(Var a, double s) {
  return a.tape->record(add_scalar(a.value(), s), {a},
                        [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

inline Var scale_by(Var s, Var m) {
  Tape& t = *s.tape;
  return t.record(scale_by(s.value(), m.value()), {s, m}, [s, m](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(s)) tp.accumulate(s, Matrix(1, 1, dot(g, m.value())));
    if (tp.requires_grad(m)) tp.accumulate(m, scale(g, s.value()[0]));
  });
}

inline Var relu(Var a) {
  return a.tape->record(relu(a.value()), {a}, [a](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    const Matrix& x = a.value();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(x[i] > 0.0)) ga[i] = 0.0;
    tp.accumulate(a, ga);
  });
}

inline Var add_row_bias(Var m, Var bias) {
  Tape& t = *m.tape;
  return t.record(add_row_bias(m.value(), bias.value()), {m, bias}, [m, bias](Tape& tp, const Matrix& g) {
    tp.accumulate(m, g);
    if (tp.requires_grad(bias)) tp.accumulate(bias, row_sum(g));
  });
}

inline Var row_sum(Var m) {
  return m.tape->record(row_sum(m.value()), {m}, [m](Tape& tp, const Matrix& g) {
    const std::size_t r = m.rows();
    Matrix gm(r, g.cols());
    for (std::size_t i = 0; i < r; ++i) std::copy(g.values().begin(), g.values().end(), gm.row(i).begin());
    tp.accumulate(m, gm);
  });
}

inline Var inner(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(inner(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, scale(b.value(), g[0]));
    if (tp.requires_grad(b)) tp.accumulate(b, scale(a.value(), g[0]));
  });
}

inline Var sum_scalars(std::span<const Var> terms) {
  if (terms.empty()) throw DimensionError("sum_scalars: no terms");
  Tape& t = *terms.front().tape;
  double acc = 0.0;
  for (Var v : terms) {
    if (v.value().size() != 1) throw DimensionError("sum_scalars: non-scalar term");
    acc += v.value()[0];
  }
  std::vector<Var> parents(terms.begin(), terms.end());
  return t.record(Matrix(1, 1, acc), terms, [parents](Tape& tp, const Matrix& g) {
    for (Var p : parents) tp.accumulate(p, g);
  });
}

inline Var select_row(Var m, std::size_t r) {
  return m.tape->record(select_row(m.value(), r), {m}, [m, r](Tape& tp, const Matrix& g) {
    Matrix& buf = tp.grad_buffer(m);
    auto dst = buf.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += g[c];
  });
}

inline Var vstack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("vstack: no inputs");
  Tape& t = *rows.front().tape;
  std::vector<Matrix> vals;
  vals.reserve(rows.size());
  for (Var v : rows) vals.push_back(v.value());
  std::vector<Var> parents(rows.begin(), rows.end());
  return t.record(vstack(vals), rows, [parents](Tape& tp, const Matrix& g) {
    std::size_t offset = 0;
    for (Var p : parents) {
      const std::size_t r = p.rows();
      if (tp.requires_grad(p)) {
        Matrix gp(r, g.cols());
        for (std::size_t i = 0; i < r; ++i)
          std::copy(g.row(offset + i).begin(), g.row(offset + i).end(), gp.row(i).begin());
        tp.accumulate(p, gp);
      }
      offset += r;
    }
  });
}

inline Var hcat(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(hcat(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const std::size_t ca = a.cols();
    const std::size_t cb = b.cols();
    Matrix ga(g.rows(), ca), gb(g.rows(), cb);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
      for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

inline Var l2_normalize(Var v) {
  Matrix y = l2_normalize(v.value());
  const double n = norm2(v.value().values());
  return v.tape->record(y, {v}, [v, y, n](Tape& tp, const Matrix& g) {
    // d(v/|v|) = (g - (g.y) y) / |v|
    const double gy = dot(g, y);
    Matrix gv(1, y.cols());
    for (std::size_t i = 0; i < y.size(); ++i) gv[i] = (g[i] - gy * y[i]) / n;
    tp.accumulate(v, gv);
  });
}

inline Var row_softmax(Var m, double scale_factor = 1.0) {
  Matrix y = row_softmax(m.value(), scale_factor);
  return m.tape->record(y, {m}, [m, y, scale_factor](Tape& tp, const Matrix& g) {
    Matrix gm(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double gy = dot(g.row(r), y.row(r));
      for (std::size_t c = 0; c < y.cols(); ++c) gm(r, c) = scale_factor * y(r, c) * (g(r, c) - gy);
    }
    tp.accumulate(m, gm);
  });
}

inline Var adaptive_max_pool(Var m, std::size_t d_out) {
  const Matrix& x = m.value();
  Matrix y(x.rows(), d_out);
  std::vector<std::size_t> arg(x.rows() * d_out);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto idx = adaptive_max_pool_argmax(x.row(r), d_out);
    for (std::size_t i = 0; i < d_out; ++i) {
      y(r, i) = x(r, idx[i]);
      arg[r * d_out + i] = idx[i];
    }
  }
  const std::size_t in_cols = x.cols();
  return m.tape->record(std::move(y), {m}, [m, arg, d_out, in_cols](Tape& tp, const Matrix& g) {
    Matrix gm(g.rows(), in_cols);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t i = 0; i < d_out; ++i) gm(r, arg[r * d_out + i]) += g(r, i);
    tp.accumulate(m, gm);
  });
}

inline Var gather_mean(Var table, std::span<const std::size_t> ids) {
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return table.tape->record(gather_mean(table.value(), ids), {table}, [table, rows](Tape& tp, const Matrix& g) {
    Matrix& buf = tp.grad_buffer(table);
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t id : rows) {
      auto dst = buf.row(id);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += inv * g[c];
    }
  });
}

// ---------------------------------------------------------------------------
// finite-difference verification

struct GradientReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Relative error with an absolute floor so that vanishing gradients compare sanely.
inline double gradient_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` builds a scalar on the given tape from leaves holding `params`.
template <class F>
GradientReport check_gradient(F&& f, const std::vector<Matrix>& params, double h = 1e-5,
                              double tol = 1e-4) {
  auto eval = [&](const std::vector<Matrix>& ps, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(ps.size());
    for (const auto& p : ps) leaves.push_back(tape.leaf(p));
    Var out = f(tape, std::span<const Var>(leaves));
    const double value = out.value()[0];
    if (grads) {
      tape.backward(out);
      grads->clear();
      for (Var l : leaves) grads->push_back(tape.grad(l));
    }
    return value;
  };

  std::vector<Matrix> analytic;
  eval(params, &analytic);

  GradientReport report;
  std::vector<Matrix> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = probe[p][i];
      probe[p][i] = orig + h;
      const double up = eval(probe, nullptr);
      probe[p][i] = orig - h;
      const double down = eval(probe, nullptr);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      report.max_rel_error = std::max(report.max_rel_error, gradient_rel_error(a, numeric));
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace mmxc
