#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mmxc/tensor.hpp"

namespace mmxc {

/// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Options opt) : opt_(opt) {}

  /// Registers a parameter; gradients passed to step() follow registration order.
  void add(Matrix* param, bool decay = true) {
    slots_.push_back({param, Matrix(param->rows(), param->cols()), Matrix(param->rows(), param->cols()), decay});
  }

  std::size_t size() const noexcept { return slots_.size(); }
  std::size_t steps() const noexcept { return t_; }

  void step(std::span<const Matrix> grads, double lr) {
    if (grads.size() != slots_.size()) throw DimensionError("AdamW::step: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      Slot& slot = slots_[s];
      const Matrix& g = grads[s];
      require_same_shape(*slot.param, g, "AdamW::step");
      Matrix& p = *slot.param;
      const double decay = slot.decay ? 1.0 - lr * opt_.weight_decay : 1.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        slot.m[i] = opt_.beta1 * slot.m[i] + (1.0 - opt_.beta1) * g[i];
        slot.v[i] = opt_.beta2 * slot.v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + opt_.eps);
      }
    }
  }

 private:
  struct Slot {
    Matrix* param;
    Matrix m, v;
    bool decay;
  };
  Options opt_;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

/// One-cycle cosine schedule: linear warmup to `peak`, then cosine decay to zero.
class OneCycleCosine {
 public:
  OneCycleCosine(double peak, std::size_t total_steps, std::size_t warmup_steps)
      : peak_(peak), total_(std::max<std::size_t>(total_steps, 1)), warmup_(std::min(warmup_steps, total_)) {}

  /// Warmup of min(requested, 10% of the run) so short runs still decay.
  static OneCycleCosine with_capped_warmup(double peak, std::size_t total_steps, std::size_t requested_warmup) {
    return OneCycleCosine(peak, total_steps, std::min(requested_warmup, total_steps / 10));
  }

  std::size_t warmup() const noexcept { return warmup_; }

  /// Learning rate for 0-based step `t`.
  double operator()(std::size_t t) const {
    if (t < warmup_) return peak_ * static_cast<double>(t + 1) / static_cast<double>(warmup_);
    const std::size_t span = total_ - warmup_;
    if (span == 0) return peak_;
    const double progress = std::min(1.0, static_cast<double>(t - warmup_) / static_cast<double>(span));
    return 0.5 * peak_ * (1.0 + std::cos(std::numbers::pi * progress));
  }

 private:
  double peak_;
  std::size_t total_;
  std::size_t warmup_;
};

}  // namespace mmxc
