#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace mswa {

// Decoupled weight decay Adam over a fixed parameter list. Moments are kept
// in registration order; the checkpoint stores them by parameter name.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.98, double weight_decay = 0.01,
        double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

  void attach(const std::vector<Parameter>& params);
  void step(std::vector<Parameter>& params, double lr);

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  std::vector<std::vector<double>>& moment1() { return m_; }
  std::vector<std::vector<double>>& moment2() { return v_; }
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double weight_decay() const { return weight_decay_; }

 private:
  double beta1_, beta2_, weight_decay_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warmup to peak_lr, then cosine decay to zero over the remaining
// steps. step is zero-based.
double cosine_lr(int64_t step, int64_t total_steps, int64_t warmup_steps,
                 double peak_lr);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Parameter>& params, double max_norm);

}  // namespace mswa
