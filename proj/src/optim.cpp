#include "optim.hpp"

#include <cmath>

#include "error.hpp"

namespace mswa {

void AdamW::attach(const std::vector<Parameter>& params) {
  m_.clear();
  v_.clear();
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
  t_ = 0;
}

void AdamW::step(std::vector<Parameter>& params, double lr) {
  if (m_.size() != params.size()) {
    fail(ErrorCode::State, "AdamW::step: optimizer not attached to this parameter list");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = params[pi].tensor;
    if (!t.has_grad()) continue;
    double* w = t.data();
    const std::vector<double>& g = t.grad_vec();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t k = 0; k < g.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[k]);
    }
  }
}

double cosine_lr(int64_t step, int64_t total_steps, int64_t warmup_steps,
                 double peak_lr) {
  if (total_steps < 1) fail(ErrorCode::Config, "cosine_lr: total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    fail(ErrorCode::Config, "cosine_lr: warmup_steps must lie in [0, total_steps]");
  }
  if (step < warmup_steps) {
    return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double span = static_cast<double>(std::max<int64_t>(1, total_steps - warmup_steps));
  const double progress = static_cast<double>(step - warmup_steps) / span;
  return 0.5 * peak_lr * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double clip_grad_norm(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad_vec()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.node()->grad) g *= scale;
    }
  }
  return norm;
}

}  // namespace mswa
