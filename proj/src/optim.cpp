#include "seqtx/optim.hpp"

#include <cmath>

namespace seqtx {

void adam_step(Tensor& param, AdamMoments& moments, float lr, std::int64_t step,
               const AdamConfig& cfg) {
  if (step < 1) throw Error("adam step count is 1-based");
  const std::size_t n = param.size();
  if (moments.m.size() != n) {
    moments.m.assign(n, 0.0f);
    moments.v.assign(n, 0.0f);
  }
  if (!param.has_grad()) {
    // Zero gradient: the moments still decay.
    for (std::size_t i = 0; i < n; ++i) {
      moments.m[i] *= cfg.beta1;
      moments.v[i] *= cfg.beta2;
    }
  }
  const double c1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(step));
  const double c2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(step));
  const auto g = param.grad();
  auto w = param.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (param.has_grad()) {
      moments.m[i] = cfg.beta1 * moments.m[i] + (1.0f - cfg.beta1) * g[i];
      moments.v[i] = cfg.beta2 * moments.v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
    }
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    w[i] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {}

void AdamOptimizer::step(float lr) {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i], moments_[i], lr, step_, cfg_);
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace seqtx
