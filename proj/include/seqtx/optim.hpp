#pragma once

#include <cstdint>
#include <vector>

#include "seqtx/tensor.hpp"

namespace seqtx {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamMoments {
  std::vector<float> m;
  std::vector<float> v;
};

// One bias-corrected Adam update of param from its accumulated gradient.
// step is the 1-based update count. A parameter without a gradient buffer
// is treated as having a zero gradient.
void adam_step(Tensor& param, AdamMoments& moments, float lr, std::int64_t step,
               const AdamConfig& cfg = {});

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, AdamConfig cfg = {});

  void step(float lr);
  void zero_grad();
  std::int64_t steps_taken() const { return step_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace seqtx
