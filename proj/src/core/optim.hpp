#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace ffcl {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam with bias correction. step() consumes the accumulated gradients and
// zeroes them afterwards; parameters without an accumulated gradient are
// treated as having gradient zero (their moments decay, the value is
// untouched on the first step and stays bitwise identical while gradients
// remain zero).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  void set_lr(float lr) { cfg_.lr = lr; }
  float lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  // Throws TrainingError on a non-finite gradient.
  void step();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// eta(t) = eta_min + (eta0 - eta_min) * (1 + cos(pi * t / T)) / 2 for
// t in [0, T]; clamped to eta_min beyond T. Endpoints are exact by
// construction: lr_at(0) == eta0 and lr_at(T) == eta_min.
class CosineSchedule {
 public:
  CosineSchedule(double eta0, double eta_min, int64_t total_steps);

  double lr_at(int64_t t) const;
  int64_t total_steps() const { return total_; }

 private:
  double eta0_, eta_min_;
  int64_t total_;
};

}  // namespace ffcl
