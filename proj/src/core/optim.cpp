#include "core/optim.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"

namespace ffcl {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0f)) throw ConfigError("adam: learning rate must be >= 0");
  if (!(cfg_.beta1 >= 0.0f && cfg_.beta1 < 1.0f) || !(cfg_.beta2 >= 0.0f && cfg_.beta2 < 1.0f))
    throw ConfigError("adam: betas must lie in [0,1)");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor& p : params_) {
    if (!p.defined()) throw ShapeError("adam: undefined parameter tensor");
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  // Bias corrections computed once per step in double, applied in float.
  const double b1t = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double b2t = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  const float inv_b1t = static_cast<float>(1.0 / b1t);
  const float inv_b2t = static_cast<float>(1.0 / b2t);

  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    auto data = p.data_mut();
    auto grad = p.grad();
    std::vector<float>& m = m_[pi];
    std::vector<float>& v = v_[pi];
    const bool has_grad = !grad.empty();
    for (size_t i = 0; i < data.size(); ++i) {
      const float g = has_grad ? grad[i] : 0.0f;
      if (!std::isfinite(g))
        throw TrainingError("adam: non-finite gradient in parameter " + std::to_string(pi) +
                            " at index " + std::to_string(i));
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
      const float mhat = m[i] * inv_b1t;
      const float vhat = v[i] * inv_b2t;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

CosineSchedule::CosineSchedule(double eta0, double eta_min, int64_t total_steps)
    : eta0_(eta0), eta_min_(eta_min), total_(total_steps) {
  if (total_ < 0) throw ConfigError("cosine schedule: total steps must be >= 0");
  if (eta_min_ > eta0_) throw ConfigError("cosine schedule: eta_min must not exceed eta0");
}

double CosineSchedule::lr_at(int64_t t) const {
  if (t <= 0 || total_ == 0) return eta0_;
  if (t >= total_) return eta_min_;
  const double frac = static_cast<double>(t) / static_cast<double>(total_);
  return eta_min_ + (eta0_ - eta_min_) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace ffcl
