#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ffcl {

struct GradCheckEntry {
  std::string name;     // "<op>.<argument>" being differentiated
  double rel_err = 0.0;  // worst relative error over all probes
  int64_t probes = 0;    // finite-difference coordinate evaluations
  bool pass = false;
};

struct GradReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tol = 1e-3;
  double elapsed_s = 0.0;
  bool pass = false;
};

// Central-difference check of the recorded backward rule. `f` rebuilds the
// scalar loss from current tensor state; `target` is the leaf whose gradient
// is compared, one coordinate at a time:
//
//   fd_i = (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps)
//
// The reported relative error treats the gradient as a vector:
// |a - fd| / max(|a|, |fd|, 1e-8) with |.| the max norm, which keeps the
// comparison meaningful on coordinates where the true derivative happens to
// cancel to near zero.
double finite_diff_rel_err(const std::function<Tensor()>& f, Tensor target, float eps = 1e-3f);

// Runs the standard battery: every differentiable primitive, the embedding
// losses on both branches, the per-block and whole-network contrastive
// losses against block parameters, and classification head training. When
// `inject_fault` names a check, that check's analytic gradient is perturbed
// before comparison so the failure path can be exercised end to end.
GradReport run_gradcheck_suite(uint64_t seed, const std::string& inject_fault = "");

std::string render_grad_report(const GradReport& report);

}  // namespace ffcl
