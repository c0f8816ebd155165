#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ffcl {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

// One node of the recorded computation. Forward ops append nodes that point
// at their operands; `backward` reads this node's gradient and accumulates
// into the operands' gradients. Children hold shared ownership of parents,
// so intermediate results stay alive exactly as long as something downstream
// references them.
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something accumulates into it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";

  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  // Gradient buffer sized to the data, zero-filled on first use.
  std::span<float> grad_buf() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

bool grad_enabled();

}  // namespace detail

// Suspends gradient recording on the current thread (model evaluation).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense float32 tensor with reverse-mode autodiff. Value type over a shared
// node: copies alias the same storage and graph position. Gradients
// accumulate across backward calls until explicitly zeroed; optimizers own
// the zeroing step.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int dim(int i) const;

  std::span<const float> data() const;
  // Mutable access to leaf data (parameters, finite-difference probes).
  // Mutating an op output would silently invalidate recorded gradients,
  // so only leaves allow it.
  std::span<float> data_mut();

  float item() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool on);  // leaves only
  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  // Leaf copy of the data: no parents, no gradient flow across the boundary.
  Tensor detach() const;

  const detail::NodePtr& node() const { return n_; }
  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

 private:
  detail::NodePtr n_;
};

// --- primitives ---------------------------------------------------------
// All ops validate shapes and record a backward rule when any operand
// requires gradients (and recording is enabled).

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, float c);
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten2d(const Tensor& a);  // [N,C,H,W] -> [N,C*H*W]; [N,F] passes through

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
// x [N,Fin] * w[Fout,Fin]^T + b[Fout] -> [N,Fout]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; cross-correlation with zero
// padding. Output H' = floor((H + 2*pad - kh) / stride) + 1, same for W.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

Tensor relu(const Tensor& a);     // subgradient at 0 is 0
Tensor sigmoid(const Tensor& a);  // numerically saturating, never NaN/Inf
Tensor global_avg_pool(const Tensor& a);  // [N,C,H,W] -> [N,C]

// Mean binary cross-entropy over [N] probabilities against {0,1} targets.
// Probabilities are clamped to [1e-7, 1 - 1e-7] inside the op; the gradient
// is taken through the clamp (zero outside it).
Tensor bce_loss(const Tensor& p, const Tensor& y);

// Reverse-mode sweep from a scalar root. Visits each reachable node once in
// reverse topological order; leaf gradients accumulate (+=).
void backward(const Tensor& root);

}  // namespace ffcl
