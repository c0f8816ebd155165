#include "core/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "core/error.hpp"

namespace ffcl {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using detail::NodePtr;

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->node() && t->node()->requires_grad) return true;
  return false;
}

// Builds the output node. Parents and the backward rule are only recorded
// when the result participates in a gradient computation; pure inference
// leaves no graph behind.
Tensor make_op(const char* op, Shape shape, std::vector<float> data,
               std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool rg = false;
  if (g_grad_enabled) {
    for (const NodePtr& p : parents)
      if (p->requires_grad) {
        rg = true;
        break;
      }
  }
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(bw);
  }
  return Tensor(std::move(n));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

namespace detail {
bool grad_enabled() { return g_grad_enabled; }
}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  n_ = std::make_shared<Node>();
  n_->shape = std::move(shape);
  n_->data = std::move(data);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f),
                requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value),
                requires_grad);
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!n_) throw ShapeError("shape() on undefined tensor");
  return n_->shape;
}

int64_t Tensor::numel() const { return n_ ? n_->numel() : 0; }

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw ShapeError("dim " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[static_cast<size_t>(i)];
}

std::span<const float> Tensor::data() const {
  if (!n_) throw ShapeError("data() on undefined tensor");
  return n_->data;
}

std::span<float> Tensor::data_mut() {
  if (!n_) throw ShapeError("data_mut() on undefined tensor");
  if (!n_->parents.empty())
    throw ShapeError("data_mut(): refusing to mutate non-leaf tensor (op " +
                     std::string(n_->op) + ")");
  return n_->data;
}

float Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item(): tensor has shape " + shape_str(shape()) + ", expected a scalar");
  return n_->data[0];
}

bool Tensor::requires_grad() const { return n_ && n_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!n_) throw ShapeError("set_requires_grad() on undefined tensor");
  if (!n_->parents.empty())
    throw ShapeError("set_requires_grad(): only leaves can change gradient tracking");
  n_->requires_grad = on;
}

bool Tensor::has_grad() const { return n_ && !n_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!n_) throw ShapeError("grad() on undefined tensor");
  return n_->grad;
}

void Tensor::zero_grad() {
  if (n_) n_->grad.assign(n_->data.size(), 0.0f);
}

Tensor Tensor::detach() const {
  if (!n_) return Tensor();
  auto n = std::make_shared<Node>();
  n->shape = n_->shape;
  n->data = n_->data;  // copy; the boundary must not alias mutable history
  n->op = "detach";
  return Tensor(std::move(n));
}

// --- elementwise / reduction ops -----------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  const auto& av = a.node()->data;
  const auto& bv = b.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int side = 0; side < 2; ++side) {
      Node& p = *self.parents[static_cast<size_t>(side)];
      if (!p.requires_grad) continue;
      auto g = p.grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  const auto& av = a.node()->data;
  const auto& bv = b.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  const auto& av = a.node()->data;
  const auto& bv = b.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, float c) {
  require_defined(a, "scale");
  const auto& av = a.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  return make_op("scale", a.shape(), std::move(out), {a.node()}, [c](Node& self) {
    auto g = self.parents[0]->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
  });
}

// Reductions accumulate in double and round once on store: the result is
// still a deterministic f32, but it stays a smooth function of the inputs,
// which finite-difference verification of the backward rules depends on.
Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double acc = 0.0;
  for (float v : a.node()->data) acc += v;
  return make_op("sum", {1}, {static_cast<float>(acc)}, {a.node()}, [](Node& self) {
    const float g0 = self.grad[0];
    auto g = self.parents[0]->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += g0;
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (float v : a.node()->data) acc += v;
  const float inv = 1.0f / static_cast<float>(a.numel());
  return make_op("mean", {1}, {static_cast<float>(acc / static_cast<double>(a.numel()))},
                 {a.node()}, [inv](Node& self) {
    const float g0 = self.grad[0] * inv;
    auto g = self.parents[0]->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += g0;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  return make_op("reshape", std::move(shape), std::vector<float>(a.node()->data),
                 {a.node()}, [](Node& self) {
                   auto g = self.parents[0]->grad_buf();
                   for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                 });
}

Tensor flatten2d(const Tensor& a) {
  require_defined(a, "flatten2d");
  const Shape& s = a.shape();
  if (s.size() == 2) return a;
  if (s.size() != 4)
    throw ShapeError("flatten2d: expected [N,C,H,W] or [N,F], got " + shape_str(s));
  return reshape(a, {s[0], s[1] * s[2] * s[3]});
}

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeError("matmul: expects two matrices, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const float* A = a.data().data();
  const float* B = b.data().data();
  std::vector<float> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const float* arow = A + static_cast<size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p)
        acc += static_cast<double>(arow[p]) * B[static_cast<size_t>(p) * n + j];
      out[static_cast<size_t>(i) * n + j] = static_cast<float>(acc);
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                 [m, k, n](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pb = *self.parents[1];
                   const float* G = self.grad.data();
                   if (pa.requires_grad) {
                     auto da = pa.grad_buf();
                     const float* B = pb.data.data();
                     for (int i = 0; i < m; ++i)
                       for (int p = 0; p < k; ++p) {
                         float acc = 0.0f;
                         const float* grow = G + static_cast<size_t>(i) * n;
                         const float* brow = B + static_cast<size_t>(p) * n;
                         for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         da[static_cast<size_t>(i) * k + p] += acc;
                       }
                   }
                   if (pb.requires_grad) {
                     auto db = pb.grad_buf();
                     const float* A = pa.data.data();
                     for (int i = 0; i < m; ++i) {
                       const float* grow = G + static_cast<size_t>(i) * n;
                       for (int p = 0; p < k; ++p) {
                         const float aip = A[static_cast<size_t>(i) * k + p];
                         float* dbrow = db.data() + static_cast<size_t>(p) * n;
                         for (int j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
                       }
                     }
                   }
                 });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  require_defined(b, "linear");
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
    throw ShapeError("linear: expected x[N,Fin], w[Fout,Fin], b[Fout]; got " +
                     shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                     shape_str(b.shape()));
  const int N = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (w.dim(1) != fin || b.dim(0) != fout)
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + ", " +
                     shape_str(w.shape()) + ", " + shape_str(b.shape()));
  const float* X = x.data().data();
  const float* W = w.data().data();
  const float* B = b.data().data();
  std::vector<float> out(static_cast<size_t>(N) * fout);
  for (int n = 0; n < N; ++n) {
    const float* xr = X + static_cast<size_t>(n) * fin;
    float* orow = out.data() + static_cast<size_t>(n) * fout;
    for (int o = 0; o < fout; ++o) {
      const float* wr = W + static_cast<size_t>(o) * fin;
      double acc = B[o];
      for (int i = 0; i < fin; ++i) acc += static_cast<double>(xr[i]) * wr[i];
      orow[o] = static_cast<float>(acc);
    }
  }
  return make_op("linear", {N, fout}, std::move(out), {x.node(), w.node(), b.node()},
                 [N, fin, fout](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   Node& pb = *self.parents[2];
                   const float* G = self.grad.data();
                   if (px.requires_grad) {
                     auto dx = px.grad_buf();
                     const float* W = pw.data.data();
                     for (int n = 0; n < N; ++n) {
                       const float* grow = G + static_cast<size_t>(n) * fout;
                       float* dxr = dx.data() + static_cast<size_t>(n) * fin;
                       for (int o = 0; o < fout; ++o) {
                         const float gv = grow[o];
                         const float* wr = W + static_cast<size_t>(o) * fin;
                         for (int i = 0; i < fin; ++i) dxr[i] += gv * wr[i];
                       }
                     }
                   }
                   if (pw.requires_grad) {
                     auto dw = pw.grad_buf();
                     const float* X = px.data.data();
                     for (int n = 0; n < N; ++n) {
                       const float* grow = G + static_cast<size_t>(n) * fout;
                       const float* xr = X + static_cast<size_t>(n) * fin;
                       for (int o = 0; o < fout; ++o) {
                         const float gv = grow[o];
                         float* dwr = dw.data() + static_cast<size_t>(o) * fin;
                         for (int i = 0; i < fin; ++i) dwr[i] += gv * xr[i];
                       }
                     }
                   }
                   if (pb.requires_grad) {
                     auto db = pb.grad_buf();
                     for (int n = 0; n < N; ++n) {
                       const float* grow = G + static_cast<size_t>(n) * fout;
                       for (int o = 0; o < fout; ++o) db[o] += grow[o];
                     }
                   }
                 });
}

// --- convolution ----------------------------------------------------------

namespace {

struct ConvDims {
  int N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  if (x.shape().size() != 4 || w.shape().size() != 4 || b.shape().size() != 1)
    throw ShapeError("conv2d: expected x[N,Ci,H,W], w[Co,Ci,kh,kw], b[Co]; got " +
                     shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                     shape_str(b.shape()));
  ConvDims d{};
  d.N = x.dim(0);
  d.Ci = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (w.dim(1) != d.Ci)
    throw ShapeError("conv2d: input has " + std::to_string(d.Ci) + " channels but kernel " +
                     shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)));
  if (b.dim(0) != d.Co)
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(d.Co) + " output channels");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (d.kh > d.H + 2 * d.pad || d.kw > d.W + 2 * d.pad)
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                     shape_str(x.shape()) + " (pad " + std::to_string(d.pad) + ")");
  d.Ho = (d.H + 2 * d.pad - d.kh) / d.stride + 1;
  d.Wo = (d.W + 2 * d.pad - d.kw) / d.stride + 1;
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  require_defined(x, "conv2d");
  require_defined(w, "conv2d");
  require_defined(b, "conv2d");
  const ConvDims d = conv_dims(x, w, b, stride, padding);
  const float* X = x.data().data();
  const float* Wt = w.data().data();
  const float* B = b.data().data();
  std::vector<float> out(static_cast<size_t>(d.N) * d.Co * d.Ho * d.Wo);

  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Co; ++co) {
      float* oplane = out.data() + (static_cast<size_t>(n) * d.Co + co) * d.Ho * d.Wo;
      for (int oh = 0; oh < d.Ho; ++oh) {
        for (int ow = 0; ow < d.Wo; ++ow) {
          double acc = B[co];
          for (int ci = 0; ci < d.Ci; ++ci) {
            const float* xplane = X + (static_cast<size_t>(n) * d.Ci + ci) * d.H * d.W;
            const float* wplane = Wt + (static_cast<size_t>(co) * d.Ci + ci) * d.kh * d.kw;
            for (int r = 0; r < d.kh; ++r) {
              const int ih = oh * d.stride - d.pad + r;
              if (ih < 0 || ih >= d.H) continue;
              const float* xrow = xplane + static_cast<size_t>(ih) * d.W;
              const float* wrow = wplane + r * d.kw;
              for (int c = 0; c < d.kw; ++c) {
                const int iw = ow * d.stride - d.pad + c;
                if (iw < 0 || iw >= d.W) continue;
                acc += static_cast<double>(wrow[c]) * xrow[iw];
              }
            }
          }
          oplane[static_cast<size_t>(oh) * d.Wo + ow] = static_cast<float>(acc);
        }
      }
    }
  }

  return make_op(
      "conv2d", {d.N, d.Co, d.Ho, d.Wo}, std::move(out), {x.node(), w.node(), b.node()},
      [d](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const float* G = self.grad.data();
        const float* X = px.data.data();
        const float* Wt = pw.data.data();

        if (pb.requires_grad) {
          auto db = pb.grad_buf();
          for (int n = 0; n < d.N; ++n)
            for (int co = 0; co < d.Co; ++co) {
              const float* gplane = G + (static_cast<size_t>(n) * d.Co + co) * d.Ho * d.Wo;
              float acc = 0.0f;
              for (int i = 0; i < d.Ho * d.Wo; ++i) acc += gplane[i];
              db[co] += acc;
            }
        }
        if (pw.requires_grad) {
          auto dw = pw.grad_buf();
          for (int n = 0; n < d.N; ++n)
            for (int co = 0; co < d.Co; ++co) {
              const float* gplane = G + (static_cast<size_t>(n) * d.Co + co) * d.Ho * d.Wo;
              for (int ci = 0; ci < d.Ci; ++ci) {
                const float* xplane = X + (static_cast<size_t>(n) * d.Ci + ci) * d.H * d.W;
                float* dwplane = dw.data() + (static_cast<size_t>(co) * d.Ci + ci) * d.kh * d.kw;
                for (int r = 0; r < d.kh; ++r)
                  for (int c = 0; c < d.kw; ++c) {
                    float acc = 0.0f;
                    for (int oh = 0; oh < d.Ho; ++oh) {
                      const int ih = oh * d.stride - d.pad + r;
                      if (ih < 0 || ih >= d.H) continue;
                      const float* xrow = xplane + static_cast<size_t>(ih) * d.W;
                      const float* grow = gplane + static_cast<size_t>(oh) * d.Wo;
                      for (int ow = 0; ow < d.Wo; ++ow) {
                        const int iw = ow * d.stride - d.pad + c;
                        if (iw < 0 || iw >= d.W) continue;
                        acc += grow[ow] * xrow[iw];
                      }
                    }
                    dwplane[r * d.kw + c] += acc;
                  }
              }
            }
        }
        if (px.requires_grad) {
          auto dx = px.grad_buf();
          for (int n = 0; n < d.N; ++n)
            for (int co = 0; co < d.Co; ++co) {
              const float* gplane = G + (static_cast<size_t>(n) * d.Co + co) * d.Ho * d.Wo;
              for (int ci = 0; ci < d.Ci; ++ci) {
                float* dxplane = dx.data() + (static_cast<size_t>(n) * d.Ci + ci) * d.H * d.W;
                const float* wplane = Wt + (static_cast<size_t>(co) * d.Ci + ci) * d.kh * d.kw;
                for (int r = 0; r < d.kh; ++r)
                  for (int c = 0; c < d.kw; ++c) {
                    const float wv = wplane[r * d.kw + c];
                    if (wv == 0.0f) continue;
                    for (int oh = 0; oh < d.Ho; ++oh) {
                      const int ih = oh * d.stride - d.pad + r;
                      if (ih < 0 || ih >= d.H) continue;
                      float* dxrow = dxplane + static_cast<size_t>(ih) * d.W;
                      const float* grow = gplane + static_cast<size_t>(oh) * d.Wo;
                      for (int ow = 0; ow < d.Wo; ++ow) {
                        const int iw = ow * d.stride - d.pad + c;
                        if (iw < 0 || iw >= d.W) continue;
                        dxrow[iw] += wv * grow[ow];
                      }
                    }
                  }
              }
            }
        }
      });
}

// --- nonlinearities and losses --------------------------------------------

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  const auto& av = a.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
  return make_op("relu", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto g = p.grad_buf();
    for (size_t i = 0; i < g.size(); ++i)
      if (p.data[i] > 0.0f) g[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  const auto& av = a.node()->data;
  std::vector<float> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    const float x = av[i];
    // Split by sign so exp never overflows; saturates to exactly 0 or 1.
    if (x >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-x));
    } else {
      const float e = std::exp(x);
      out[i] = e / (1.0f + e);
    }
  }
  return make_op("sigmoid", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) {
      const float s = self.data[i];
      g[i] += self.grad[i] * s * (1.0f - s);
    }
  });
}

Tensor global_avg_pool(const Tensor& a) {
  require_defined(a, "global_avg_pool");
  if (a.shape().size() != 4)
    throw ShapeError("global_avg_pool: expected [N,C,H,W], got " + shape_str(a.shape()));
  const int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (H * W == 0) throw ShapeError("global_avg_pool: empty spatial extent " + shape_str(a.shape()));
  const float inv = 1.0f / static_cast<float>(H * W);
  const float* X = a.data().data();
  std::vector<float> out(static_cast<size_t>(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* plane = X + (static_cast<size_t>(n) * C + c) * H * W;
      double acc = 0.0;
      for (int i = 0; i < H * W; ++i) acc += plane[i];
      out[static_cast<size_t>(n) * C + c] = static_cast<float>(acc / (H * W));
    }
  return make_op("global_avg_pool", {N, C}, std::move(out), {a.node()},
                 [N, C, H, W, inv](Node& self) {
                   auto g = self.parents[0]->grad_buf();
                   for (int n = 0; n < N; ++n)
                     for (int c = 0; c < C; ++c) {
                       const float gv = self.grad[static_cast<size_t>(n) * C + c] * inv;
                       float* plane = g.data() + (static_cast<size_t>(n) * C + c) * H * W;
                       for (int i = 0; i < H * W; ++i) plane[i] += gv;
                     }
                 });
}

Tensor bce_loss(const Tensor& p, const Tensor& y) {
  require_defined(p, "bce_loss");
  require_defined(y, "bce_loss");
  if (p.shape().size() != 1 || y.shape().size() != 1)
    throw ShapeError("bce_loss: expected two [N] vectors, got " + shape_str(p.shape()) + " and " +
                     shape_str(y.shape()));
  require_same_shape(p, y, "bce_loss");
  const int64_t N = p.numel();
  if (N == 0) throw ShapeError("bce_loss: empty input");
  constexpr float kClampLo = 1e-7f;
  const float kClampHi = 1.0f - 1e-7f;
  const auto& pv = p.node()->data;
  const auto& yv = y.node()->data;
  double acc = 0.0;
  for (int64_t i = 0; i < N; ++i) {
    const float yi = yv[static_cast<size_t>(i)];
    if (yi != 0.0f && yi != 1.0f)
      throw ValidationError("bce_loss: target at index " + std::to_string(i) + " is " +
                            std::to_string(yi) + ", expected 0 or 1");
    const float pi = pv[static_cast<size_t>(i)];
    if (!(pi >= 0.0f && pi <= 1.0f))  // also rejects NaN
      throw ValidationError("bce_loss: probability at index " + std::to_string(i) + " is " +
                            std::to_string(pi) + ", expected within [0,1]");
    const double pc = std::min(std::max(pi, kClampLo), kClampHi);
    acc += yi == 1.0f ? -std::log(pc) : -std::log(1.0 - pc);
  }
  const float invn = 1.0f / static_cast<float>(N);
  return make_op("bce_loss", {1}, {static_cast<float>(acc / static_cast<double>(N))},
                 {p.node(), y.node()},
                 [N, invn, kClampLo, kClampHi](Node& self) {
                   Node& pp = *self.parents[0];
                   if (!pp.requires_grad) return;  // targets get no gradient
                   const Node& py = *self.parents[1];
                   auto g = pp.grad_buf();
                   const float g0 = self.grad[0] * invn;
                   for (int64_t i = 0; i < N; ++i) {
                     const float pi = pp.data[static_cast<size_t>(i)];
                     // The clamp is part of the op: outside it the loss is
                     // locally constant in p, so the gradient is zero.
                     if (pi < kClampLo || pi > kClampHi) continue;
                     const float yi = py.data[static_cast<size_t>(i)];
                     g[static_cast<size_t>(i)] += g0 * (pi - yi) / (pi * (1.0f - pi));
                   }
                 });
}

// --- backward sweep --------------------------------------------------------

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw ShapeError("backward: root must be a scalar, got " +
                     (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  Node* r = root.node().get();
  if (!r->requires_grad) return;  // nothing upstream wants gradients

  // Post-order over the recorded graph; reversing it yields a topological
  // order with the root first, so each node's gradient is complete before
  // its backward rule runs. Each node is visited exactly once even when it
  // feeds several consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(r, 0);
  seen.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  r->grad_buf()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace ffcl
