#include "core/network.hpp"

#include <cmath>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace ffcl {

namespace {

Tensor he_uniform(Shape shape, int fan_in, RngStream& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::vector<float> w(static_cast<size_t>(shape_numel(shape)));
  for (float& v : w) v = rng.uniformf(-limit, limit);
  return Tensor(std::move(shape), std::move(w), /*requires_grad=*/true);
}

}  // namespace

const char* embed_mode_name(EmbedMode m) { return m == EmbedMode::gap ? "gap" : "flatten"; }

EmbedMode embed_mode_from_name(const std::string& name) {
  if (name == "gap") return EmbedMode::gap;
  if (name == "flatten") return EmbedMode::flatten;
  throw ConfigError("embedding mode must be \"gap\" or \"flatten\", got \"" + name + "\"");
}

const char* block_kind_name(BlockSpec::Kind k) {
  return k == BlockSpec::Kind::conv ? "conv" : "linear";
}

BlockSpec::Kind block_kind_from_name(const std::string& name) {
  if (name == "conv") return BlockSpec::Kind::conv;
  if (name == "linear") return BlockSpec::Kind::linear;
  throw ConfigError("block kind must be \"conv\" or \"linear\", got \"" + name + "\"");
}

BlockStack BlockStack::build_zero(const std::vector<BlockSpec>& specs,
                                  std::array<int, 3> input_shape, EmbedMode mode) {
  if (specs.empty()) throw ConfigError("model: at least one block is required");
  if (input_shape[0] < 1 || input_shape[1] < 1 || input_shape[2] < 1)
    throw ConfigError("model: input shape must be positive [C,H,W]");

  BlockStack s;
  s.input_shape_ = input_shape;
  s.mode_ = mode;
  int C = input_shape[0], H = input_shape[1], W = input_shape[2];
  bool flat = false;
  int F = 0;

  for (size_t i = 0; i < specs.size(); ++i) {
    const BlockSpec& sp = specs[i];
    const std::string where = "model block " + std::to_string(i);
    if (sp.out_channels < 1) throw ConfigError(where + ": output size must be >= 1");
    Block b;
    b.spec = sp;
    if (sp.kind == BlockSpec::Kind::conv) {
      if (flat) throw ConfigError(where + ": conv block after a linear block is not supported");
      if (sp.kernel < 1) throw ConfigError(where + ": kernel must be >= 1");
      if (sp.stride < 1) throw ConfigError(where + ": stride must be >= 1");
      const int pad = sp.kernel / 2;
      const int Ho = (H + 2 * pad - sp.kernel) / sp.stride + 1;
      const int Wo = (W + 2 * pad - sp.kernel) / sp.stride + 1;
      if (sp.kernel > H + 2 * pad || sp.kernel > W + 2 * pad || Ho < 1 || Wo < 1)
        throw ConfigError(where + ": kernel " + std::to_string(sp.kernel) + " stride " +
                          std::to_string(sp.stride) + " collapses input " +
                          std::to_string(H) + "x" + std::to_string(W));
      if (sp.use_residual && (sp.out_channels != C || sp.stride != 1))
        throw ConfigError(where + ": residual connection needs matching shape; have " +
                          std::to_string(C) + " -> " + std::to_string(sp.out_channels) +
                          " channels, stride " + std::to_string(sp.stride));
      b.weight = Tensor::zeros({sp.out_channels, C, sp.kernel, sp.kernel}, true);
      b.bias = Tensor::zeros({sp.out_channels}, true);
      C = sp.out_channels;
      H = Ho;
      W = Wo;
      s.out_shapes_.push_back({C, H, W});
      s.flat_.push_back(false);
    } else {
      const int fin = flat ? F : C * H * W;
      if (sp.use_residual && sp.out_channels != fin)
        throw ConfigError(where + ": residual connection needs matching features; have " +
                          std::to_string(fin) + " -> " + std::to_string(sp.out_channels));
      b.weight = Tensor::zeros({sp.out_channels, fin}, true);
      b.bias = Tensor::zeros({sp.out_channels}, true);
      flat = true;
      F = sp.out_channels;
      s.out_shapes_.push_back({F, 1, 1});
      s.flat_.push_back(true);
    }
    s.blocks_.push_back(std::move(b));
  }
  return s;
}

BlockStack BlockStack::build(const std::vector<BlockSpec>& specs, std::array<int, 3> input_shape,
                             uint64_t seed, EmbedMode mode) {
  BlockStack s = build_zero(specs, input_shape, mode);
  for (int i = 0; i < s.block_count(); ++i) {
    Block& b = s.blocks_[static_cast<size_t>(i)];
    RngStream rng(derive_seed(seed, "block-" + std::to_string(i)));
    int fan_in;
    if (b.spec.kind == BlockSpec::Kind::conv)
      fan_in = b.weight.dim(1) * b.spec.kernel * b.spec.kernel;
    else
      fan_in = b.weight.dim(1);
    b.weight = he_uniform(b.weight.shape(), fan_in, rng);
    // bias stays zero
  }
  return s;
}

Block& BlockStack::block(int i) {
  if (i < 0 || i >= block_count())
    throw ShapeError("block index " + std::to_string(i) + " out of range (have " +
                     std::to_string(block_count()) + ")");
  return blocks_[static_cast<size_t>(i)];
}

const Block& BlockStack::block(int i) const {
  return const_cast<BlockStack*>(this)->block(i);
}

Tensor BlockStack::forward_block(int i, const Tensor& x, bool detach_input) const {
  const Block& b = block(i);
  Tensor in = detach_input ? x.detach() : x;
  Tensor pre;
  Tensor residual_src;
  if (b.spec.kind == BlockSpec::Kind::conv) {
    pre = conv2d(in, b.weight, b.bias, b.spec.stride, b.spec.kernel / 2);
    residual_src = in;
  } else {
    Tensor flat = flatten2d(in);
    pre = linear(flat, b.weight, b.bias);
    residual_src = flat;
  }
  if (b.spec.use_residual) pre = add(pre, residual_src);
  return relu(pre);
}

Tensor BlockStack::tap(int i, const Tensor& block_output) const {
  const Block& b = block(i);
  if (b.spec.kind == BlockSpec::Kind::linear) return block_output;
  return mode_ == EmbedMode::gap ? global_avg_pool(block_output) : flatten2d(block_output);
}

Tensor BlockStack::embed_at_block(int i, const Tensor& x) const {
  block(i);  // validates the index
  Tensor h = x;
  for (int j = 0; j <= i; ++j) h = forward_block(j, h, /*detach_input=*/j == i && j > 0);
  return tap(i, h);
}

Tensor BlockStack::embed_global(const Tensor& x) const {
  Tensor h = x;
  for (int j = 0; j < block_count(); ++j) h = forward_block(j, h, false);
  return tap(block_count() - 1, h);
}

int BlockStack::embed_dim_at(int i) const {
  const Block& b = block(i);
  const auto& os = out_shapes_[static_cast<size_t>(i)];
  if (b.spec.kind == BlockSpec::Kind::linear) return os[0];
  return mode_ == EmbedMode::gap ? os[0] : os[0] * os[1] * os[2];
}

std::vector<Tensor> BlockStack::parameters() {
  std::vector<Tensor> out;
  for (Block& b : blocks_) {
    out.push_back(b.weight);
    out.push_back(b.bias);
  }
  return out;
}

std::vector<Tensor> BlockStack::block_parameters(int i) { return block(i).parameters(); }

int64_t BlockStack::parameter_count() const {
  int64_t n = 0;
  for (const Block& b : blocks_) n += b.parameter_count();
  return n;
}

std::vector<BlockSpec> BlockStack::specs() const {
  std::vector<BlockSpec> out;
  for (const Block& b : blocks_) out.push_back(b.spec);
  return out;
}

std::array<int, 3> BlockStack::output_shape_at(int i) const {
  block(i);
  return out_shapes_[static_cast<size_t>(i)];
}

ClassifierHead ClassifierHead::init(int dim, uint64_t seed) {
  if (dim < 1) throw ConfigError("classifier head: embedding dim must be >= 1");
  RngStream rng(derive_seed(seed, "head"));
  ClassifierHead h;
  const float limit = std::sqrt(6.0f / static_cast<float>(dim));
  std::vector<float> w(static_cast<size_t>(dim));
  for (float& v : w) v = rng.uniformf(-limit, limit);
  h.weight = Tensor({1, dim}, std::move(w), true);
  h.bias = Tensor::zeros({1}, true);
  return h;
}

Tensor classify(const ClassifierHead& head, const Tensor& embedding) {
  if (embedding.shape().size() != 2)
    throw ShapeError("classify: expected embeddings [N,D], got " + shape_str(embedding.shape()));
  if (embedding.dim(1) != head.weight.dim(1))
    throw ShapeError("classify: embedding dim " + std::to_string(embedding.dim(1)) +
                     " does not match head " + shape_str(head.weight.shape()));
  Tensor logits = linear(embedding, head.weight, head.bias);  // [N,1]
  return sigmoid(reshape(logits, {embedding.dim(0)}));
}

uint64_t param_fingerprint(const BlockStack& stack, int i) {
  const Block& b = stack.block(i);
  auto w = b.weight.data();
  auto bi = b.bias.data();
  uint64_t h = fnv1a64(w.data(), w.size_bytes());
  return fnv1a64(bi.data(), bi.size_bytes(), h);
}

std::vector<uint64_t> param_fingerprints(const BlockStack& stack) {
  std::vector<uint64_t> out;
  for (int i = 0; i < stack.block_count(); ++i) out.push_back(param_fingerprint(stack, i));
  return out;
}

}  // namespace ffcl
