#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ffcl {

struct BlockSpec {
  enum class Kind { conv, linear };
  Kind kind = Kind::conv;
  int out_channels = 0;     // output features for linear blocks
  int kernel = 3;           // conv only; padding is kernel/2
  int stride = 1;           // conv only
  bool use_residual = false;  // requires identical in/out shape
};

// How an embedding is read off a conv block's activation.
enum class EmbedMode { gap, flatten };

struct Block {
  BlockSpec spec;
  Tensor weight;
  Tensor bias;

  std::vector<Tensor> parameters() { return {weight, bias}; }
  int64_t parameter_count() const { return weight.numel() + bias.numel(); }
};

// A stack of conv/linear blocks (each conv_or_linear -> [+input] -> relu).
// Blocks are indexed from 0. The stack supports two traversal styles:
// embed_at_block() cuts the gradient path at the named block's input so a
// loss on its embedding trains that block alone, while embed_global() keeps
// the whole chain differentiable.
class BlockStack {
 public:
  BlockStack() = default;

  // He-uniform weights (limit sqrt(6/fan_in)), zero biases, seeded per block.
  static BlockStack build(const std::vector<BlockSpec>& specs, std::array<int, 3> input_shape,
                          uint64_t seed, EmbedMode mode = EmbedMode::gap);
  // Zero-initialized skeleton; used when parameters are loaded from a file.
  static BlockStack build_zero(const std::vector<BlockSpec>& specs,
                               std::array<int, 3> input_shape, EmbedMode mode = EmbedMode::gap);

  int block_count() const { return static_cast<int>(blocks_.size()); }
  Block& block(int i);
  const Block& block(int i) const;

  // Runs block i on x. With detach_input the input is copied out of the
  // recorded graph first, so gradients stop at the block boundary.
  Tensor forward_block(int i, const Tensor& x, bool detach_input) const;

  // Embedding read off block i's activation: conv blocks pool (or flatten)
  // spatially, linear blocks pass through.
  Tensor tap(int i, const Tensor& block_output) const;

  // Runs blocks 0..i with the gradient path cut at block i's input, then
  // taps block i. A loss on the result reaches only block i's parameters.
  Tensor embed_at_block(int i, const Tensor& x) const;

  // Runs the full stack without detachment and taps the last block.
  Tensor embed_global(const Tensor& x) const;

  int embed_dim() const { return embed_dim_at(block_count() - 1); }
  int embed_dim_at(int i) const;

  std::vector<Tensor> parameters();
  std::vector<Tensor> block_parameters(int i);
  int64_t parameter_count() const;

  const std::array<int, 3>& input_shape() const { return input_shape_; }
  EmbedMode embed_mode() const { return mode_; }
  std::vector<BlockSpec> specs() const;
  // Activation shape after block i: {C,H,W} for conv, {F,1,1} for linear.
  std::array<int, 3> output_shape_at(int i) const;

 private:
  std::vector<Block> blocks_;
  std::vector<std::array<int, 3>> out_shapes_;
  std::array<int, 3> input_shape_{0, 0, 0};
  EmbedMode mode_ = EmbedMode::gap;
  std::vector<bool> flat_;  // activation is [N,F] after this block
};

// Single sigmoid unit on top of an embedding.
struct ClassifierHead {
  Tensor weight;  // [1, D]
  Tensor bias;    // [1]

  static ClassifierHead init(int dim, uint64_t seed);
  std::vector<Tensor> parameters() { return {weight, bias}; }
};

// sigmoid(embedding * w^T + b) -> probabilities [N].
Tensor classify(const ClassifierHead& head, const Tensor& embedding);

// FNV-1a over the block's raw parameter bytes; bit-exact identity check.
uint64_t param_fingerprint(const BlockStack& stack, int i);
std::vector<uint64_t> param_fingerprints(const BlockStack& stack);

const char* embed_mode_name(EmbedMode m);
EmbedMode embed_mode_from_name(const std::string& name);
const char* block_kind_name(BlockSpec::Kind k);
BlockSpec::Kind block_kind_from_name(const std::string& name);

}  // namespace ffcl
