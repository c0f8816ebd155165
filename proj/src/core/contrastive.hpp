#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/network.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace ffcl {

// Cosine embedding loss over a batch of embedding pairs [B,D]:
//   same-class pair:      1 - cos(e1, e2)
//   different-class pair: max(0, cos(e1, e2))
// with cos = (e1.e2) / (|e1||e2| + 1e-12), averaged over the batch.
// A zero-norm embedding makes cos exactly 0 (loss 1 for same, 0 for
// different) and contributes no gradient, keeping training finite.
Tensor cosine_embedding_loss(const Tensor& e1, const Tensor& e2,
                             const std::vector<uint8_t>& same_class);

// One sampled pair: dataset indices plus the same-class flag.
struct PairIdx {
  int a = 0;
  int b = 0;
  bool same = false;
};

enum class PairPolicy { label_aware, uniform };

std::string pair_policy_name(PairPolicy p);
PairPolicy pair_policy_from_name(const std::string& name);

// Deterministic pair stream over a labeled training set. label_aware draws
// exactly round(positive_fraction * count) same-class pairs per draw (flag
// order shuffled); uniform ignores the fraction and pairs two distinct
// uniform indices. A sample is never paired with itself.
class PairSampler {
 public:
  PairSampler(const std::vector<int>& labels, PairPolicy policy, double positive_fraction,
              uint64_t seed);

  // Consumes the stream; consecutive calls continue the sequence.
  std::vector<PairIdx> draw(int64_t count);

 private:
  PairPolicy policy_;
  double positive_fraction_;
  RngStream rng_;
  std::vector<int> labels_;
  std::vector<int> by_class_[2];
  std::vector<int> pairable_;  // indices whose class has >= 2 members
};

struct PairBatch {
  Tensor x1;  // [B,C,H,W]
  Tensor x2;
  std::vector<uint8_t> same;
};

PairBatch gather_pairs(const Dataset& ds, std::span<const PairIdx> pairs);

// joint: every block updates on every batch within one forward pass.
// sequential: block 1 trains for all epochs before block 2 starts.
enum class LocalSchedule { joint, sequential };

std::string local_schedule_name(LocalSchedule s);
LocalSchedule local_schedule_from_name(const std::string& name);

struct ContrastiveStageConfig {
  int epochs = 5;
  int64_t pairs_per_epoch = 0;  // 0 = one pair per training sample
  int batch_size = 10;
  float lr = 1e-4f;
  double positive_fraction = 0.5;
  uint64_t seed = 0;
  LocalSchedule schedule = LocalSchedule::joint;
  PairPolicy sampling = PairPolicy::label_aware;
  bool anneal = false;  // cosine-anneal the stage lr (off: constant lr)
};

// One point of a training curve. block is 1-based for per-block (local)
// losses and -1 for whole-network losses; epoch and batch are 1-based.
struct LossRow {
  int block = -1;
  int epoch = 0;
  int batch = 0;
  double loss = 0.0;
};

struct StageOutput {
  std::vector<LossRow> curve;
  double final_loss = 0.0;
};

// Stage 1: per-block local contrastive pretraining. Each block's loss is
// computed on its embedding tap with the block input detached, so the
// update for block i touches block i's parameters only. One Adam instance
// per block.
StageOutput local_pretrain(BlockStack& stack, const Dataset& train,
                           const ContrastiveStageConfig& cfg);

// Stage 2: global contrastive pretraining over the final embedding with a
// single Adam instance spanning every block parameter.
StageOutput global_pretrain(BlockStack& stack, const Dataset& train,
                            const ContrastiveStageConfig& cfg);

}  // namespace ffcl
