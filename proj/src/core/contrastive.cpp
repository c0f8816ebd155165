#include "core/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "core/error.hpp"
#include "core/optim.hpp"

namespace ffcl {

namespace {

void require_embeddings(const Tensor& e, const char* which) {
  if (!e.defined() || e.shape().size() != 2)
    throw ShapeError(std::string("cosine_embedding_loss: ") + which + " must be [B,D], got " +
                     (e.defined() ? shape_str(e.shape()) : std::string("undefined")));
  for (float v : e.data())
    if (!std::isfinite(v))
      throw ValidationError(std::string("cosine_embedding_loss: non-finite value in ") + which);
}

}  // namespace

Tensor cosine_embedding_loss(const Tensor& e1, const Tensor& e2,
                             const std::vector<uint8_t>& same_class) {
  require_embeddings(e1, "e1");
  require_embeddings(e2, "e2");
  if (e1.shape() != e2.shape())
    throw ShapeError("cosine_embedding_loss: shape mismatch " + shape_str(e1.shape()) + " vs " +
                     shape_str(e2.shape()));
  const int B = e1.dim(0);
  const int D = e1.dim(1);
  if (B < 1 || D < 1)
    throw ShapeError("cosine_embedding_loss: need B >= 1 and D >= 1, got " +
                     shape_str(e1.shape()));
  if (static_cast<int>(same_class.size()) != B)
    throw ShapeError("cosine_embedding_loss: " + std::to_string(same_class.size()) +
                     " flags for batch of " + std::to_string(B));

  // Per-row scalars are accumulated in double so the loss value tracks a
  // direct evaluation of the formula to well under 1e-6 even at D=64.
  const std::span<const float> a = e1.data();
  const std::span<const float> b = e2.data();
  std::vector<double> dot(B), n1(B), n2(B), denom(B), cosv(B);
  double total = 0.0;
  for (int r = 0; r < B; ++r) {
    double d = 0.0, s1 = 0.0, s2 = 0.0;
    const int64_t off = static_cast<int64_t>(r) * D;
    for (int k = 0; k < D; ++k) {
      const double x = a[off + k];
      const double y = b[off + k];
      d += x * y;
      s1 += x * x;
      s2 += y * y;
    }
    dot[r] = d;
    n1[r] = std::sqrt(s1);
    n2[r] = std::sqrt(s2);
    denom[r] = n1[r] * n2[r] + 1e-12;
    cosv[r] = d / denom[r];
    total += same_class[r] ? 1.0 - cosv[r] : std::max(0.0, cosv[r]);
  }
  const double value = total / B;

  auto out = std::make_shared<detail::Node>();
  out->shape = {1};
  out->data = {static_cast<float>(value)};
  out->op = "cosine_embedding_loss";
  const bool rg =
      detail::grad_enabled() && (e1.node()->requires_grad || e2.node()->requires_grad);
  if (rg) {
    out->requires_grad = true;
    out->parents = {e1.node(), e2.node()};
    std::vector<uint8_t> flags = same_class;
    out->backward = [B, D, flags = std::move(flags), dot, n1, n2, denom,
                     cosv](detail::Node& self) {
      const double g = self.grad[0];
      detail::Node& p1 = *self.parents[0];
      detail::Node& p2 = *self.parents[1];
      std::span<float> g1 = p1.requires_grad ? p1.grad_buf() : std::span<float>{};
      std::span<float> g2 = p2.requires_grad ? p2.grad_buf() : std::span<float>{};
      for (int r = 0; r < B; ++r) {
        // The guarded denominator makes a zero-norm row a constant of the
        // inputs in every direction that matters; skip it.
        if (n1[r] == 0.0 || n2[r] == 0.0) continue;
        double dcos;  // d(row loss) / d(cos)
        if (flags[r]) {
          dcos = -1.0;
        } else if (cosv[r] > 0.0) {
          dcos = 1.0;  // max(0, cos) passes the gradient only when cos > 0
        } else {
          continue;
        }
        const double coef = g * dcos / B;
        const double inv_denom = 1.0 / denom[r];
        const double t1 = dot[r] * (n2[r] / n1[r]) * inv_denom * inv_denom;
        const double t2 = dot[r] * (n1[r] / n2[r]) * inv_denom * inv_denom;
        const int64_t off = static_cast<int64_t>(r) * D;
        for (int k = 0; k < D; ++k) {
          const double x = p1.data[off + k];
          const double y = p2.data[off + k];
          if (!g1.empty()) g1[off + k] += static_cast<float>(coef * (y * inv_denom - t1 * x));
          if (!g2.empty()) g2[off + k] += static_cast<float>(coef * (x * inv_denom - t2 * y));
        }
      }
    };
  }
  return Tensor(std::move(out));
}

std::string pair_policy_name(PairPolicy p) {
  return p == PairPolicy::label_aware ? "label_aware" : "uniform";
}

PairPolicy pair_policy_from_name(const std::string& name) {
  if (name == "label_aware") return PairPolicy::label_aware;
  if (name == "uniform") return PairPolicy::uniform;
  throw ConfigError("unknown pair sampling policy '" + name +
                    "' (expected label_aware or uniform)");
}

std::string local_schedule_name(LocalSchedule s) {
  return s == LocalSchedule::joint ? "joint" : "sequential";
}

LocalSchedule local_schedule_from_name(const std::string& name) {
  if (name == "joint") return LocalSchedule::joint;
  if (name == "sequential") return LocalSchedule::sequential;
  throw ConfigError("unknown local schedule '" + name + "' (expected joint or sequential)");
}

PairSampler::PairSampler(const std::vector<int>& labels, PairPolicy policy,
                         double positive_fraction, uint64_t seed)
    : policy_(policy), positive_fraction_(positive_fraction), rng_(seed), labels_(labels) {
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
    throw ValidationError("pair sampler: positive_fraction must lie in [0,1], got " +
                          std::to_string(positive_fraction));
  if (labels_.size() < 2)
    throw SamplingError("pair sampler: need at least 2 samples to form pairs, got " +
                        std::to_string(labels_.size()));
  for (size_t i = 0; i < labels_.size(); ++i) {
    const int l = labels_[i];
    if (l != 0 && l != 1)
      throw ValidationError("pair sampler: label " + std::to_string(l) + " at index " +
                            std::to_string(i) + " is not binary");
    by_class_[l].push_back(static_cast<int>(i));
  }
  for (auto& cls : by_class_)
    if (cls.size() >= 2) pairable_.insert(pairable_.end(), cls.begin(), cls.end());
  if (policy_ == PairPolicy::label_aware && positive_fraction_ < 1.0 &&
      (by_class_[0].empty() || by_class_[1].empty()))
    throw SamplingError(
        "pair sampler: different-class pairs requested but only one class is present");
}

std::vector<PairIdx> PairSampler::draw(int64_t count) {
  if (count < 0) throw ValidationError("pair sampler: negative draw count");
  std::vector<PairIdx> out;
  out.reserve(static_cast<size_t>(count));
  if (count == 0) return out;

  if (policy_ == PairPolicy::uniform) {
    const int64_t n = static_cast<int64_t>(labels_.size());
    for (int64_t k = 0; k < count; ++k) {
      const int a = static_cast<int>(rng_.uniform_int(0, n - 1));
      int b = a;
      while (b == a) b = static_cast<int>(rng_.uniform_int(0, n - 1));
      out.push_back({a, b, labels_[static_cast<size_t>(a)] == labels_[static_cast<size_t>(b)]});
    }
    return out;
  }

  const int64_t n_same = std::llround(positive_fraction_ * static_cast<double>(count));
  std::vector<uint8_t> flags(static_cast<size_t>(count), 0);
  std::fill(flags.begin(), flags.begin() + n_same, uint8_t{1});
  rng_.shuffle(flags);

  for (uint8_t want_same : flags) {
    if (want_same) {
      if (pairable_.empty())
        throw SamplingError("pair sampler: no class has 2 samples for a same-class pair");
      const int a =
          pairable_[static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(pairable_.size()) - 1))];
      const auto& cls = by_class_[labels_[static_cast<size_t>(a)]];
      int b = a;
      while (b == a)
        b = cls[static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(cls.size()) - 1))];
      out.push_back({a, b, true});
    } else {
      const int a =
          static_cast<int>(rng_.uniform_int(0, static_cast<int64_t>(labels_.size()) - 1));
      const auto& other = by_class_[1 - labels_[static_cast<size_t>(a)]];
      if (other.empty())
        throw SamplingError("pair sampler: both classes required for a different-class pair");
      const int b =
          other[static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(other.size()) - 1))];
      out.push_back({a, b, false});
    }
  }
  return out;
}

PairBatch gather_pairs(const Dataset& ds, std::span<const PairIdx> pairs) {
  if (pairs.empty()) throw ValidationError("gather_pairs: empty pair batch");
  std::vector<int> ia, ib;
  ia.reserve(pairs.size());
  ib.reserve(pairs.size());
  PairBatch pb;
  pb.same.reserve(pairs.size());
  for (const PairIdx& p : pairs) {
    ia.push_back(p.a);
    ib.push_back(p.b);
    pb.same.push_back(p.same ? 1 : 0);
  }
  pb.x1 = gather_images(ds, ia);
  pb.x2 = gather_images(ds, ib);
  return pb;
}

namespace {

struct BatchPlan {
  int64_t per_epoch = 0;
  int64_t batches = 0;
};

BatchPlan plan_batches(const ContrastiveStageConfig& cfg, const Dataset& train,
                       const char* stage) {
  if (cfg.epochs < 0)
    throw ConfigError(std::string(stage) + ": epochs must be >= 0");
  if (cfg.batch_size < 1)
    throw ConfigError(std::string(stage) + ": batch_size must be >= 1");
  if (cfg.pairs_per_epoch < 0)
    throw ConfigError(std::string(stage) + ": pairs_per_epoch must be >= 0");
  BatchPlan plan;
  plan.per_epoch = cfg.pairs_per_epoch > 0 ? cfg.pairs_per_epoch : train.size();
  if (plan.per_epoch <= 0)
    throw ValidationError(std::string(stage) + ": no training samples to pair");
  plan.batches = (plan.per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  return plan;
}

void require_finite_loss(double v, const char* stage, int block, int epoch, int batch) {
  if (std::isfinite(v)) return;
  std::string where = std::string(stage) + " pretraining diverged (non-finite loss) at epoch " +
                      std::to_string(epoch) + ", batch " + std::to_string(batch);
  if (block > 0) where += ", block " + std::to_string(block);
  throw TrainingError(where);
}

}  // namespace

StageOutput local_pretrain(BlockStack& stack, const Dataset& train,
                           const ContrastiveStageConfig& cfg) {
  const BatchPlan plan = plan_batches(cfg, train, "local pretraining");
  const int n = stack.block_count();
  StageOutput out;
  if (cfg.epochs == 0) return out;

  // Local and global stages share the pair-stream tag so a 1-block stack
  // follows the identical trajectory under either stage.
  PairSampler sampler(train.labels, cfg.sampling, cfg.positive_fraction,
                      derive_seed(cfg.seed, "pairs"));
  const int64_t steps_per_pass = static_cast<int64_t>(cfg.epochs) * plan.batches;
  CosineSchedule sched(cfg.lr, 0.0, steps_per_pass);

  if (cfg.schedule == LocalSchedule::joint) {
    std::vector<Adam> opts;
    opts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      opts.emplace_back(stack.block_parameters(i), AdamConfig{.lr = cfg.lr});
    int64_t step = 0;
    std::vector<double> last(static_cast<size_t>(n), 0.0);
    for (int e = 1; e <= cfg.epochs; ++e) {
      int64_t left = plan.per_epoch;
      for (int64_t b = 1; b <= plan.batches; ++b) {
        const int64_t take = std::min<int64_t>(cfg.batch_size, left);
        left -= take;
        const auto pairs = sampler.draw(take);
        const PairBatch pb = gather_pairs(train, pairs);
        if (cfg.anneal) {
          const float lr_now = static_cast<float>(sched.lr_at(step));
          for (Adam& opt : opts) opt.set_lr(lr_now);
        }
        // One forward pass; every block's input is detached, so the summed
        // loss backpropagates into disjoint per-block parameter sets.
        Tensor h1 = pb.x1;
        Tensor h2 = pb.x2;
        Tensor total;
        for (int i = 0; i < n; ++i) {
          h1 = stack.forward_block(i, h1, i > 0);
          h2 = stack.forward_block(i, h2, i > 0);
          const Tensor li = cosine_embedding_loss(stack.tap(i, h1), stack.tap(i, h2), pb.same);
          last[static_cast<size_t>(i)] = li.item();
          require_finite_loss(last[static_cast<size_t>(i)], "local", i + 1, e,
                              static_cast<int>(b));
          out.curve.push_back({i + 1, e, static_cast<int>(b), last[static_cast<size_t>(i)]});
          total = total.defined() ? add(total, li) : li;
        }
        backward(total);
        for (Adam& opt : opts) opt.step();
        ++step;
      }
    }
    double s = 0.0;
    for (double v : last) s += v;
    out.final_loss = s / n;  // blocks' losses on the final batch
  } else {
    // Sequential: each block trains for the full epoch budget before the
    // next one starts; earlier blocks act as a frozen feature extractor.
    for (int i = 0; i < n; ++i) {
      Adam opt(stack.block_parameters(i), AdamConfig{.lr = cfg.lr});
      int64_t step = 0;
      for (int e = 1; e <= cfg.epochs; ++e) {
        int64_t left = plan.per_epoch;
        for (int64_t b = 1; b <= plan.batches; ++b) {
          const int64_t take = std::min<int64_t>(cfg.batch_size, left);
          left -= take;
          const auto pairs = sampler.draw(take);
          const PairBatch pb = gather_pairs(train, pairs);
          if (cfg.anneal) opt.set_lr(static_cast<float>(sched.lr_at(step)));
          Tensor h1 = pb.x1;
          Tensor h2 = pb.x2;
          {
            NoGradGuard ng;
            for (int j = 0; j < i; ++j) {
              h1 = stack.forward_block(j, h1, false);
              h2 = stack.forward_block(j, h2, false);
            }
          }
          h1 = stack.forward_block(i, h1, i > 0);
          h2 = stack.forward_block(i, h2, i > 0);
          const Tensor li = cosine_embedding_loss(stack.tap(i, h1), stack.tap(i, h2), pb.same);
          const double v = li.item();
          require_finite_loss(v, "local", i + 1, e, static_cast<int>(b));
          out.curve.push_back({i + 1, e, static_cast<int>(b), v});
          backward(li);
          opt.step();
          ++step;
          out.final_loss = v;
        }
      }
    }
  }
  return out;
}

StageOutput global_pretrain(BlockStack& stack, const Dataset& train,
                            const ContrastiveStageConfig& cfg) {
  const BatchPlan plan = plan_batches(cfg, train, "global pretraining");
  StageOutput out;
  if (cfg.epochs == 0) return out;

  PairSampler sampler(train.labels, cfg.sampling, cfg.positive_fraction,
                      derive_seed(cfg.seed, "pairs"));
  Adam opt(stack.parameters(), AdamConfig{.lr = cfg.lr});
  CosineSchedule sched(cfg.lr, 0.0, static_cast<int64_t>(cfg.epochs) * plan.batches);
  int64_t step = 0;
  for (int e = 1; e <= cfg.epochs; ++e) {
    int64_t left = plan.per_epoch;
    for (int64_t b = 1; b <= plan.batches; ++b) {
      const int64_t take = std::min<int64_t>(cfg.batch_size, left);
      left -= take;
      const auto pairs = sampler.draw(take);
      const PairBatch pb = gather_pairs(train, pairs);
      if (cfg.anneal) opt.set_lr(static_cast<float>(sched.lr_at(step)));
      const Tensor e1 = stack.embed_global(pb.x1);
      const Tensor e2 = stack.embed_global(pb.x2);
      const Tensor loss = cosine_embedding_loss(e1, e2, pb.same);
      const double v = loss.item();
      require_finite_loss(v, "global", -1, e, static_cast<int>(b));
      out.curve.push_back({-1, e, static_cast<int>(b), v});
      backward(loss);
      opt.step();
      ++step;
      out.final_loss = v;
    }
  }
  return out;
}

}  // namespace ffcl
