#include <cmath>
#include <cstring>
#include <set>

#include "core/error.hpp"
#include "core/network.hpp"
#include "core/optim.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace ffcl;

namespace {

std::vector<BlockSpec> two_conv_specs() {
  BlockSpec a;
  a.kind = BlockSpec::Kind::conv;
  a.out_channels = 8;
  a.kernel = 3;
  a.stride = 1;
  BlockSpec b = a;
  b.out_channels = 8;
  return {a, b};
}

Tensor rand_image(uint64_t seed, int n, int c, int h, int w) {
  RngStream rng(seed);
  std::vector<float> v(static_cast<size_t>(n) * c * h * w);
  for (float& x : v) x = rng.uniformf(0.0f, 1.0f);
  return Tensor({n, c, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("build is a pure function of specs, input shape, and seed") {
  auto specs = two_conv_specs();
  BlockStack a = BlockStack::build(specs, {1, 8, 8}, 7);
  BlockStack b = BlockStack::build(specs, {1, 8, 8}, 7);
  REQUIRE(a.block_count() == b.block_count());
  CHECK(param_fingerprints(a) == param_fingerprints(b));

  BlockStack c = BlockStack::build(specs, {1, 8, 8}, 8);
  CHECK(param_fingerprints(a) != param_fingerprints(c));
}

TEST_CASE("parameter count: conv(1->8,k3) + conv(8->8,k3) = 664") {
  // 8*1*3*3 + 8 = 80, 8*8*3*3 + 8 = 584, total 664
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 1);
  CHECK(s.parameter_count() == 664);
  CHECK(s.block(0).parameter_count() == 80);
  CHECK(s.block(1).parameter_count() == 584);
}

TEST_CASE("he-uniform init bounds and zero biases") {
  BlockSpec spec;
  spec.kind = BlockSpec::Kind::conv;
  spec.out_channels = 16;
  spec.kernel = 3;
  BlockStack s = BlockStack::build({spec}, {4, 8, 8}, 3);
  const float limit = std::sqrt(6.0f / (4 * 3 * 3));
  bool any_nonzero = false;
  for (float v : s.block(0).weight.data()) {
    CHECK(std::fabs(v) <= limit);
    any_nonzero = any_nonzero || v != 0.0f;
  }
  CHECK(any_nonzero);
  for (float v : s.block(0).bias.data()) CHECK(v == 0.0f);
}

TEST_CASE("output shapes follow stride and kind") {
  BlockSpec c1;
  c1.kind = BlockSpec::Kind::conv;
  c1.out_channels = 8;
  c1.kernel = 3;
  c1.stride = 1;
  BlockSpec c2 = c1;
  c2.out_channels = 16;
  c2.stride = 2;
  BlockSpec l3;
  l3.kind = BlockSpec::Kind::linear;
  l3.out_channels = 10;
  BlockStack s = BlockStack::build({c1, c2, l3}, {1, 8, 8}, 5);
  CHECK(s.output_shape_at(0) == std::array<int, 3>{8, 8, 8});
  CHECK(s.output_shape_at(1) == std::array<int, 3>{16, 4, 4});
  CHECK(s.output_shape_at(2) == std::array<int, 3>{10, 1, 1});
  CHECK(s.embed_dim_at(0) == 8);   // gap mode: channels
  CHECK(s.embed_dim_at(1) == 16);
  CHECK(s.embed_dim_at(2) == 10);  // linear passthrough

  BlockStack f = BlockStack::build({c1, c2}, {1, 8, 8}, 5, EmbedMode::flatten);
  CHECK(f.embed_dim_at(0) == 8 * 8 * 8);
  CHECK(f.embed_dim_at(1) == 16 * 4 * 4);
}

TEST_CASE("residual blocks require identical in/out shapes") {
  BlockSpec ok;
  ok.kind = BlockSpec::Kind::conv;
  ok.out_channels = 4;
  ok.use_residual = true;
  CHECK_NOTHROW(BlockStack::build({ok}, {4, 8, 8}, 1));

  BlockSpec bad = ok;  // channel change breaks the identity shortcut
  CHECK_THROWS_AS(BlockStack::build({bad}, {3, 8, 8}, 1), ConfigError);

  BlockSpec bad2 = ok;
  bad2.stride = 2;  // spatial change breaks it too
  CHECK_THROWS_AS(BlockStack::build({bad2}, {4, 8, 8}, 1), ConfigError);
}

TEST_CASE("forward_block with zero weights gives zero output") {
  BlockStack s = BlockStack::build_zero(two_conv_specs(), {1, 8, 8}, EmbedMode::gap);
  Tensor x = rand_image(11, 2, 1, 8, 8);
  Tensor out = s.forward_block(0, x, false);
  for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("embed_at_block on a constant activation map yields that constant") {
  // Zero weights, bias c: conv output is c everywhere, relu keeps c>0,
  // gap pools the constant map to exactly c.
  BlockStack s = BlockStack::build_zero(two_conv_specs(), {1, 8, 8}, EmbedMode::gap);
  for (float& v : s.block(0).bias.data_mut()) v = 0.75f;
  Tensor x = rand_image(12, 3, 1, 8, 8);
  Tensor e = s.embed_at_block(0, x);
  REQUIRE(e.shape() == Shape{3, 8});
  for (float v : e.data()) CHECK(v == doctest::Approx(0.75f));
}

TEST_CASE("embed_at_block equals manual composition of forward_block and tap") {
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 21);
  Tensor x = rand_image(13, 2, 1, 8, 8);
  Tensor manual = s.tap(1, s.forward_block(1, s.forward_block(0, x, false), true));
  Tensor direct = s.embed_at_block(1, x);
  REQUIRE(manual.numel() == direct.numel());
  for (int64_t i = 0; i < manual.numel(); ++i) CHECK(manual.data()[i] == direct.data()[i]);
}

TEST_CASE("embed_global with zero parameters is zero") {
  BlockStack s = BlockStack::build_zero(two_conv_specs(), {1, 8, 8}, EmbedMode::gap);
  Tensor e = s.embed_global(rand_image(14, 2, 1, 8, 8));
  for (float v : e.data()) CHECK(v == 0.0f);
}

TEST_CASE("single-block stack: embed_global bitwise equals embed_at_block(0)") {
  auto specs = two_conv_specs();
  specs.resize(1);
  BlockStack s = BlockStack::build(specs, {1, 8, 8}, 31);
  Tensor x = rand_image(15, 2, 1, 8, 8);
  Tensor a = s.embed_global(x);
  Tensor b = s.embed_at_block(0, x);
  REQUIRE(a.numel() == b.numel());
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0);
}

TEST_CASE("block parameters partition the stack parameters") {
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 41);
  std::set<const void*> seen;
  int64_t total = 0;
  for (int i = 0; i < s.block_count(); ++i) {
    for (Tensor& t : s.block_parameters(i)) {
      CHECK(seen.insert(t.node().get()).second);  // no tensor in two blocks
      total += t.numel();
    }
  }
  CHECK(total == s.parameter_count());
  CHECK(seen.size() == s.parameters().size());
}

TEST_CASE("loss on embed_at_block(i) trains block i alone") {
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 51);
  Tensor x = rand_image(16, 2, 1, 8, 8);

  // gradient reaches only block 1's parameters
  backward(sum(s.embed_at_block(1, x)));
  for (Tensor& t : s.block_parameters(0)) CHECK_FALSE(t.has_grad());
  bool any = false;
  for (Tensor& t : s.block_parameters(1))
    if (t.has_grad())
      for (float g : t.grad()) any = any || g != 0.0f;
  CHECK(any);

  // an optimizer step on that gradient leaves block 0 bit-identical
  const auto before = param_fingerprints(s);
  Adam opt(s.block_parameters(1), {});
  opt.step();
  const auto after = param_fingerprints(s);
  CHECK(after[0] == before[0]);
  CHECK(after[1] != before[1]);
}

TEST_CASE("embed_global reaches every block's parameters") {
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 61);
  backward(sum(s.embed_global(rand_image(17, 2, 1, 8, 8))));
  for (int i = 0; i < s.block_count(); ++i) {
    bool any = false;
    for (Tensor& t : s.block_parameters(i))
      if (t.has_grad())
        for (float g : t.grad()) any = any || g != 0.0f;
    INFO("block ", i);
    CHECK(any);
  }
}

TEST_CASE("classifier head oracles") {
  SUBCASE("zero weights and bias give probability one half") {
    ClassifierHead h = ClassifierHead::init(8, 3);
    for (float& v : h.weight.data_mut()) v = 0.0f;
    for (float& v : h.bias.data_mut()) v = 0.0f;
    Tensor e({2, 8}, std::vector<float>(16, 0.3f));
    Tensor p = classify(h, e);
    REQUIRE(p.shape() == Shape{2});
    for (float v : p.data()) CHECK(v == 0.5f);
  }
  SUBCASE("aligned embedding at large scale saturates to one") {
    ClassifierHead h = ClassifierHead::init(4, 3);
    for (float& v : h.weight.data_mut()) v = 10.0f;
    for (float& v : h.bias.data_mut()) v = 0.0f;
    Tensor e({1, 4}, {5, 5, 5, 5});
    CHECK(classify(h, e).data()[0] == 1.0f);
  }
  SUBCASE("matches manual matmul + sigmoid") {
    ClassifierHead h = ClassifierHead::init(3, 9);
    Tensor e({2, 3}, {0.1f, -0.4f, 0.9f, 1.2f, 0.0f, -0.3f});
    Tensor p = classify(h, e);
    for (int n = 0; n < 2; ++n) {
      double z = h.bias.data()[0];
      for (int k = 0; k < 3; ++k) z += double(e.data()[n * 3 + k]) * h.weight.data()[k];
      CHECK(p.data()[n] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-6));
    }
  }
}

TEST_CASE("fingerprints: identity, sensitivity, isolation") {
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 71);
  const uint64_t fp0 = param_fingerprint(s, 0);
  CHECK(param_fingerprint(s, 0) == fp0);  // unchanged block, identical print

  s.block(0).weight.data_mut()[5] += 1e-6f;  // single tiny perturbation
  CHECK(param_fingerprint(s, 0) != fp0);

  // perturbing block 0 leaves block 1's print untouched
  const uint64_t fp1 = param_fingerprint(s, 1);
  s.block(0).weight.data_mut()[9] += 1.0f;
  CHECK(param_fingerprint(s, 1) == fp1);
}

TEST_CASE("name round trips for enums") {
  CHECK(embed_mode_from_name(embed_mode_name(EmbedMode::gap)) == EmbedMode::gap);
  CHECK(embed_mode_from_name(embed_mode_name(EmbedMode::flatten)) == EmbedMode::flatten);
  CHECK(block_kind_from_name(block_kind_name(BlockSpec::Kind::conv)) == BlockSpec::Kind::conv);
  CHECK(block_kind_from_name(block_kind_name(BlockSpec::Kind::linear)) ==
        BlockSpec::Kind::linear);
  CHECK_THROWS_AS(embed_mode_from_name("bogus"), ConfigError);
  CHECK_THROWS_AS(block_kind_from_name("bogus"), ConfigError);
}

TEST_CASE("stack validation errors") {
  CHECK_THROWS_AS(BlockStack::build({}, {1, 8, 8}, 1), ConfigError);  // no blocks
  BlockSpec bad;
  bad.out_channels = 0;
  CHECK_THROWS_AS(BlockStack::build({bad}, {1, 8, 8}, 1), ConfigError);
  BlockStack s = BlockStack::build(two_conv_specs(), {1, 8, 8}, 1);
  CHECK_THROWS_AS(s.block(5), Error);
  CHECK_THROWS_AS((void)s.embed_dim_at(-1), Error);
}
