#include <cmath>
#include <random>
#include <vector>

#include "core/error.hpp"
#include "core/tensor.hpp"
#include "doctest.h"

using namespace ffcl;

namespace {

std::vector<float> rand_vec(std::mt19937& rng, size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("tensor basics: construction, shape, item") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.defined());
  CHECK(t.numel() == 6);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.data()[4] == 5.0f);

  Tensor s = Tensor::scalar(2.5f);
  CHECK(s.item() == 2.5f);
  CHECK_THROWS_AS((void)t.item(), ShapeError);

  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, -1}, {1, 2}), ShapeError);

  Tensor z = Tensor::zeros({3});
  for (float v : z.data()) CHECK(v == 0.0f);
  Tensor f = Tensor::full({2, 2}, 7.0f);
  for (float v : f.data()) CHECK(v == 7.0f);
}

TEST_CASE("elementwise ops and their gradients") {
  Tensor a({3}, {1, 2, 3}, true);
  Tensor b({3}, {4, 5, 6}, true);

  SUBCASE("add/sub/mul/scale forward") {
    CHECK(add(a, b).data()[1] == 7.0f);
    CHECK(sub(a, b).data()[2] == -3.0f);
    CHECK(mul(a, b).data()[0] == 4.0f);
    CHECK(scale(a, 2.0f).data()[2] == 6.0f);
  }

  SUBCASE("shape mismatch throws") {
    Tensor c({2}, {1, 2});
    CHECK_THROWS_AS(add(a, c), ShapeError);
    CHECK_THROWS_AS(mul(a, c), ShapeError);
  }

  SUBCASE("gradient of sum(a*a) is 2a") {
    Tensor loss = sum(mul(a, a));
    backward(loss);
    REQUIRE(a.has_grad());
    CHECK(a.grad()[0] == doctest::Approx(2.0f));
    CHECK(a.grad()[1] == doctest::Approx(4.0f));
    CHECK(a.grad()[2] == doctest::Approx(6.0f));
    // b never participated: no gradient buffer was touched
    CHECK_FALSE(b.has_grad());
  }

  SUBCASE("mean gradient is 1/n") {
    backward(mean(mul(a, b)));
    CHECK(a.grad()[0] == doctest::Approx(4.0f / 3.0f));
    CHECK(b.grad()[2] == doctest::Approx(1.0f));
  }

  SUBCASE("gradients accumulate across backward calls until zeroed") {
    backward(sum(a));
    backward(sum(a));
    CHECK(a.grad()[0] == doctest::Approx(2.0f));
    a.zero_grad();
    backward(sum(a));
    CHECK(a.grad()[0] == doctest::Approx(1.0f));
  }

  SUBCASE("diamond DAG accumulates through both paths") {
    // y = sum(a*a + a*a): dy/da = 4a
    Tensor p = mul(a, a);
    backward(sum(add(p, p)));
    CHECK(a.grad()[1] == doctest::Approx(8.0f));
  }
}

TEST_CASE("reduction forward accumulates in double") {
  // Catastrophic cancellation: naive f32 accumulation of {1e8, 1, -1e8}
  // loses the 1 entirely; a double accumulator keeps it.
  Tensor t({3}, {1e8f, 1.0f, -1e8f});
  CHECK(sum(t).item() == 1.0f);
  CHECK(mean(t).item() == doctest::Approx(1.0f / 3.0f));
}

TEST_CASE("reshape and flatten2d") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor r = reshape(t, {3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r.data()[3] == 4.0f);
  CHECK_THROWS_AS(reshape(t, {4, 2}), ShapeError);

  Tensor img({2, 3, 2, 2}, rand_vec(*new std::mt19937(1), 24));
  Tensor flat = flatten2d(img);
  CHECK(flat.shape() == Shape{2, 12});
  // layout preserved row-major
  for (int i = 0; i < 24; ++i) CHECK(flat.data()[i] == img.data()[i]);

  Tensor already({4, 7}, std::vector<float>(28, 0.5f));
  Tensor same = flatten2d(already);
  CHECK(same.shape() == Shape{4, 7});

  // gradient flows through reshape untouched
  backward(sum(mul(r, r)));
  CHECK(t.grad()[0] == doctest::Approx(2.0f));
  CHECK(t.grad()[5] == doctest::Approx(12.0f));
}

TEST_CASE("matmul: identity, zeros, random against triple loop") {
  SUBCASE("identity") {
    Tensor i2({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {3, 4, 5, 6});
    Tensor r = matmul(i2, m);
    for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);
  }
  SUBCASE("zeros") {
    Tensor z = Tensor::zeros({3, 4});
    Tensor m({4, 2}, rand_vec(*new std::mt19937(2), 8));
    Tensor r = matmul(z, m);
    for (float v : r.data()) CHECK(v == 0.0f);
  }
  SUBCASE("random (3,4)x(4,2) against triple loop") {
    std::mt19937 rng(3);
    Tensor a({3, 4}, rand_vec(rng, 12));
    Tensor b({4, 2}, rand_vec(rng, 8));
    Tensor r = matmul(a, b);
    REQUIRE(r.shape() == Shape{3, 2});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += double(a.data()[i * 4 + k]) * b.data()[k * 2 + j];
        CHECK(r.data()[i * 2 + j] == doctest::Approx(acc).epsilon(1e-6));
      }
  }
  SUBCASE("inner-dimension mismatch throws") {
    Tensor a({3, 4}, std::vector<float>(12, 1.0f));
    Tensor b({3, 2}, std::vector<float>(6, 1.0f));
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
  }
  SUBCASE("gradient matches finite differences") {
    std::mt19937 rng(4);
    Tensor a({2, 3}, rand_vec(rng, 6), true);
    Tensor b({3, 2}, rand_vec(rng, 6), true);
    backward(sum(matmul(a, b)));
    // d sum(AB) / dA[i,k] = sum_j B[k,j]
    for (int k = 0; k < 3; ++k) {
      const float expect = b.data()[k * 2] + b.data()[k * 2 + 1];
      CHECK(a.grad()[k] == doctest::Approx(expect).epsilon(1e-5));
      CHECK(a.grad()[3 + k] == doctest::Approx(expect).epsilon(1e-5));
    }
  }
}

TEST_CASE("linear layer matches manual matmul plus bias") {
  std::mt19937 rng(5);
  Tensor x({4, 3}, rand_vec(rng, 12));
  Tensor w({2, 3}, rand_vec(rng, 6));
  Tensor b({2}, rand_vec(rng, 2));
  Tensor out = linear(x, w, b);
  REQUIRE(out.shape() == Shape{4, 2});
  for (int n = 0; n < 4; ++n)
    for (int f = 0; f < 2; ++f) {
      double acc = b.data()[f];
      for (int k = 0; k < 3; ++k) acc += double(x.data()[n * 3 + k]) * w.data()[f * 3 + k];
      CHECK(out.data()[n * 2 + f] == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("conv2d oracles") {
  SUBCASE("1x1 identity kernel reproduces the input") {
    std::mt19937 rng(6);
    Tensor x({1, 1, 4, 4}, rand_vec(rng, 16));
    Tensor w({1, 1, 1, 1}, {1.0f});
    Tensor b({1}, {0.0f});
    Tensor r = conv2d(x, w, b, 1, 0);
    REQUIRE(r.shape() == Shape{1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) CHECK(r.data()[i] == doctest::Approx(x.data()[i]));
  }
  SUBCASE("all-ones 3x3 input with all-ones 3x3 kernel, no padding -> 9") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor b({1}, {0.0f});
    Tensor r = conv2d(x, w, b, 1, 0);
    REQUIRE(r.shape() == Shape{1, 1, 1, 1});
    CHECK(r.item() == doctest::Approx(9.0f));
  }
  SUBCASE("random x(2,3,8,8) w(4,3,3,3) stride 2 pad 1 against six-loop oracle") {
    std::mt19937 rng(7);
    Tensor x({2, 3, 8, 8}, rand_vec(rng, 2 * 3 * 8 * 8));
    Tensor w({4, 3, 3, 3}, rand_vec(rng, 4 * 3 * 3 * 3));
    Tensor b({4}, rand_vec(rng, 4));
    const int stride = 2, pad = 1;
    Tensor r = conv2d(x, w, b, stride, pad);
    const int ho = (8 + 2 * pad - 3) / stride + 1;
    REQUIRE(r.shape() == Shape{2, 4, ho, ho});
    auto xv = x.data();
    auto wv = w.data();
    for (int n = 0; n < 2; ++n)
      for (int co = 0; co < 4; ++co)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < ho; ++ox) {
            double acc = b.data()[co];
            for (int ci = 0; ci < 3; ++ci)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = oy * stride - pad + ky;
                  const int ix = ox * stride - pad + kx;
                  if (iy < 0 || iy >= 8 || ix < 0 || ix >= 8) continue;
                  acc += double(xv[((n * 3 + ci) * 8 + iy) * 8 + ix]) *
                         wv[((co * 3 + ci) * 3 + ky) * 3 + kx];
                }
            const float got = r.data()[((n * 4 + co) * ho + oy) * ho + ox];
            CHECK(got == doctest::Approx(acc).epsilon(1e-5));
          }
  }
  SUBCASE("channel mismatch throws") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor w = Tensor::zeros({3, 1, 3, 3});
    Tensor b = Tensor::zeros({3});
    CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), ShapeError);
  }
}

TEST_CASE("relu forward and subgradient at zero") {
  Tensor t({3}, {-1, 0, 2}, true);
  Tensor r = relu(t);
  CHECK(r.data()[0] == 0.0f);
  CHECK(r.data()[1] == 0.0f);
  CHECK(r.data()[2] == 2.0f);

  Tensor neg({4}, {-5, -1, -0.25f, -100});
  Tensor rneg = relu(neg);
  for (float v : rneg.data()) CHECK(v == 0.0f);

  Tensor t2({2}, {-1, 3}, true);
  backward(sum(relu(t2)));
  CHECK(t2.grad()[0] == 0.0f);
  CHECK(t2.grad()[1] == 1.0f);
  // subgradient at exactly 0 is 0
  backward(sum(relu(t)));
  CHECK(t.grad()[1] == 0.0f);
}

TEST_CASE("sigmoid: midpoint, saturation, derivative") {
  Tensor z({1}, {0.0f}, true);
  Tensor s = sigmoid(z);
  CHECK(s.data()[0] == 0.5f);
  backward(sum(s));
  CHECK(z.grad()[0] == doctest::Approx(0.25f));

  Tensor big({2}, {40.0f, -40.0f});
  Tensor sb = sigmoid(big);
  CHECK(sb.data()[0] == 1.0f);  // saturates to exactly 1 in f32
  CHECK(sb.data()[1] == doctest::Approx(0.0f));
  Tensor extreme({2}, {1e4f, -1e4f});
  for (float v : sigmoid(extreme).data()) CHECK(std::isfinite(v));
}

TEST_CASE("global_avg_pool oracles") {
  SUBCASE("constant map pools to the constant") {
    Tensor t = Tensor::full({1, 2, 3, 3}, 5.0f);
    Tensor p = global_avg_pool(t);
    REQUIRE(p.shape() == Shape{1, 2});
    CHECK(p.data()[0] == doctest::Approx(5.0f));
    CHECK(p.data()[1] == doctest::Approx(5.0f));
  }
  SUBCASE("2x2 map {0,1,2,3} pools to 1.5") {
    Tensor t({1, 1, 2, 2}, {0, 1, 2, 3});
    CHECK(global_avg_pool(t).data()[0] == doctest::Approx(1.5f));
  }
  SUBCASE("random (2,3,4,4) equals per-channel sum / 16") {
    std::mt19937 rng(8);
    Tensor t({2, 3, 4, 4}, rand_vec(rng, 96));
    Tensor p = global_avg_pool(t);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = 0; i < 16; ++i) acc += t.data()[(n * 3 + c) * 16 + i];
        CHECK(p.data()[n * 3 + c] == doctest::Approx(acc / 16.0).epsilon(1e-6));
      }
  }
  SUBCASE("gradient spreads 1/(H*W) to every cell") {
    Tensor t({1, 1, 2, 2}, {0, 1, 2, 3}, true);
    backward(sum(global_avg_pool(t)));
    for (int i = 0; i < 4; ++i) CHECK(t.grad()[i] == doctest::Approx(0.25f));
  }
}

TEST_CASE("bce_loss oracles") {
  SUBCASE("p=0.5 y=1 gives ln 2") {
    Tensor p({1}, {0.5f});
    Tensor y({1}, {1.0f});
    CHECK(bce_loss(p, y).item() == doctest::Approx(0.6931472f).epsilon(1e-6));
  }
  SUBCASE("perfect predictions give near-zero loss") {
    Tensor p({4}, {1, 0, 1, 0});
    Tensor y({4}, {1, 0, 1, 0});
    CHECK(bce_loss(p, y).item() < 2e-6f);  // clamped at 1e-7 so not exactly 0
  }
  SUBCASE("p=[0.9,0.2] y=[1,0]") {
    Tensor p({2}, {0.9f, 0.2f});
    Tensor y({2}, {1.0f, 0.0f});
    // -(ln 0.9 + ln 0.8)/2
    CHECK(bce_loss(p, y).item() == doctest::Approx(0.16425204f).epsilon(1e-5));
  }
  SUBCASE("labels outside {0,1} rejected") {
    Tensor p({1}, {0.5f});
    Tensor y({1}, {2.0f});
    CHECK_THROWS_AS(bce_loss(p, y), ValidationError);
  }
  SUBCASE("clamp keeps loss and gradient finite at p=0 and p=1") {
    Tensor p({2}, {0.0f, 1.0f}, true);
    Tensor y({2}, {1.0f, 0.0f});
    Tensor l = bce_loss(p, y);
    CHECK(std::isfinite(l.item()));
    backward(l);
    for (float g : p.grad()) CHECK(std::isfinite(g));
  }
}

TEST_CASE("backward: unrelated leaves untouched, detach cuts flow") {
  Tensor a({3}, {1, 2, 3}, true);
  Tensor b({3}, {9, 9, 9}, true);
  backward(sum(mul(a, a)));
  CHECK_FALSE(b.has_grad());

  // detach: downstream loss reads the value but sends no gradient back
  Tensor d = a.detach();
  CHECK_FALSE(d.requires_grad());
  for (int i = 0; i < 3; ++i) CHECK(d.data()[i] == a.data()[i]);
  a.zero_grad();
  d.set_requires_grad(true);
  backward(sum(mul(d, d)));
  // the original leaf saw nothing: its buffer stays all zero
  for (float g : a.grad()) CHECK(g == 0.0f);
  CHECK(d.grad()[0] == doctest::Approx(2.0f));
}

TEST_CASE("NoGradGuard suspends recording") {
  Tensor a({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor r = mul(a, a);
    CHECK_FALSE(r.requires_grad());
    // backward on an unrecorded scalar is a no-op: no gradient appears
    backward(sum(r));
    CHECK_FALSE(a.has_grad());
  }
  // recording resumes after the guard
  Tensor r2 = mul(a, a);
  CHECK(r2.requires_grad());
}

TEST_CASE("backward requires a scalar root") {
  Tensor a({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(a, a)), ShapeError);
}

TEST_CASE("composite chain conv->relu->pool->matmul passes finite differences") {
  // Positive inputs and weights keep every relu preactivation away from the
  // kink, so central differences at eps=1e-3 see a smooth function.
  std::mt19937 rng(9);
  Tensor x({2, 1, 5, 5}, rand_vec(rng, 50, 0.2f, 1.0f));
  Tensor w({3, 1, 3, 3}, rand_vec(rng, 27, 0.05f, 0.3f), true);
  Tensor b({3}, rand_vec(rng, 3, 0.05f, 0.1f), true);
  Tensor proj({3, 1}, rand_vec(rng, 3, 0.5f, 1.0f));

  auto loss_fn = [&]() {
    return sum(matmul(global_avg_pool(relu(conv2d(x, w, b, 1, 1))), proj));
  };
  backward(loss_fn());
  REQUIRE(w.has_grad());
  std::vector<float> analytic(w.grad().begin(), w.grad().end());

  const float eps = 1e-3f;
  for (int i = 0; i < int(w.numel()); i += 5) {
    const float keep = w.data_mut()[i];
    w.data_mut()[i] = keep + eps;
    const double up = loss_fn().item();
    w.data_mut()[i] = keep - eps;
    const double dn = loss_fn().item();
    w.data_mut()[i] = keep;
    const double fd = (up - dn) / (2.0 * eps);
    CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-3));
  }
}

TEST_CASE("data_mut is leaf-only") {
  Tensor a({2}, {1, 2}, true);
  Tensor r = mul(a, a);
  CHECK_THROWS_AS((void)r.data_mut(), Error);
  CHECK_NOTHROW((void)a.data_mut());
}
