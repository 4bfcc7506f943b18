#include <doctest.h>

#include "pairx/error.hpp"
#include "pairx/layers.hpp"
#include "toy.hpp"

using namespace pairx;

TEST_CASE("conv2d: 1x1 identity kernel returns the input") {
  Tensor x = Tensor::filled({1, 3, 3}, 1.0f);
  const Tensor y = conv2d_forward(x, Tensor({1, 1, 1, 1}, {1.0f}), Tensor({1}), 1, 0);
  CHECK(y == x);
}

TEST_CASE("conv2d: full-window sum") {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d_forward(x, Tensor::filled({1, 1, 2, 2}, 1.0f), Tensor({1}), 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 10.0f);
}

TEST_CASE("conv2d: matches the seven-loop oracle exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + 2 * static_cast<int>(uniform_index(rng, 3));
    const int stride = 1 + static_cast<int>(uniform_index(rng, 2));
    const int pad = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(k / 2 + 1)));
    const Tensor x = toy::random_tensor({3, 8, 8}, rng);
    const Tensor w = toy::random_tensor({4, 3, k, k}, rng);
    const Tensor b = toy::random_tensor({4}, rng);
    const Tensor got = conv2d_forward(x, w, b, stride, pad);
    const Tensor want = toy::naive_conv(x, w, b, stride, pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == want[i]);
  }
}

TEST_CASE("conv2d: channel mismatch is a contract error") {
  const Tensor x({2, 4, 4});
  try {
    conv2d_forward(x, Tensor({1, 3, 3, 3}), Tensor({1}), 1, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Contract);
  }
}

TEST_CASE("relu") {
  const Tensor y = relu_forward(Tensor({3}, {-1, 0, 2}));
  CHECK(y == Tensor({3}, {0, 0, 2}));

  Rng rng(3);
  const Tensor nonneg = toy::random_tensor({2, 5, 5}, rng, 0.0, 2.0);
  CHECK(relu_forward(nonneg) == nonneg);

  const Tensor x = toy::random_tensor({4, 6, 6}, rng);
  const Tensor r = relu_forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == (x[i] > 0.0f ? x[i] : 0.0f));
}

TEST_CASE("pooling: hand values") {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  CHECK(pool_forward(x, PoolKind::Max, 2, 2)[0] == 4.0f);
  CHECK(pool_forward(x, PoolKind::Avg, 2, 2)[0] == 2.5f);
}

TEST_CASE("pooling: windowed-loop oracle") {
  Rng rng(5);
  const Tensor x = toy::random_tensor({3, 6, 6}, rng);
  for (auto [k, s] : {std::pair{2, 2}, std::pair{3, 1}, std::pair{3, 3}, std::pair{2, 1}}) {
    const Tensor mx = pool_forward(x, PoolKind::Max, k, s);
    const Tensor av = pool_forward(x, PoolKind::Avg, k, s);
    const int o = (6 - k) / s + 1;
    REQUIRE(mx.shape() == Shape{3, o, o});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < o; ++y)
        for (int xx = 0; xx < o; ++xx) {
          float best = x.at(c, y * s, xx * s);
          double sum = 0.0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const float v = x.at(c, y * s + dy, xx * s + dx);
              best = std::max(best, v);
              sum += v;
            }
          CHECK(mx.at(c, y, xx) == best);
          CHECK(av.at(c, y, xx) == static_cast<float>(sum / (k * k)));
        }
  }
}

TEST_CASE("linear: hand values and dot-product oracle") {
  CHECK(linear_forward(Tensor({1}, {3}), Tensor({1, 1}, {2}), Tensor({1}))[0] == 6.0f);

  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i * 5)] = 1.0f;
  const Tensor v({4}, {0.5f, -1.0f, 2.0f, 3.25f});
  CHECK(linear_forward(v, eye, Tensor({4})) == v);

  Rng rng(9);
  const Tensor x = toy::random_tensor({16}, rng);
  const Tensor w = toy::random_tensor({8, 16}, rng);
  const Tensor b = toy::random_tensor({8}, rng);
  const Tensor y = linear_forward(x, w, b);
  for (int o = 0; o < 8; ++o) {
    double acc = 0.0;
    for (int i = 0; i < 16; ++i) acc += static_cast<double>(w[static_cast<std::size_t>(o * 16 + i)]) * x[static_cast<std::size_t>(i)];
    acc += b[static_cast<std::size_t>(o)];
    CHECK(y[static_cast<std::size_t>(o)] == static_cast<float>(acc));
  }
}

TEST_CASE("flatten and global average pool") {
  const Tensor x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor f = flatten_forward(x);
  CHECK(f.shape() == Shape{8});
  CHECK(f[5] == 6.0f);
  const Tensor g = global_avg_pool_forward(x);
  CHECK(g.shape() == Shape{2});
  CHECK(g[0] == 2.5f);
  CHECK(g[1] == 6.5f);
}

TEST_CASE("conv_output_extent") {
  CHECK(conv_output_extent(8, 3, 1, 1) == 8);
  CHECK(conv_output_extent(8, 3, 2, 1) == 4);
  CHECK(conv_output_extent(7, 2, 2, 0) == 3);
  CHECK(conv_output_extent(2, 5, 1, 0) <= 0);
}

TEST_CASE("layer kind names round-trip") {
  for (auto k : {LayerKind::Conv2d, LayerKind::Relu, LayerKind::MaxPool2d, LayerKind::AvgPool2d,
                 LayerKind::Linear, LayerKind::Flatten, LayerKind::GlobalAvgPool})
    CHECK(parse_layer_kind(to_string(k)) == k);
  CHECK_FALSE(parse_layer_kind("attention").has_value());
}

TEST_CASE("layer spec validation") {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = 1;
  s.out_channels = 1;
  s.weight = "w";
  s.bias = "b";
  s.stride = 0;
  CHECK_THROWS_AS(s.validate(0), Error);
  s.stride = 1;
  s.padding = -1;
  CHECK_THROWS_AS(s.validate(0), Error);
  s.padding = 0;
  CHECK_NOTHROW(s.validate(0));
}
