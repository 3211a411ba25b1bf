// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"
#include "gmbinet/parallel.hpp"
#include "test_util.hpp"

using namespace gmbinet;
using testutil::random_tensor;

namespace {

// Plain seven-loop convolution used as the reference.
Tensor64 naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, const ConvSpec& s) {
  const Shape in = x.shape();
  const int64_t oh = s.output_extent(in.h), ow = s.output_extent(in.w);
  Tensor64 out = Tensor64::zeros({in.n, s.out_channels, oh, ow});
  auto o = out.mutable_data();
  const int64_t ipg = s.in_per_group(), opg = s.out_per_group();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t co = 0; co < s.out_channels; ++co) {
      const int64_t g = co / opg;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? b.data()[static_cast<std::size_t>(co)] : 0.0;
          for (int64_t ci = 0; ci < ipg; ++ci)
            for (int64_t ky = 0; ky < s.kernel; ++ky)
              for (int64_t kx = 0; kx < s.kernel; ++kx) {
                const int64_t iy = y * s.stride - s.padding + ky * s.dilation;
                const int64_t ix = xx * s.stride - s.padding + kx * s.dilation;
                if (iy < 0 || ix < 0 || iy >= in.h || ix >= in.w) continue;
                acc += x.at(n, g * ipg + ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          o[static_cast<std::size_t>(((n * s.out_channels + co) * oh + y) * ow + xx)] = acc;
        }
    }
  return out;
}

ConvSpec random_spec(std::mt19937_64& rng) {
  ConvSpec s;
  const int64_t groups[] = {1, 2, 4};
  s.groups = groups[rng() % 3];
  s.in_channels = s.groups * (1 + static_cast<int64_t>(rng() % 3));
  s.out_channels = s.groups * (1 + static_cast<int64_t>(rng() % 3));
  s.kernel = (rng() % 2) ? 3 : 1;
  s.stride = 1 + static_cast<int64_t>(rng() % 2);
  s.dilation = 1 + static_cast<int64_t>(rng() % 3);
  s.padding = static_cast<int64_t>(rng() % 4);
  s.bias = rng() % 2;
  return s;
}

Tensor64 bias_for(const ConvSpec& s, std::mt19937_64& rng, bool grad = false) {
  return s.bias ? random_tensor<double>({1, s.out_channels, 1, 1}, rng, -1, 1, grad) : Tensor64();
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("ones kernel on a 3x3 ones input with zero padding") {
    ConvSpec s;
    s.kernel = 3;
    s.padding = 1;
    const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
    const Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
    const Tensor y = conv2d(x, w, Tensor(), s);
    const float expected[] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == expected[i]);
  }

  TEST_CASE("identity kernel returns the input") {
    std::mt19937_64 rng(1);
    ConvSpec s;
    s.in_channels = s.out_channels = s.groups = 3;
    s.padding = 1;
    std::vector<float> k(27, 0.0f);
    for (int c = 0; c < 3; ++c) k[c * 9 + 4] = 1.0f;
    const Tensor x = random_tensor<float>({2, 3, 5, 4}, rng);
    const Tensor y = conv2d(x, Tensor({3, 1, 3, 3}, k), Tensor(), s);
    CHECK(testutil::bit_equal(x, y));
  }

  TEST_CASE("depthwise output channel depends only on its input channel") {
    std::mt19937_64 rng(2);
    const ConvSpec s = ConvSpec::depthwise_3x3(4, 2);
    const Tensor w = random_tensor<float>(s.weight_shape(), rng);
    Tensor x = random_tensor<float>({1, 4, 6, 6}, rng);
    const Tensor y0 = conv2d(x, w, Tensor(), s);
    Tensor x2 = x.clone();
    for (int i = 0; i < 36; ++i) x2.mutable_data()[2 * 36 + i] += 5.0f;
    const Tensor y1 = conv2d(x2, w, Tensor(), s);
    for (int c = 0; c < 4; ++c) {
      double d = 0;
      for (int i = 0; i < 36; ++i) d += std::abs(y0.data()[c * 36 + i] - y1.data()[c * 36 + i]);
      if (c == 2) CHECK(d > 0.0);
      else CHECK(d == 0.0);
    }
  }

  TEST_CASE("conv2d matches the reference loops on random geometries") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
      const ConvSpec s = random_spec(rng);
      const Shape in{1 + static_cast<int64_t>(rng() % 2), s.in_channels, 5 + static_cast<int64_t>(rng() % 5),
                     5 + static_cast<int64_t>(rng() % 5)};
      if (s.output_extent(in.h) <= 0 || s.output_extent(in.w) <= 0) continue;
      const Tensor64 x = random_tensor<double>(in, rng);
      const Tensor64 w = random_tensor<double>(s.weight_shape(), rng);
      const Tensor64 b = bias_for(s, rng);
      const Tensor64 ref = naive_conv(x, w, b, s);
      CAPTURE(s.str());
      CHECK(testutil::max_abs_diff(conv2d(x, w, b, s), ref) < 1e-12);
      CHECK(testutil::max_abs_diff(conv2d<double>(x, w, b, s, nullptr, ConvAlgo::lowered), ref) < 1e-12);
    }
  }

  TEST_CASE("direct and lowered convolution agree in float") {
    std::mt19937_64 rng(4);
    ConvSpec s;
    s.in_channels = 16;
    s.out_channels = 8;
    s.padding = 2;
    s.dilation = 2;
    s.bias = true;
    const Tensor x = random_tensor<float>({2, 16, 12, 12}, rng);
    const Tensor w = random_tensor<float>(s.weight_shape(), rng);
    const Tensor b = random_tensor<float>({1, 8, 1, 1}, rng);
    const Tensor a = conv2d(x, w, b, s);
    const Tensor l = conv2d<float>(x, w, b, s, nullptr, ConvAlgo::lowered);
    double worst = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
      worst = std::max(worst, std::abs(a.data()[i] - l.data()[i]) / std::max(1.0, std::abs(double(a.data()[i]))));
    CHECK(worst < 1e-5);
  }

  TEST_CASE("grouped conv equals independent convs on channel slices") {
    std::mt19937_64 rng(5);
    ConvSpec s;
    s.in_channels = 4;
    s.out_channels = 6;
    s.groups = 2;
    s.padding = 1;
    const Tensor64 x = random_tensor<double>({1, 4, 5, 5}, rng);
    const Tensor64 w = random_tensor<double>(s.weight_shape(), rng);
    const Tensor64 y = conv2d(x, w, Tensor64(), s);
    ConvSpec half = s;
    half.in_channels = 2;
    half.out_channels = 3;
    half.groups = 1;
    for (int g = 0; g < 2; ++g) {
      const Tensor64 xs = channel_slice(x, 2 * g, 2);
      std::vector<double> wv(w.data().begin() + g * 54, w.data().begin() + (g + 1) * 54);
      const Tensor64 ys = conv2d(xs, Tensor64({3, 2, 3, 3}, wv), Tensor64(), half);
      CHECK(testutil::max_abs_diff(ys, channel_slice(y, 3 * g, 3)) < 1e-12);
    }
  }

  TEST_CASE("conv shape errors name the offending dimension") {
    ConvSpec s;
    s.in_channels = 3;
    s.out_channels = 4;
    const Tensor w = Tensor::zeros(s.weight_shape());
    CHECK_THROWS_WITH_AS(conv2d(Tensor::zeros({1, 2, 8, 8}), w, Tensor(), s), doctest::Contains("input channels"),
                         ShapeError);
    CHECK_THROWS_WITH_AS(conv2d(Tensor::zeros({1, 3, 2, 8}), w, Tensor(), s), doctest::Contains("height"),
                         ShapeError);
    CHECK_THROWS_WITH_AS(conv2d(Tensor::zeros({1, 3, 8, 2}), w, Tensor(), s), doctest::Contains("width"),
                         ShapeError);
    ConvSpec bad = s;
    bad.groups = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("bilinear upsampling") {
    const Tensor c = Tensor::full({1, 2, 3, 3}, 0.7f);
    const Tensor cu = bilinear_upsample(c, 2);
    for (const float v : cu.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-7));

    const Tensor x({1, 1, 2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
    const Tensor y = bilinear_upsample(x, 2);
    REQUIRE(y.shape() == Shape{1, 1, 4, 4});
    CHECK(y.at(0, 0, 0, 0) == 0.0f);
    CHECK(y.at(0, 0, 0, 3) == 1.0f);
    CHECK(y.at(0, 0, 3, 0) == 2.0f);
    CHECK(y.at(0, 0, 3, 3) == 3.0f);
    // corner-aligned: row 0 runs 0, 1/3, 2/3, 1
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(y.at(0, 0, 0, 2) == doctest::Approx(2.0 / 3.0));

    std::mt19937_64 rng(6);
    const Tensor r = random_tensor<float>({2, 3, 5, 7}, rng);
    CHECK(testutil::bit_equal(bilinear_upsample(r, 1), r));
    const Tensor u = bilinear_upsample(r, 3);
    const auto [lo, hi] = std::minmax_element(r.data().begin(), r.data().end());
    for (const float v : u.data()) {
      CHECK(v >= *lo - 1e-6f);
      CHECK(v <= *hi + 1e-6f);
    }
    CHECK_THROWS_AS(bilinear_upsample(r, 0), ShapeError);
  }

  TEST_CASE("elementwise ops and activations") {
    std::mt19937_64 rng(7);
    const Tensor x = random_tensor<float>({1, 2, 3, 3}, rng);
    const Tensor z = Tensor::zeros(x.shape());
    const Tensor one = Tensor::full(x.shape(), 1.0f);
    CHECK(testutil::bit_equal(add(x, z), x));
    CHECK(testutil::bit_equal(mul(x, one), x));
    const Tensor p = mul(Tensor({1, 2, 1, 1}, {1, 2}), Tensor({1, 2, 1, 1}, {3, 4}));
    CHECK(p.data()[0] == 3.0f);
    CHECK(p.data()[1] == 8.0f);
    CHECK_THROWS_AS(add(x, Tensor::zeros({1, 2, 3, 4})), ShapeError);

    CHECK(sigmoid(Tensor::scalar(0.0f)).item() == 0.5f);
    const Tensor r = relu(Tensor({1, 1, 1, 3}, {-1, 0, 2}));
    CHECK(r.data()[0] == 0.0f);
    CHECK(r.data()[1] == 0.0f);
    CHECK(r.data()[2] == 2.0f);
    const Tensor s = sigmoid(x);
    const Tensor sn = sigmoid(scale(x, -1.0));
    for (std::size_t i = 0; i < s.data().size(); ++i) CHECK(s.data()[i] + sn.data()[i] == doctest::Approx(1.0));
    const Tensor saturated = sigmoid(Tensor({1, 1, 1, 2}, {-200.0f, 200.0f}));
    for (const float v : saturated.data()) CHECK(std::isfinite(v));
  }

  TEST_CASE("channel split and concat") {
    std::mt19937_64 rng(8);
    const Tensor x = random_tensor<float>({2, 12, 3, 4}, rng);
    for (const int64_t n : {1, 2, 3, 4, 6, 12}) {
      const auto parts = channel_split(x, n);
      CHECK(parts.size() == static_cast<std::size_t>(n));
      CHECK(testutil::bit_equal(concat(parts), x));
    }
    CHECK(testutil::bit_equal(channel_split(x, 1).front(), x));
    CHECK_THROWS_WITH_AS(channel_split(x, 5), doctest::Contains("not divisible"), ShapeError);
    CHECK_THROWS_AS(concat(std::vector<Tensor>{x, Tensor::zeros({2, 1, 3, 5})}), ShapeError);
  }

  TEST_CASE("channel shuffle interleaves groups") {
    const Tensor x({1, 6, 1, 1}, {0, 1, 2, 3, 4, 5});
    const Tensor y = channel_shuffle(x, 2);
    const float expected[] = {0, 3, 1, 4, 2, 5};
    for (int i = 0; i < 6; ++i) CHECK(y.data()[i] == expected[i]);
    CHECK(testutil::bit_equal(channel_shuffle(channel_shuffle(x, 2), 3), x));
  }

  TEST_CASE("backward of simple expressions") {
    std::mt19937_64 rng(9);
    const Tensor64 x = random_tensor<double>({1, 2, 2, 2}, rng, -1, 1, true);
    {
      Tape<double> tape;
      tape.backward(sum(x, &tape));
      for (const double g : x.grad()) CHECK(g == 1.0);
    }
    {
      x.zero_grad();
      Tape<double> tape;
      tape.backward(sum(mul(x, x, &tape), &tape));
      for (std::size_t i = 0; i < 8; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
    }
    {
      // fan-out: both uses contribute
      x.zero_grad();
      Tape<double> tape;
      tape.backward(sum(add(scale(x, 2.0, &tape), scale(x, 3.0, &tape), &tape), &tape));
      for (const double g : x.grad()) CHECK(g == doctest::Approx(5.0));
    }
    Tape<double> tape;
    const Tensor64 y = relu(x, &tape);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
  }

  TEST_CASE("gradients of every op match central differences") {
    std::mt19937_64 rng(10);
    const double tol = 1e-4;
    auto check = [&](const char* what, const std::function<Tensor64(const Tensor64&, Tape<double>*)>& op,
                     const Shape& in, const std::vector<std::pair<std::string, Tensor64>>& extra = {}) {
      const Tensor64 x = random_tensor<double>(in, rng, -1, 1, true);
      const Tensor64 probe = op(x, nullptr);
      const Tensor64 w = random_tensor<double>(probe.shape(), rng);
      auto wrt = extra;
      wrt.emplace_back("x", x);
      const auto rep = testutil::check_gradients(
          [&](Tape<double>* t) { return testutil::weighted_sum(op(x, t), w, t); }, wrt, rng, 40);
      CAPTURE(what);
      CAPTURE(rep.worst);
      CHECK(rep.max_error < tol);
      CHECK(rep.skipped * 5 <= rep.checked);
    };

    for (int trial = 0; trial < 12; ++trial) {
      const ConvSpec s = random_spec(rng);
      const Shape in{2, s.in_channels, 7, 6};
      if (s.output_extent(in.h) <= 0 || s.output_extent(in.w) <= 0) continue;
      const Tensor64 w = random_tensor<double>(s.weight_shape(), rng, -1, 1, true);
      const Tensor64 b = bias_for(s, rng, true);
      std::vector<std::pair<std::string, Tensor64>> extra{{"weight", w}};
      if (b.defined()) extra.emplace_back("bias", b);
      check(s.str().c_str(), [&](const Tensor64& x, Tape<double>* t) { return conv2d(x, w, b, s, t); }, in, extra);
    }

    {
      const Tensor64 gamma = random_tensor<double>({1, 3, 1, 1}, rng, 0.5, 1.5, true);
      const Tensor64 beta = random_tensor<double>({1, 3, 1, 1}, rng, -0.5, 0.5, true);
      Tensor64 rm = Tensor64::zeros({1, 3, 1, 1});
      Tensor64 rv = Tensor64::full({1, 3, 1, 1}, 1.0);
      check("batch_norm train",
            [&](const Tensor64& x, Tape<double>* t) { return batch_norm(x, gamma, beta, rm, rv, {}, t); },
            {2, 3, 4, 4}, {{"gamma", gamma}, {"beta", beta}});
      BatchNormOptions eval;
      eval.training = false;
      check("batch_norm eval",
            [&](const Tensor64& x, Tape<double>* t) { return batch_norm(x, gamma, beta, rm, rv, eval, t); },
            {2, 3, 4, 4}, {{"gamma", gamma}, {"beta", beta}});
    }
    // relu kink at 0 is never hit by continuous random inputs
    check("relu", [](const Tensor64& x, Tape<double>* t) { return relu(x, t); }, {1, 2, 4, 4});
    check("sigmoid", [](const Tensor64& x, Tape<double>* t) { return sigmoid(x, t); }, {1, 2, 4, 4});
    const Tensor64 other = random_tensor<double>({1, 2, 4, 4}, rng, -1, 1, true);
    check("add", [&](const Tensor64& x, Tape<double>* t) { return add(x, other, t); }, {1, 2, 4, 4},
          {{"other", other}});
    check("mul", [&](const Tensor64& x, Tape<double>* t) { return mul(x, other, t); }, {1, 2, 4, 4},
          {{"other", other}});
    check("scale", [](const Tensor64& x, Tape<double>* t) { return scale(x, -2.5, t); }, {1, 2, 4, 4});
    check("resize", [](const Tensor64& x, Tape<double>* t) { return resize_bilinear(x, 7, 5, t); }, {1, 2, 3, 4});
    check("upsample", [](const Tensor64& x, Tape<double>* t) { return bilinear_upsample(x, 2, t); }, {2, 2, 3, 3});
    check("split", [](const Tensor64& x, Tape<double>* t) {
      const auto p = channel_split(x, 3, t);
      return concat(std::vector<Tensor64>{p[2], p[0]}, t);
    }, {1, 6, 3, 3});
    check("slice", [](const Tensor64& x, Tape<double>* t) { return channel_slice(x, 1, 2, t); }, {2, 4, 3, 3});
    check("concat", [&](const Tensor64& x, Tape<double>* t) {
      return concat(std::vector<Tensor64>{x, other, x}, t);
    }, {1, 2, 4, 4}, {{"other", other}});
    check("shuffle", [](const Tensor64& x, Tape<double>* t) { return channel_shuffle(x, 3, t); }, {1, 6, 2, 2});
    check("pool", [](const Tensor64& x, Tape<double>* t) { return global_avg_pool(x, t); }, {2, 3, 4, 5});
    check("mean", [](const Tensor64& x, Tape<double>* t) { return mean(x, t); }, {2, 3, 4, 5});
  }

  TEST_CASE("results do not depend on the worker count") {
    std::mt19937_64 rng(11);
    ConvSpec s;
    s.in_channels = 8;
    s.out_channels = 8;
    s.padding = 1;
    const Tensor x = random_tensor<float>({2, 8, 16, 16}, rng);
    const Tensor w = random_tensor<float>(s.weight_shape(), rng);
    set_thread_count(1);
    const Tensor a = conv2d(x, w, Tensor(), s);
    set_thread_count(3);
    const Tensor b = conv2d(x, w, Tensor(), s);
    set_thread_count(0);
    CHECK(testutil::bit_equal(a, b));
  }

  TEST_CASE("standardize gives zero mean and unit deviation per sample") {
    std::mt19937_64 rng(12);
    const Tensor64 x = random_tensor<double>({2, 3, 8, 8}, rng, 0.2, 0.9);
    const Tensor64 z = standardize(x);
    for (int n = 0; n < 2; ++n) {
      double m = 0, v = 0;
      for (int i = 0; i < 192; ++i) m += z.data()[n * 192 + i];
      m /= 192;
      for (int i = 0; i < 192; ++i) v += (z.data()[n * 192 + i] - m) * (z.data()[n * 192 + i] - m);
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::sqrt(v / 192) == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}
