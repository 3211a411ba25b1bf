// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "gmbinet/complexity.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/gmbi.hpp"
#include "test_util.hpp"

using namespace gmbinet;
using testutil::random_tensor;

namespace {

struct Block {
  GMBIConfig cfg;
  LayerGraph graph;
  ParameterSet<double> params;
  GMBIWeights<double> weights;
};

Block make_block(const GMBIConfig& cfg, uint64_t seed = 1) {
  Block b{cfg, LayerGraph(cfg.channels), {}, {}};
  b.graph.set_output("y", emit_gmbi(b.graph, b.graph.input(), cfg, "blk"));
  b.params = ParameterSet<float>::initialize(b.graph, seed).cast<double>();
  b.weights = GMBIWeights<double>::from_params(b.params, "blk", cfg);
  return b;
}

// Depthwise kernels become centre taps and every BN an identity in eval mode.
void make_identity(Block& b) {
  for (auto& w : b.weights.depthwise) {
    auto v = w.mutable_data();
    std::fill(v.begin(), v.end(), 0.0);
    const int64_t k2 = w.shape().h * w.shape().w;
    for (int64_t c = 0; c < w.shape().n; ++c) v[static_cast<std::size_t>(c * k2 + k2 / 2)] = 1.0;
  }
  for (auto& bn : b.weights.depthwise_bn) {
    auto rv = bn.running_var.mutable_data();
    std::fill(rv.begin(), rv.end(), 1.0 - 1e-5);
  }
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

GMBIConfig small(int64_t c, int64_t n) {
  GMBIConfig cfg;
  cfg.channels = c;
  cfg.scale_dim = n;
  return cfg;
}

}  // namespace

TEST_SUITE("gmbi") {
  TEST_CASE("ewms values") {
    const Tensor g({1, 1, 1, 3}, {0.0f, 0.0f, 100.0f});
    const Tensor x({1, 1, 1, 3}, {1.0f, 0.0f, 2.0f});
    const Tensor y = ewms(g, x);
    CHECK(y.data()[0] == doctest::Approx(1.5));
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == doctest::Approx(4.0).epsilon(1e-6));
  }

  TEST_CASE("forward guidance with identity kernels gives sigmoid(x1) * x2 + x2") {
    Block b = make_block(small(4, 2));
    make_identity(b);
    std::mt19937_64 rng(2);
    const Tensor64 x1 = random_tensor<double>({1, 2, 4, 4}, rng, 0.1, 1.0);
    const Tensor64 x2 = random_tensor<double>({1, 2, 4, 4}, rng, 0.1, 1.0);
    const auto ys = forward_guidance<double>({x1, x2}, b.weights, b.cfg, Mode::eval);
    REQUIRE(ys.size() == 2);
    CHECK(testutil::max_abs_diff(ys[0], x1) < 1e-9);
    double worst = 0;
    for (std::size_t i = 0; i < 32; ++i) {
      const double e = sig(x1.data()[i]) * x2.data()[i] + x2.data()[i];
      worst = std::max(worst, std::abs(ys[1].data()[i] - e));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("backward enhancement") {
    std::mt19937_64 rng(3);
    const Tensor64 y1 = random_tensor<double>({1, 2, 3, 3}, rng);
    const Tensor64 y2 = random_tensor<double>({1, 2, 3, 3}, rng);
    {
      Block b = make_block(small(2, 1));
      const auto out = backward_enhancement<double>({y1}, b.weights, b.cfg);
      CHECK(testutil::bit_equal(out[0], y1));
    }
    {
      GMBIConfig cfg = small(4, 2);
      cfg.backward_enhancement = false;
      Block b = make_block(cfg);
      const auto out = backward_enhancement<double>({y1, y2}, b.weights, b.cfg);
      CHECK(testutil::bit_equal(out[0], y1));
      CHECK(testutil::bit_equal(out[1], y2));
    }
    {
      Block b = make_block(small(4, 2));
      const auto out = backward_enhancement<double>({y1, y2}, b.weights, b.cfg);
      CHECK(testutil::bit_equal(out[1], y2));
      for (std::size_t i = 0; i < 18; ++i) {
        CHECK(out[0].data()[i] == doctest::Approx(sig(y2.data()[i]) * y1.data()[i] + y1.data()[i]));
      }
    }
    {
      GMBIConfig cfg = small(4, 2);
      cfg.enhancement_order = EnhancementOrder::literal;
      Block b = make_block(cfg);
      const auto out = backward_enhancement<double>({y1, y2}, b.weights, b.cfg);
      CHECK(testutil::bit_equal(out[0], y1));
      for (std::size_t i = 0; i < 18; ++i) {
        CHECK(out[1].data()[i] == doctest::Approx(sig(y2.data()[i]) * y1.data()[i] + y1.data()[i]));
      }
    }
  }

  TEST_CASE("enhancement source: enhanced guide chains, raw guide does not") {
    std::mt19937_64 rng(4);
    std::vector<Tensor64> ys;
    for (int i = 0; i < 3; ++i) ys.push_back(random_tensor<double>({1, 1, 2, 2}, rng));
    Block enh = make_block(small(3, 3));
    GMBIConfig raw_cfg = small(3, 3);
    raw_cfg.enhancement_source = EnhancementSource::raw;
    Block raw = make_block(raw_cfg);
    const auto a = backward_enhancement(ys, enh.weights, enh.cfg);
    const auto r = backward_enhancement(ys, raw.weights, raw.cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      const double y2en = sig(ys[2].data()[i]) * ys[1].data()[i] + ys[1].data()[i];
      CHECK(a[0].data()[i] == doctest::Approx(sig(y2en) * ys[0].data()[i] + ys[0].data()[i]));
      CHECK(r[0].data()[i] == doctest::Approx(sig(ys[1].data()[i]) * ys[0].data()[i] + ys[0].data()[i]));
    }
  }

  TEST_CASE("zero fuse weights make the block an identity") {
    std::mt19937_64 rng(5);
    Block b = make_block(small(8, 4));
    auto f = b.weights.fuse.mutable_data();
    std::fill(f.begin(), f.end(), 0.0);
    const Tensor64 x = random_tensor<double>({2, 8, 6, 6}, rng);
    CHECK(testutil::bit_equal(gmbi_forward(x, b.weights, b.cfg, Mode::eval), x));
    CHECK(testutil::bit_equal(gmbi_forward(x, b.weights, b.cfg, Mode::train), x));
  }

  TEST_CASE("graph form and functional form agree") {
    std::mt19937_64 rng(6);
    for (const Interaction it :
         {Interaction::ewms, Interaction::sum, Interaction::mul, Interaction::concat, Interaction::none}) {
      for (const ScaleMode m : {ScaleMode::group, ScaleMode::branch, ScaleMode::single}) {
        for (const EnhancementOrder order : {EnhancementOrder::top_down, EnhancementOrder::literal}) {
          GMBIConfig cfg = small(8, 4);
          cfg.interaction = it;
          cfg.mode = m;
          cfg.enhancement_order = order;
          Block b = make_block(cfg, 7);
          const Tensor64 x = random_tensor<double>({2, 8, 6, 6}, rng);
          const auto graph_out = run_outputs(b.graph, b.params, x, Mode::train);
          const Tensor64 fn_out = gmbi_forward(x, b.weights, cfg, Mode::train);
          CAPTURE(cfg.str());
          CHECK(graph_out.front().second.shape() == x.shape());
          CHECK(testutil::max_abs_diff(graph_out.front().second, fn_out) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("guidance is causal across scales") {
    std::mt19937_64 rng(8);
    for (const Interaction it : {Interaction::none, Interaction::ewms}) {
      GMBIConfig cfg = small(8, 4);
      cfg.interaction = it;
      Block b = make_block(cfg);
      std::vector<Tensor64> xs;
      for (int i = 0; i < 4; ++i) xs.push_back(random_tensor<double>({1, 2, 5, 5}, rng));
      const auto base = forward_guidance(xs, b.weights, cfg, Mode::eval);
      auto moved = xs;
      moved[2] = random_tensor<double>({1, 2, 5, 5}, rng);
      const auto out = forward_guidance(moved, b.weights, cfg, Mode::eval);
      CHECK(testutil::bit_equal(out[0], base[0]));
      CHECK(testutil::bit_equal(out[1], base[1]));
      CHECK(testutil::max_abs_diff(out[2], base[2]) > 0.0);
      if (it == Interaction::none) CHECK(testutil::bit_equal(out[3], base[3]));
      else CHECK(testutil::max_abs_diff(out[3], base[3]) > 0.0);
    }
  }

  TEST_CASE("parameter counts across interactions and modes") {
    auto count = [](GMBIConfig cfg) {
      LayerGraph g(cfg.channels);
      g.set_output("y", emit_gmbi(g, g.input(), cfg, "b"));
      return g.parameter_count();
    };
    GMBIConfig base = small(32, 4);
    const int64_t ewms_params = count(base);
    for (const Interaction it : {Interaction::sum, Interaction::mul, Interaction::none}) {
      GMBIConfig c = base;
      c.interaction = it;
      CHECK(count(c) == ewms_params);
    }
    GMBIConfig cat = base;
    cat.interaction = Interaction::concat;
    CHECK(count(cat) > ewms_params);

    for (const int64_t n : {1, 2, 4, 8, 16}) CHECK(count(small(32, n)) == count(small(32, 1)));
    int64_t prev = 0;
    for (const int64_t n : {1, 2, 4, 8}) {
      GMBIConfig c = small(32, n);
      c.mode = ScaleMode::branch;
      CHECK(count(c) > prev);
      prev = count(c);
    }
  }

  TEST_CASE("depthwise cost does not depend on the scale count") {
    int64_t ref = -1;
    for (const int64_t n : {1, 2, 4, 8, 16}) {
      GMBIConfig cfg = small(32, n);
      LayerGraph g(32);
      g.set_output("y", emit_gmbi(g, g.input(), cfg, "b"));
      const CostReport r = count_graph(g, {1, 32, 16, 16});
      int64_t dw = 0;
      for (const auto& node : r.nodes) {
        if (node.kind == NodeKind::conv && node.name.find(".dw") != std::string::npos) dw += node.macs;
      }
      CHECK(dw == 9 * 32 * 16 * 16);
      if (ref < 0) ref = r.macs;
      CHECK(r.macs == ref);
    }
  }

  TEST_CASE("configuration errors") {
    GMBIConfig cfg = small(8, 3);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.mode = ScaleMode::branch;
    CHECK_NOTHROW(cfg.validate());
    LayerGraph g(16);
    CHECK_THROWS_AS(emit_gmbi(g, g.input(), small(8, 2), "b"), ShapeError);
  }

  TEST_CASE("block gradients match central differences for every ablation") {
    std::mt19937_64 rng(9);
    struct Variant {
      Interaction it;
      bool fg, be;
      ScaleMode mode;
      EnhancementSource src;
      EnhancementOrder order;
    };
    std::vector<Variant> variants;
    for (const Interaction it :
         {Interaction::ewms, Interaction::sum, Interaction::mul, Interaction::concat, Interaction::none}) {
      variants.push_back({it, true, true, ScaleMode::group, EnhancementSource::enhanced, EnhancementOrder::top_down});
    }
    variants.push_back({Interaction::ewms, true, false, ScaleMode::group, EnhancementSource::enhanced,
                        EnhancementOrder::top_down});
    variants.push_back({Interaction::ewms, false, true, ScaleMode::group, EnhancementSource::enhanced,
                        EnhancementOrder::top_down});
    variants.push_back({Interaction::ewms, true, true, ScaleMode::branch, EnhancementSource::enhanced,
                        EnhancementOrder::top_down});
    variants.push_back({Interaction::ewms, true, true, ScaleMode::single, EnhancementSource::enhanced,
                        EnhancementOrder::top_down});
    variants.push_back({Interaction::ewms, true, true, ScaleMode::group, EnhancementSource::raw,
                        EnhancementOrder::top_down});
    variants.push_back({Interaction::concat, true, true, ScaleMode::group, EnhancementSource::enhanced,
                        EnhancementOrder::literal});
    for (const Variant& v : variants) {
      GMBIConfig cfg = small(8, 4);
      cfg.interaction = v.it;
      cfg.forward_guidance = v.fg;
      cfg.backward_enhancement = v.be;
      cfg.mode = v.mode;
      cfg.enhancement_source = v.src;
      cfg.enhancement_order = v.order;
      Block b = make_block(cfg, 10);
      const Tensor64 x = random_tensor<double>({2, 8, 5, 5}, rng, -1, 1, true);
      const Tensor64 w = random_tensor<double>(x.shape(), rng);
      std::vector<std::pair<std::string, Tensor64>> wrt{{"input", x}};
      for (std::size_t i = 0; i < b.params.size(); ++i) {
        if (b.params.trainable(i)) wrt.emplace_back(b.params.name(i), b.params.at(i));
      }
      const auto rep = testutil::check_gradients(
          [&](Tape<double>* t) { return testutil::weighted_sum(gmbi_forward(x, b.weights, cfg, Mode::train, t), w, t); },
          wrt, rng, 16);
      CAPTURE(cfg.str());
      CAPTURE(rep.worst);
      CHECK(rep.max_error < 1e-4);
      CHECK(rep.skipped * 5 <= rep.checked);
    }
  }
}
