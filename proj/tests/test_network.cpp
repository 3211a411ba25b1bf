// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "gmbinet/complexity.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/network.hpp"
#include "test_util.hpp"

using namespace gmbinet;
using testutil::random_tensor;

namespace {

Shape shape_of(const LayerGraph& g, const std::vector<Shape>& shapes, const std::string& role) {
  return shapes[static_cast<std::size_t>(g.output(role))];
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("encoder and decoder shapes at 512") {
    const LayerGraph g = build_gmbinet(NetworkConfig::gmbinet());
    const auto shapes = g.infer_shapes({1, 3, 512, 512});
    const Shape enc[] = {{1, 16, 256, 256}, {1, 32, 128, 128}, {1, 64, 64, 64}, {1, 96, 32, 32}, {1, 128, 16, 16}};
    for (int i = 0; i < 5; ++i) {
      CHECK(shape_of(g, shapes, "E" + std::to_string(i + 1)) == enc[i]);
      CHECK(shape_of(g, shapes, "D" + std::to_string(i + 1)) == enc[i]);
      const Shape side = shape_of(g, shapes, "side" + std::to_string(i + 1));
      CHECK(side == Shape{1, 1, enc[i].h, enc[i].w});
    }
    CHECK(shape_of(g, shapes, "final") == Shape{1, 1, 512, 512});
  }

  TEST_CASE("224 input gives a 7x7 deepest feature") {
    const LayerGraph g = build_backbone(NetworkConfig::gmbinet());
    const auto shapes = g.infer_shapes({1, 3, 224, 224});
    CHECK(shape_of(g, shapes, "E5") == Shape{1, 128, 7, 7});
  }

  TEST_CASE("inputs not divisible by 32 are rejected with the padding needed") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 1);
    const Tensor x = Tensor::zeros({1, 3, 100, 64});
    CHECK_THROWS_WITH_AS(forward_saliency(x, m.graph, m.params, Mode::eval), doctest::Contains("pad by 28 rows"),
                         ShapeError);
  }

  TEST_CASE("parameter count and scale invariance") {
    const int64_t p4 = build_gmbinet(NetworkConfig::gmbinet(4)).parameter_count();
    CHECK(std::abs(static_cast<double>(p4) - 0.19e6) <= 0.15 * 0.19e6);
    for (const int64_t n : {1, 2, 8, 16}) CHECK(build_gmbinet(NetworkConfig::gmbinet(n)).parameter_count() == p4);
    const int64_t m4 = count_graph(build_gmbinet(NetworkConfig::gmbinet(4)), {1, 3, 256, 256}).macs;
    for (const int64_t n : {1, 2, 8, 16}) {
      CHECK(count_graph(build_gmbinet(NetworkConfig::gmbinet(n)), {1, 3, 256, 256}).macs == m4);
    }
  }

  TEST_CASE("MACs scale with the pixel count") {
    const LayerGraph g = build_gmbinet(NetworkConfig::gmbinet());
    CHECK(count_graph(g, {1, 3, 512, 512}).macs == 4 * count_graph(g, {1, 3, 256, 256}).macs);
  }

  TEST_CASE("classifier head") {
    Model m = Model::classifier(6, NetworkConfig::gmbinet(), 3);
    const double p = static_cast<double>(m.graph.parameter_count());
    CHECK(std::abs(p - 0.19e6) <= 0.15 * 0.19e6);
    std::mt19937_64 rng(1);
    const Tensor logits = classify(random_tensor<float>({2, 3, 64, 64}, rng, 0, 1), m);
    CHECK(logits.shape() == Shape{2, 6, 1, 1});
    CHECK_THROWS_AS(build_classifier(1, NetworkConfig::gmbinet()), ConfigError);
  }

  TEST_CASE("executed shapes match inferred shapes") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 2);
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor<float>({2, 3, 64, 96}, rng);
    const auto inferred = m.graph.infer_shapes(x.shape());
    for (const auto& [role, value] : run_outputs(m.graph, m.params, x, Mode::train)) {
      CAPTURE(role);
      CHECK(value.shape() == inferred[static_cast<std::size_t>(m.graph.output(role))]);
    }
  }

  TEST_CASE("saliency maps are probabilities") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 3);
    std::mt19937_64 rng(3);
    const auto out = forward_saliency(random_tensor<float>({1, 3, 64, 64}, rng, -3, 3), m.graph, m.params, Mode::train);
    CHECK(out.side_maps.size() == 5);
    for (const auto& map : out.side_maps)
      for (const float v : map.data()) CHECK((v >= 0.0f && v <= 1.0f));
    for (const float v : out.final_map.data()) CHECK((v >= 0.0f && v <= 1.0f));
  }

  TEST_CASE("zero encoder features decode to 0.5 everywhere") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 4);
    std::vector<Tensor> feats;
    for (const Shape& s : std::vector<Shape>{{1, 16, 16, 16}, {1, 32, 8, 8}, {1, 64, 4, 4}, {1, 96, 2, 2}, {1, 128, 1, 1}})
      feats.push_back(Tensor::zeros(s));
    const auto out = decode(feats, m.graph, m.params, Mode::eval);
    for (const auto& map : out.side_maps)
      for (const float v : map.data()) CHECK(v == 0.5f);
    feats.pop_back();
    CHECK_THROWS_AS(decode(feats, m.graph, m.params, Mode::eval), ShapeError);
  }

  TEST_CASE("predict keeps the input size and is deterministic") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 5);
    std::mt19937_64 rng(5);
    const Tensor a = random_tensor<float>({1, 3, 200, 200}, rng, 0, 1);
    const Tensor pa = predict(a, m, {64});
    CHECK(pa.shape() == Shape{1, 1, 200, 200});
    for (const float v : pa.data()) CHECK((v >= 0.0f && v <= 1.0f));
    CHECK(testutil::bit_equal(pa, predict(a, m, {64})));

    const Tensor b = random_tensor<float>({1, 3, 200, 200}, rng, 0, 1);
    std::vector<float> both(a.data().begin(), a.data().end());
    both.insert(both.end(), b.data().begin(), b.data().end());
    const Tensor batch = predict(Tensor({2, 3, 200, 200}, both), m, {64});
    const std::size_t half = 200 * 200;
    for (std::size_t i = 0; i < half; i += 97) CHECK(batch.data()[i] == pa.data()[i]);
    const Tensor pb = predict(b, m, {64});
    for (std::size_t i = 0; i < half; i += 97) CHECK(batch.data()[half + i] == pb.data()[i]);

    const Tensor zero_map = predict(Tensor::zeros({1, 3, 64, 64}), m, {64});
    for (const float v : zero_map.data()) CHECK(std::isfinite(v));
  }

  TEST_CASE("fingerprints separate configurations") {
    NetworkConfig a = NetworkConfig::gmbinet();
    NetworkConfig b = a;
    b.block.interaction = Interaction::sum;
    CHECK(build_gmbinet(a).fingerprint() == build_gmbinet(NetworkConfig::gmbinet()).fingerprint());
    CHECK(build_gmbinet(a).fingerprint() != build_gmbinet(b).fingerprint());
    CHECK(build_gmbinet(a).fingerprint() != build_gmbinet(NetworkConfig::gmbinet(2)).fingerprint());
  }

  TEST_CASE("skip modes and width") {
    for (const SkipMode s : {SkipMode::sum, SkipMode::concat, SkipMode::none}) {
      NetworkConfig cfg = NetworkConfig::gmbinet();
      cfg.skip = s;
      const LayerGraph g = build_gmbinet(cfg);
      CHECK(shape_of(g, g.infer_shapes({1, 3, 64, 64}), "final") == Shape{1, 1, 64, 64});
    }
    NetworkConfig wide = NetworkConfig::gmbinet();
    wide.width = 2.0;
    CHECK(build_gmbinet(wide).parameter_count() > build_gmbinet(NetworkConfig::gmbinet()).parameter_count());
  }

  TEST_CASE("toy network gradients match central differences") {
    std::mt19937_64 rng(6);
    LayerGraph g = build_gmbinet(NetworkConfig::toy());
    ParameterSet<double> p = ParameterSet<float>::initialize(g, 6).cast<double>();
    const Tensor64 x = random_tensor<double>({2, 3, 16, 16}, rng, -1, 1, true);
    const Tensor64 w = random_tensor<double>({2, 1, 16, 16}, rng);
    std::vector<std::pair<std::string, Tensor64>> wrt{{"input", x}};
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p.trainable(i)) wrt.emplace_back(p.name(i), p.at(i));
    const auto rep = testutil::check_gradients(
        [&](Tape<double>* t) {
          return testutil::weighted_sum(forward_saliency(x, g, p, Mode::train, t).final_map, w, t);
        },
        wrt, rng, 8);
    CAPTURE(rep.worst);
    CHECK(rep.max_error < 1e-4);
    CHECK(rep.skipped * 5 <= rep.checked);
  }
}
