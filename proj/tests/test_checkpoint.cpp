// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <unistd.h>

#include "gmbinet/checkpoint.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/trainer.hpp"
#include "test_util.hpp"

using namespace gmbinet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("gmbinet_ckpt_" + name + "_" + std::to_string(::getpid()));
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load, save is byte-identical") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 3);
    const fs::path a = temp_file("a"), b = temp_file("b");
    save_model(m, a);
    Model back = load_model(a);
    save_model(back, b);
    CHECK(bytes_of(a) == bytes_of(b));
    CHECK(back.graph.fingerprint() == m.graph.fingerprint());
    CHECK(weights_hash(back.params) == weights_hash(m.params));
    std::mt19937_64 rng(1);
    const Tensor x = testutil::random_tensor<float>({1, 3, 64, 64}, rng, 0, 1);
    CHECK(testutil::bit_equal(predict(x, m, {64}), predict(x, back, {64})));
    fs::remove(a);
    fs::remove(b);
  }

  TEST_CASE("header layout") {
    Checkpoint c;
    c.fingerprint = 0x0102030405060708ull;
    c.metadata = "{}";
    c.names = {"w"};
    c.tensors = {Tensor({1, 1, 1, 2}, {1.0f, -2.0f})};
    const auto bytes = serialize(c);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "GMBICKPT");
    CHECK(bytes[8] == 1);
    CHECK(bytes[12] == 0x08);
    CHECK(bytes[19] == 0x01);
    // 8 + 4 + 8 + (4 + 2) + 4 + (4 + 1) + 4 + 32 + 8
    CHECK(bytes.size() == 79);
    const Checkpoint d = deserialize(bytes);
    CHECK(d.fingerprint == c.fingerprint);
    CHECK(d.metadata == "{}");
    CHECK(d.find("w") != nullptr);
    CHECK(d.find("w")->data()[1] == -2.0f);
    CHECK(d.find("missing") == nullptr);
  }

  TEST_CASE("corrupt files are rejected") {
    Checkpoint c;
    c.names = {"w"};
    c.tensors = {Tensor::zeros({1, 1, 2, 2})};
    auto bytes = serialize(c);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_WITH_AS(deserialize(truncated), doctest::Contains("truncated"), IoError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize(magic), IoError);
    auto version = bytes;
    version[8] = 9;
    CHECK_THROWS_AS(deserialize(version), IncompatibleError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize(trailing), IoError);
    CHECK_THROWS_AS(load_checkpoint(temp_file("does_not_exist")), IoError);
  }

  TEST_CASE("weights only load into the graph they came from") {
    Model m = Model::saliency(NetworkConfig::gmbinet(), 4);
    const Checkpoint c = make_checkpoint(m.graph, m.params);
    NetworkConfig other = NetworkConfig::gmbinet();
    other.block.interaction = Interaction::concat;
    Model n = Model::saliency(other, 4);
    CHECK_THROWS_WITH_AS(apply_checkpoint(c, n.graph, n.params), doctest::Contains("fingerprint"), IncompatibleError);

    Checkpoint partial = c;
    partial.names.pop_back();
    partial.tensors.pop_back();
    Model same = Model::saliency(NetworkConfig::gmbinet(), 5);
    CHECK_THROWS_AS(apply_checkpoint(partial, same.graph, same.params), IncompatibleError);
    apply_checkpoint(c, same.graph, same.params);
    CHECK(weights_hash(same.params) == weights_hash(m.params));
  }

  TEST_CASE("model configuration round trip") {
    NetworkConfig cfg = NetworkConfig::gmbinet(8);
    cfg.block.interaction = Interaction::mul;
    cfg.block.mode = ScaleMode::branch;
    cfg.block.enhancement_order = EnhancementOrder::literal;
    cfg.skip = SkipMode::concat;
    cfg.width = 0.5;
    int64_t classes = -1;
    const NetworkConfig back = decode_model_config(encode_model_config(cfg, 6), &classes);
    CHECK(classes == 6);
    CHECK(back.describe() == cfg.describe());
    CHECK(build_gmbinet(back).fingerprint() == build_gmbinet(cfg).fingerprint());
    CHECK_THROWS_AS(decode_model_config("not json"), IoError);
  }

  TEST_CASE("classifier models round trip") {
    Model m = Model::classifier(4, NetworkConfig::toy(), 6);
    const fs::path p = temp_file("cls");
    save_model(m, p);
    Model back = load_model(p);
    CHECK(back.num_classes == 4);
    std::mt19937_64 rng(2);
    const Tensor x = testutil::random_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
    CHECK(testutil::bit_equal(classify(x, m), classify(x, back)));
    fs::remove(p);
  }
}
