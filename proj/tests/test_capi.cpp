// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <filesystem>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "gmbinet/gmbinet.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json take(char* text) {
  REQUIRE(text != nullptr);
  json j = json::parse(text);
  gmbi_string_free(text);
  return j;
}

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("gmbinet_capi_" + name + "_" + std::to_string(::getpid()));
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("create, inspect and free") {
    gmbi_model* m = nullptr;
    REQUIRE(gmbi_model_create(nullptr, 1, &m) == GMBI_OK);
    CHECK(std::string(gmbi_last_error()).empty());
    int64_t params = 0;
    CHECK(gmbi_model_param_count(m, &params) == GMBI_OK);
    CHECK(params == 190608);
    char* cfg = nullptr;
    CHECK(gmbi_model_config(m, &cfg) == GMBI_OK);
    const json c = take(cfg);
    CHECK(c.is_object());
    char* cost = nullptr;
    CHECK(gmbi_model_cost(m, 512, 512, 0, &cost) == GMBI_OK);
    const json k = take(cost);
    CHECK(k.at("params").get<int64_t>() == params);
    CHECK(k.at("macs").get<int64_t>() > 0);
    gmbi_model_free(m);
    gmbi_model_free(nullptr);
    CHECK(std::string(gmbi_version()).size() > 0);
    CHECK(std::string(gmbi_status_name(GMBI_ERR_INCOMPATIBLE)).size() > 0);
  }

  TEST_CASE("argument and configuration errors") {
    CHECK(gmbi_model_create(nullptr, 1, nullptr) == GMBI_ERR_INVALID_ARGUMENT);
    CHECK(std::string(gmbi_last_error()).size() > 0);
    gmbi_model* m = nullptr;
    CHECK(gmbi_model_create("{\"scale_dim\": 3}", 1, &m) == GMBI_ERR_CONFIG);
    CHECK(m == nullptr);
    CHECK(gmbi_model_create("{\"bogus\": 1}", 1, &m) == GMBI_ERR_CONFIG);
    CHECK(std::string(gmbi_last_error()).find("bogus") != std::string::npos);
    CHECK(gmbi_model_create("{not json", 1, &m) == GMBI_ERR_INVALID_ARGUMENT);
    CHECK(gmbi_model_param_count(nullptr, nullptr) == GMBI_ERR_INVALID_ARGUMENT);
    CHECK(gmbi_model_load(scratch("missing").c_str(), &m) == GMBI_ERR_IO);
  }

  TEST_CASE("errors are per thread") {
    gmbi_model* m = nullptr;
    CHECK(gmbi_model_create("{\"scale_dim\": 3}", 1, &m) == GMBI_ERR_CONFIG);
    std::string other;
    std::thread([&] { other = gmbi_last_error(); }).join();
    CHECK(other.empty());
    CHECK_FALSE(std::string(gmbi_last_error()).empty());
  }

  TEST_CASE("predict into a caller buffer") {
    gmbi_model* m = nullptr;
    REQUIRE(gmbi_model_create("{\"preset\": \"toy\"}", 2, &m) == GMBI_OK);
    const int64_t h = 40, w = 50;
    std::vector<float> image(3 * h * w, 0.25f);
    for (std::size_t i = 0; i < image.size(); i += 7) image[i] = 0.9f;
    std::vector<float> out(h * w, -1.0f);
    CHECK(gmbi_predict(m, image.data(), h, w, 32, out.data()) == GMBI_OK);
    for (const float v : out) CHECK((v >= 0.0f && v <= 1.0f));
    CHECK(gmbi_predict(m, image.data(), h, w, 30, out.data()) == GMBI_ERR_SHAPE);
    CHECK(gmbi_predict(m, nullptr, h, w, 32, out.data()) == GMBI_ERR_INVALID_ARGUMENT);
    gmbi_model_free(m);
  }

  TEST_CASE("save, load and fingerprint checks") {
    const fs::path p = scratch("model.ckpt");
    gmbi_model* a = nullptr;
    gmbi_model* b = nullptr;
    gmbi_model* c = nullptr;
    REQUIRE(gmbi_model_create("{\"preset\": \"toy\", \"interaction\": \"sum\"}", 3, &a) == GMBI_OK);
    REQUIRE(gmbi_model_save(a, p.c_str()) == GMBI_OK);
    REQUIRE(gmbi_model_load(p.c_str(), &b) == GMBI_OK);
    uint64_t fa = 0, fb = 0;
    gmbi_model_fingerprint(a, &fa);
    gmbi_model_fingerprint(b, &fb);
    CHECK(fa == fb);
    REQUIRE(gmbi_model_create("{\"preset\": \"toy\"}", 3, &c) == GMBI_OK);
    CHECK(gmbi_model_load_weights(c, p.c_str()) == GMBI_ERR_INCOMPATIBLE);
    CHECK(std::string(gmbi_last_error()).find("fingerprint") != std::string::npos);
    gmbi_model_free(a);
    gmbi_model_free(b);
    gmbi_model_free(c);
    fs::remove(p);
  }

  TEST_CASE("analyze") {
    char* out = nullptr;
    REQUIRE(gmbi_analyze("{\"c\": 32, \"h\": 16, \"w\": 16, \"n\": [1, 2, 4, 8]}", &out) == GMBI_OK);
    const json j = take(out);
    int64_t gmbi = -1;
    int64_t prev_mb = 0;
    for (const auto& row : j.at("rows")) {
      CHECK(row.at("counted_macs") == row.at("analytic_macs"));
      if (row.at("family") == "gmbi") {
        if (gmbi < 0) gmbi = row.at("counted_macs").get<int64_t>();
        CHECK(row.at("counted_macs").get<int64_t>() == gmbi);
      }
      if (row.at("family") == "multibranch") {
        CHECK(row.at("counted_macs").get<int64_t>() > prev_mb);
        prev_mb = row.at("counted_macs").get<int64_t>();
      }
    }
    CHECK(gmbi_analyze("{\"c\": 32, \"n\": [3]}", &out) == GMBI_ERR_CONFIG);
  }

  TEST_CASE("synthesize, train and evaluate") {
    const fs::path root = scratch("flow");
    fs::remove_all(root);
    char* out = nullptr;
    const std::string synth = json{{"count", 3}, {"size", 64}, {"seed", 4}, {"out_dir", (root / "data").string()}}.dump();
    REQUIRE(gmbi_synth(synth.c_str(), &out) == GMBI_OK);
    CHECK(take(out).at("samples").size() == 3);

    gmbi_model* m = nullptr;
    REQUIRE(gmbi_model_create("{\"preset\": \"toy\"}", 5, &m) == GMBI_OK);
    int calls = 0;
    const std::string req = json{{"iterations", 4},
                                 {"batch", 2},
                                 {"size", 32},
                                 {"seed", 1},
                                 {"eval_every", 0},
                                 {"checkpoint_every", 0},
                                 {"out_dir", (root / "run").string()},
                                 {"data", {{"dir", (root / "data").string()}}}}
                                .dump();
    auto progress = [](int64_t, double, double loss, double, double, void* user) {
      CHECK(loss > 0.0);
      ++*static_cast<int*>(user);
    };
    REQUIRE(gmbi_train(m, req.c_str(), progress, &calls, &out) == GMBI_OK);
    const json t = take(out);
    CHECK(calls == 4);
    CHECK(t.at("steps") == 4);
    CHECK(fs::exists(t.at("last_checkpoint").get<std::string>()));

    const std::string ereq =
        json{{"size", 32}, {"data", {{"dir", (root / "data").string()}}}, {"dump_dir", (root / "pred").string()}}.dump();
    REQUIRE(gmbi_evaluate(m, ereq.c_str(), &out) == GMBI_OK);
    const json e = take(out);
    CHECK(e.at("samples") == 3);
    CHECK(e.at("per_image").size() == 3);
    CHECK(std::distance(fs::directory_iterator(root / "pred"), fs::directory_iterator()) == 3);

    CHECK(gmbi_train(m, "{\"out_dir\": \"/tmp\", \"data\": {\"dir\": \"/nonexistent\"}}", nullptr, nullptr, &out) == GMBI_ERR_IO);
    CHECK(gmbi_train(m, "{\"iterations\": 0}", nullptr, nullptr, &out) != GMBI_OK);
    gmbi_model_free(m);
    fs::remove_all(root);
  }

  TEST_CASE("bench") {
    gmbi_model* m = nullptr;
    REQUIRE(gmbi_model_create("{\"preset\": \"toy\"}", 6, &m) == GMBI_OK);
    char* out = nullptr;
    REQUIRE(gmbi_bench(m, 32, 1, 12, 3, 0, &out) == GMBI_OK);
    const json j = take(out);
    CHECK(j.at("timings_ms").size() == 12);
    CHECK(gmbi_bench(m, 32, 1, 5, 3, 0, &out) == GMBI_ERR_CONFIG);
    gmbi_model_free(m);
  }
}
