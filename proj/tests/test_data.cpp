// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "gmbinet/data.hpp"
#include "gmbinet/errors.hpp"
#include "gmbinet/image_io.hpp"
#include "test_util.hpp"

using namespace gmbinet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmbinet_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 8-connected components of a binary plane.
int components(const Tensor& mask) {
  const Shape s = mask.shape();
  std::vector<int> seen(static_cast<std::size_t>(s.plane()), 0);
  int count = 0;
  for (int64_t start = 0; start < s.plane(); ++start) {
    if (mask.data()[start] < 0.5f || seen[start]) continue;
    ++count;
    std::vector<int64_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const int64_t i = stack.back();
      stack.pop_back();
      const int64_t y = i / s.w, x = i % s.w;
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          const int64_t yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= s.h || xx >= s.w) continue;
          const int64_t j = yy * s.w + xx;
          if (seen[j] || mask.data()[j] < 0.5f) continue;
          seen[j] = 1;
          stack.push_back(j);
        }
    }
  }
  return count;
}

Image8 gray(int64_t w, int64_t h, uint8_t value) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<std::size_t>(w * h), value);
  return img;
}

double iou(const Tensor& a, const Tensor& b) {
  int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const bool p = a.data()[i] >= 0.5f, q = b.data()[i] >= 0.5f;
    inter += p && q;
    uni += p || q;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("generator determinism and masks") {
    for (const DefectKind k : {DefectKind::scratch, DefectKind::patch, DefectKind::inclusion}) {
      for (uint64_t seed = 0; seed < 8; ++seed) {
        SynthSpec spec;
        spec.kind = k;
        spec.seed = seed;
        const Sample a = generate(spec), b = generate(spec);
        CHECK(testutil::bit_equal(a.image, b.image));
        CHECK(testutil::bit_equal(a.mask, b.mask));
        CHECK(a.image.shape() == Shape{1, 3, 64, 64});
        int64_t on = 0;
        for (const float v : a.mask.data()) {
          CHECK((v == 0.0f || v == 1.0f));
          on += v == 1.0f;
        }
        CHECK(on > 0);
        for (const float v : a.image.data()) CHECK((v >= 0.0f && v <= 1.0f));
      }
    }
    SynthSpec none;
    none.min_defects = none.max_defects = 0;
    const Sample empty = generate(none);
    for (const float v : empty.mask.data()) CHECK(v == 0.0f);
    SynthSpec small;
    small.size = 32;
    CHECK_THROWS_AS(generate(small), ConfigError);
    CHECK_THROWS_AS(parse_defect_kind("crack"), ConfigError);
  }

  TEST_CASE("a single scratch is one connected component") {
    for (uint64_t seed = 0; seed < 40; ++seed) {
      SynthSpec spec;
      spec.seed = seed;
      CAPTURE(seed);
      CHECK(components(generate(spec).mask) == 1);
    }
  }

  TEST_CASE("noise touches the image only") {
    SynthSpec clean, noisy;
    clean.salt_pepper = 0.0;
    noisy.salt_pepper = 0.3;
    const Sample a = generate(clean), b = generate(noisy);
    CHECK(testutil::bit_equal(a.mask, b.mask));
    CHECK_FALSE(testutil::bit_equal(a.image, b.image));
  }

  TEST_CASE("dataset generation is seeded") {
    const auto a = generate_dataset(5, 64, 3);
    const auto b = generate_dataset(5, 64, 3);
    const auto c = generate_dataset(5, 64, 4);
    CHECK(a[4].id == "synth_0004");
    CHECK(testutil::bit_equal(a[2].image, b[2].image));
    CHECK_FALSE(testutil::bit_equal(a[2].image, c[2].image));
    CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
    CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
  }

  TEST_CASE("loading image/mask pairs") {
    const fs::path root = scratch_dir("load");
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const std::string stem : {"c", "a", "b"}) {
      write_png(gray(4, 3, 90), root / "images" / (stem + ".png"));
      Image8 m = gray(4, 3, 100);
      m.pixels[0] = 200;
      m.pixels[1] = 128;
      m.pixels[2] = 127;
      write_png(m, root / "masks" / (stem + ".png"));
    }
    const auto samples = load_dataset(root);
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].id == "a");
    CHECK(samples[1].id == "b");
    CHECK(samples[2].id == "c");
    CHECK(samples[0].image.shape() == Shape{1, 3, 3, 4});
    CHECK(samples[0].image.at(0, 2, 1, 1) == doctest::Approx(90.0 / 255.0));
    CHECK(samples[0].mask.data()[0] == 1.0f);
    CHECK(samples[0].mask.data()[1] == 1.0f);
    CHECK(samples[0].mask.data()[2] == 0.0f);
    CHECK(samples[0].mask.data()[3] == 0.0f);

    std::ofstream(root / "split.txt") << "[train]\na\nc\n[test]\nb\n";
    const auto train = load_dataset(root, "train");
    REQUIRE(train.size() == 2);
    CHECK(train[1].id == "c");
    CHECK_THROWS_AS(load_dataset(root, "val"), IoError);

    write_png(gray(4, 3, 10), root / "images" / "orphan.png");
    CHECK_THROWS_WITH_AS(load_dataset(root), doctest::Contains("orphan"), IoError);
    CHECK_THROWS_AS(load_dataset(root / "missing"), IoError);
    fs::remove_all(root);
  }

  TEST_CASE("write and reload a synthetic dataset") {
    const fs::path root = scratch_dir("roundtrip");
    const auto samples = generate_dataset(3, 64, 9);
    write_dataset(samples, root);
    const auto back = load_dataset(root);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].id == samples[i].id);
      CHECK(testutil::bit_equal(back[i].mask, samples[i].mask));
      CHECK(testutil::max_abs_diff(back[i].image, samples[i].image) <= 0.5 / 255.0 + 1e-7);
    }
    fs::remove_all(root);
  }

  TEST_CASE("augmentation") {
    SynthSpec spec;
    spec.kind = DefectKind::patch;
    const Sample s = generate(spec);
    AugmentOptions raw;
    raw.normalize = false;

    AugmentPlan flip;
    flip.flip_h = true;
    const Tensor twice = apply_geometry(apply_geometry(s.image, flip, Resample::bilinear), flip, Resample::bilinear);
    CHECK(testutil::bit_equal(twice, s.image));
    flip.flip_h = false;
    flip.flip_v = true;
    CHECK(testutil::bit_equal(apply_geometry(apply_geometry(s.mask, flip, Resample::nearest), flip, Resample::nearest),
                              s.mask));

    for (uint64_t seed = 0; seed < 30; ++seed) {
      const Sample a = augment(s, seed);
      const Sample b = augment(s, seed);
      CHECK(testutil::bit_equal(a.image, b.image));
      CHECK(testutil::bit_equal(a.mask, b.mask));
      for (const float v : a.mask.data()) CHECK((v == 0.0f || v == 1.0f));
      const AugmentPlan p = sample_plan(64, 64, seed);
      CHECK(p.scale >= 0.8);
      CHECK(p.scale <= 1.2);
      CHECK(std::abs(p.intensity) <= 0.1);
      const Sample r = augment(s, seed, raw);
      for (const float v : r.image.data()) CHECK((v >= 0.0f && v <= 1.0f));
    }
  }

  TEST_CASE("geometry keeps image and mask aligned") {
    SynthSpec spec;
    spec.kind = DefectKind::patch;
    const Sample s = generate(spec);
    for (uint64_t seed = 0; seed < 30; ++seed) {
      AugmentPlan p = sample_plan(64, 64, seed);
      // marker image: the mask itself, carried by the image resampler
      const Tensor marker = apply_geometry(s.mask, p, Resample::bilinear);
      const Tensor moved = apply_geometry(s.mask, p, Resample::nearest);
      CHECK(iou(marker, moved) >= 0.9);
      p.scale = 1.0;
      p.offset_y = static_cast<int64_t>(seed % 7) - 3;
      p.offset_x = 2 - static_cast<int64_t>(seed % 5);
      CHECK(testutil::bit_equal(apply_geometry(s.mask, p, Resample::bilinear), apply_geometry(s.mask, p, Resample::nearest)));
    }
  }

  TEST_CASE("prediction export") {
    const fs::path root = scratch_dir("export");
    std::vector<float> v(200 * 200);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i % 1000) / 999.0f;
    v[0] = 0.0f;
    v[1] = 1.0f;
    const Tensor map({1, 1, 200, 200}, v);
    export_prediction(map, root / "p.png");
    const Image8 img = read_png(root / "p.png");
    CHECK(img.width == 200);
    CHECK(img.height == 200);
    CHECK(img.channels == 1);
    CHECK(img.pixels[0] == 0);
    CHECK(img.pixels[1] == 255);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(img.pixels[i] / 255.0 - v[i]) <= 1.0 / 255.0);
    CHECK_THROWS_AS(export_prediction(Tensor::zeros({1, 3, 4, 4}), root / "q.png"), ShapeError);
    fs::remove_all(root);
  }

  TEST_CASE("grayscale input is replicated to three channels") {
    Image8 g = gray(3, 2, 51);
    const Tensor t = image_to_tensor(g);
    CHECK(t.shape() == Shape{1, 3, 2, 3});
    for (const float v : t.data()) CHECK(v == doctest::Approx(0.2));
  }

  TEST_CASE("batching helpers") {
    std::mt19937_64 rng(1);
    const Tensor a = testutil::random_tensor<float>({1, 2, 3, 3}, rng), b = testutil::random_tensor<float>({1, 2, 3, 3}, rng);
    const Tensor s = stack_batch({a, b});
    CHECK(s.shape() == Shape{2, 2, 3, 3});
    CHECK(testutil::bit_equal(batch_item(s, 1), b));
    CHECK_THROWS_AS(stack_batch({a, testutil::random_tensor<float>({1, 2, 3, 4}, rng)}), ShapeError);
    const Sample big = resize_sample(generate(SynthSpec{}), 96, 96);
    CHECK(big.image.shape() == Shape{1, 3, 96, 96});
    for (const float v : big.mask.data()) CHECK((v == 0.0f || v == 1.0f));
  }
}
