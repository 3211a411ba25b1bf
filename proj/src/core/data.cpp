// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "gmbinet/errors.hpp"
#include "gmbinet/graph.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

namespace fs = std::filesystem;

namespace {

// Portable draws from raw generator bits (the std distributions are
// implementation-defined).
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * u01(rng); }
int64_t randint(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct Canvas {
  int64_t size;
  std::vector<double> background;
  std::vector<double> delta;  // intensity offset of the defect covering each pixel
  std::vector<uint8_t> mask;

  explicit Canvas(int64_t n)
      : size(n),
        background(static_cast<std::size_t>(n * n)),
        delta(static_cast<std::size_t>(n * n), 0.0),
        mask(static_cast<std::size_t>(n * n), 0) {}

  void mark(int64_t x, int64_t y, double d) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    const auto i = static_cast<std::size_t>(y * size + x);
    mask[i] = 1;
    delta[i] = d;
  }
};

void paint_background(Canvas& cv, std::mt19937_64& rng) {
  const double base = uniform(rng, 0.45, 0.65);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) {
    const double freq = uniform(rng, 0.02, 0.15) * 2.0 * std::numbers::pi;
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    waves.push_back({freq * std::cos(angle), freq * std::sin(angle), uniform(rng, 0.0, 2.0 * std::numbers::pi),
                     uniform(rng, 0.01, 0.04)});
  }
  for (int64_t y = 0; y < cv.size; ++y) {
    for (int64_t x = 0; x < cv.size; ++x) {
      double v = base;
      for (const auto& w : waves) v += w.amp * std::sin(w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y) + w.phase);
      v += uniform(rng, -0.03, 0.03);
      cv.background[static_cast<std::size_t>(y * cv.size + x)] = v;
    }
  }
}

void paint_disc(Canvas& cv, double cx, double cy, double r, double d) {
  const auto x0 = static_cast<int64_t>(std::floor(cx - r));
  const auto x1 = static_cast<int64_t>(std::ceil(cx + r));
  const auto y0 = static_cast<int64_t>(std::floor(cy - r));
  const auto y1 = static_cast<int64_t>(std::ceil(cy + r));
  for (int64_t y = y0; y <= y1; ++y) {
    for (int64_t x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy <= r * r) cv.mark(x, y, d);
    }
  }
}

// Thin polyline with frequent sharp bends, kept inside a margin so it never
// leaves and re-enters the canvas.
void paint_scratch(Canvas& cv, std::mt19937_64& rng) {
  const auto n = static_cast<double>(cv.size);
  const double radius = uniform(rng, 1.0, 1.6);
  const double margin = radius + 1.0;
  double x = uniform(rng, 0.2 * n, 0.8 * n);
  double y = uniform(rng, 0.2 * n, 0.8 * n);
  double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const auto steps = static_cast<int64_t>(uniform(rng, 0.4, 0.8) * n);
  const double d = -uniform(rng, 0.25, 0.4);
  paint_disc(cv, x, y, radius, d);
  for (int64_t s = 0; s < steps; ++s) {
    heading += uniform(rng, -0.35, 0.35);
    if (u01(rng) < 0.1) heading += uniform(rng, -1.2, 1.2);
    double nx = x + std::cos(heading);
    double ny = y + std::sin(heading);
    if (nx < margin || nx > n - 1.0 - margin) {
      heading = std::numbers::pi - heading;
      nx = std::clamp(nx, margin, n - 1.0 - margin);
    }
    if (ny < margin || ny > n - 1.0 - margin) {
      heading = -heading;
      ny = std::clamp(ny, margin, n - 1.0 - margin);
    }
    for (int t = 1; t <= 2; ++t) {
      const double a = t / 2.0;
      paint_disc(cv, x + a * (nx - x), y + a * (ny - y), radius, d);
    }
    x = nx;
    y = ny;
  }
}

// Star-shaped blob with a few random boundary harmonics.
void paint_patch(Canvas& cv, std::mt19937_64& rng) {
  const auto n = static_cast<double>(cv.size);
  const double cx = uniform(rng, 0.25 * n, 0.75 * n);
  const double cy = uniform(rng, 0.25 * n, 0.75 * n);
  const double base = uniform(rng, 0.08, 0.16) * n;
  double amp[3], phase[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = uniform(rng, 0.0, 0.22);
    phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  const double d = (u01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.2, 0.35);
  const double reach = base * 1.7;
  for (auto y = static_cast<int64_t>(cy - reach); y <= static_cast<int64_t>(cy + reach); ++y) {
    for (auto x = static_cast<int64_t>(cx - reach); x <= static_cast<int64_t>(cx + reach); ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double theta = std::atan2(dy, dx);
      double r = base;
      for (int k = 0; k < 3; ++k) r += base * amp[k] * std::sin((k + 2) * theta + phase[k]);
      if (std::hypot(dx, dy) <= std::max(r, 1.0)) cv.mark(x, y, d);
    }
  }
}

// Cluster of small dark ellipses.
void paint_inclusion(Canvas& cv, std::mt19937_64& rng) {
  const auto n = static_cast<double>(cv.size);
  const double cx = uniform(rng, 0.2 * n, 0.8 * n);
  const double cy = uniform(rng, 0.2 * n, 0.8 * n);
  const int64_t parts = randint(rng, 3, 6);
  const double d = -uniform(rng, 0.3, 0.45);
  for (int64_t i = 0; i < parts; ++i) {
    const double ex = cx + uniform(rng, -0.08, 0.08) * n;
    const double ey = cy + uniform(rng, -0.08, 0.08) * n;
    const double a = uniform(rng, 1.2, 3.0);
    const double b = uniform(rng, 1.2, 3.0);
    const double rot = uniform(rng, 0.0, std::numbers::pi);
    const double c = std::cos(rot), s = std::sin(rot);
    const double reach = std::max(a, b) + 1.0;
    for (auto y = static_cast<int64_t>(std::floor(ey - reach)); y <= static_cast<int64_t>(std::ceil(ey + reach)); ++y) {
      for (auto x = static_cast<int64_t>(std::floor(ex - reach)); x <= static_cast<int64_t>(std::ceil(ex + reach)); ++x) {
        const double dx = static_cast<double>(x) - ex;
        const double dy = static_cast<double>(y) - ey;
        const double u = (c * dx + s * dy) / a;
        const double v = (-s * dx + c * dy) / b;
        if (u * u + v * v <= 1.0) cv.mark(x, y, d);
      }
    }
  }
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return stem_of(a) < stem_of(b); });
  return files;
}

std::map<std::string, std::vector<std::string>> read_split_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read split manifest " + file.string());
  std::map<std::string, std::vector<std::string>> sections;
  std::string current;
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    if (line.front() == '[' && line.back() == ']') {
      current = line.substr(1, line.size() - 2);
      sections[current];
      continue;
    }
    if (current.empty()) throw IoError(file.string() + ": stem '" + line + "' appears before any [section]");
    sections[current].push_back(line);
  }
  return sections;
}

}  // namespace

const char* to_string(DefectKind k) {
  switch (k) {
    case DefectKind::scratch: return "scratch";
    case DefectKind::patch: return "patch";
    case DefectKind::inclusion: return "inclusion";
  }
  return "?";
}

DefectKind parse_defect_kind(const std::string& text) {
  for (const auto k : {DefectKind::scratch, DefectKind::patch, DefectKind::inclusion}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown defect kind '" + text + "' (expected scratch, patch or inclusion)");
}

void SynthSpec::validate() const {
  if (size < 64) throw ConfigError("synthetic canvas must be at least 64 pixels, got " + std::to_string(size));
  if (min_defects < 0 || max_defects < min_defects) {
    throw ConfigError("invalid defect count range [" + std::to_string(min_defects) + ", " + std::to_string(max_defects) + "]");
  }
  if (!(salt_pepper >= 0.0 && salt_pepper <= 1.0)) throw ConfigError("salt-and-pepper probability must lie in [0, 1]");
}

Sample generate(const SynthSpec& spec, const std::string& id) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Canvas cv(spec.size);
  paint_background(cv, rng);
  const int64_t count = randint(rng, spec.min_defects, spec.max_defects);
  for (int64_t i = 0; i < count; ++i) {
    switch (spec.kind) {
      case DefectKind::scratch: paint_scratch(cv, rng); break;
      case DefectKind::patch: paint_patch(cv, rng); break;
      case DefectKind::inclusion: paint_inclusion(cv, rng); break;
    }
  }
  const int64_t plane = spec.size * spec.size;
  std::vector<float> image(static_cast<std::size_t>(3 * plane));
  std::vector<float> mask(static_cast<std::size_t>(plane));
  for (int64_t i = 0; i < plane; ++i) {
    const auto j = static_cast<std::size_t>(i);
    double v = std::clamp(cv.background[j] + cv.delta[j], 0.0, 1.0);
    if (spec.salt_pepper > 0.0 && u01(rng) < spec.salt_pepper) v = u01(rng) < 0.5 ? 0.0 : 1.0;
    for (int64_t c = 0; c < 3; ++c) image[static_cast<std::size_t>(c * plane + i)] = static_cast<float>(v);
    mask[j] = static_cast<float>(cv.mask[j]);
  }
  return {id, Tensor({1, 3, spec.size, spec.size}, std::move(image)), Tensor({1, 1, spec.size, spec.size}, std::move(mask)),
          -1};
}

std::vector<Sample> generate_dataset(int64_t count, int64_t size, uint64_t seed, double salt_pepper) {
  if (count < 1) throw ConfigError("synthetic dataset needs at least one sample");
  const DefectKind kinds[] = {DefectKind::scratch, DefectKind::patch, DefectKind::inclusion};
  std::vector<Sample> out;
  for (int64_t i = 0; i < count; ++i) {
    SynthSpec spec;
    spec.kind = kinds[i % 3];
    spec.size = size;
    spec.min_defects = 1;
    spec.max_defects = 2;
    spec.salt_pepper = salt_pepper;
    spec.seed = derive_seed(seed, static_cast<uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04lld", static_cast<long long>(i));
    out.push_back(generate(spec, id));
  }
  return out;
}

uint64_t derive_seed(uint64_t global_seed, const std::string& id) { return splitmix64(global_seed ^ fnv1a64(id)); }
uint64_t derive_seed(uint64_t global_seed, uint64_t index) { return splitmix64(global_seed ^ splitmix64(index)); }

Tensor image_to_tensor(const Image8& img) {
  const int64_t plane = img.width * img.height;
  std::vector<float> v(static_cast<std::size_t>(3 * plane));
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      const int64_t src = img.channels == 1 ? i : i * 3 + c;
      v[static_cast<std::size_t>(c * plane + i)] = static_cast<float>(img.pixels[static_cast<std::size_t>(src)]) / 255.0f;
    }
  }
  return Tensor({1, 3, img.height, img.width}, std::move(v));
}

Tensor mask_to_tensor(const Image8& img) {
  const int64_t plane = img.width * img.height;
  std::vector<float> v(static_cast<std::size_t>(plane));
  for (int64_t i = 0; i < plane; ++i) {
    v[static_cast<std::size_t>(i)] = img.pixels[static_cast<std::size_t>(i * img.channels)] >= 128 ? 1.0f : 0.0f;
  }
  return Tensor({1, 1, img.height, img.width}, std::move(v));
}

Image8 tensor_to_image(const Tensor& map) {
  const Shape s = map.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("expected a (1, 1|3, H, W) map, got " + s.str());
  Image8 img;
  img.width = s.w;
  img.height = s.h;
  img.channels = static_cast<int>(s.c);
  const int64_t plane = s.h * s.w;
  img.pixels.resize(static_cast<std::size_t>(plane * s.c));
  const auto v = map.data();
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < s.c; ++c) {
      const double p = std::clamp(static_cast<double>(v[static_cast<std::size_t>(c * plane + i)]), 0.0, 1.0);
      img.pixels[static_cast<std::size_t>(i * s.c + c)] = static_cast<uint8_t>(std::lround(255.0 * p));
    }
  }
  return img;
}

std::vector<Sample> load_dataset(const fs::path& root, const std::string& split) {
  const fs::path images = root / "images";
  const fs::path masks = root / "masks";
  if (!fs::is_directory(images)) throw IoError("dataset has no images/ directory: " + root.string());
  if (!fs::is_directory(masks)) throw IoError("dataset has no masks/ directory: " + root.string());
  std::vector<fs::path> files = sorted_pngs(images);
  if (!split.empty()) {
    const auto sections = read_split_manifest(root / "split.txt");
    const auto it = sections.find(split);
    if (it == sections.end()) throw IoError("split.txt has no [" + split + "] section");
    const std::set<std::string> wanted(it->second.begin(), it->second.end());
    std::set<std::string> present;
    for (const auto& f : files) present.insert(stem_of(f));
    std::string missing;
    for (const auto& w : wanted) {
      if (!present.count(w)) missing += (missing.empty() ? "" : ", ") + w;
    }
    if (!missing.empty()) throw IoError("split [" + split + "] lists stems without images: " + missing);
    std::erase_if(files, [&](const fs::path& f) { return !wanted.count(stem_of(f)); });
  }
  std::string offenders;
  for (const auto& f : files) {
    if (!fs::exists(masks / (stem_of(f) + ".png"))) offenders += (offenders.empty() ? "" : ", ") + stem_of(f);
  }
  if (!offenders.empty()) throw IoError("images without masks: " + offenders);
  std::vector<Sample> out;
  for (const auto& f : files) {
    const std::string stem = stem_of(f);
    const Image8 img = read_png(f);
    const Image8 msk = read_png(masks / (stem + ".png"));
    if (img.width != msk.width || img.height != msk.height) {
      throw IoError("image and mask sizes differ for '" + stem + "'");
    }
    out.push_back({stem, image_to_tensor(img), mask_to_tensor(msk), -1});
  }
  return out;
}

void write_dataset(const std::vector<Sample>& samples, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  for (const auto& s : samples) {
    write_png(tensor_to_image(s.image), root / "images" / (s.id + ".png"));
    write_png(tensor_to_image(s.mask), root / "masks" / (s.id + ".png"));
  }
}

ClassificationSet load_classification(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("classification root is not a directory: " + root.string());
  ClassificationSet set;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) set.classes.push_back(e.path().filename().string());
  }
  std::sort(set.classes.begin(), set.classes.end());
  for (std::size_t c = 0; c < set.classes.size(); ++c) {
    for (const auto& f : sorted_pngs(root / set.classes[c])) {
      set.samples.push_back({set.classes[c] + "/" + stem_of(f), image_to_tensor(read_png(f)), Tensor(),
                             static_cast<int64_t>(c)});
    }
  }
  return set;
}

AugmentPlan sample_plan(int64_t height, int64_t width, uint64_t seed, const AugmentOptions& o) {
  std::mt19937_64 rng(seed);
  AugmentPlan p;
  p.flip_h = u01(rng) < o.flip_probability;
  p.flip_v = u01(rng) < o.flip_probability;
  p.intensity = uniform(rng, -o.intensity_range, o.intensity_range);
  p.scale = uniform(rng, o.scale_min, o.scale_max);
  const auto sh = static_cast<int64_t>(std::lround(p.scale * static_cast<double>(height)));
  const auto sw = static_cast<int64_t>(std::lround(p.scale * static_cast<double>(width)));
  p.offset_y = sh >= height ? randint(rng, 0, sh - height) : randint(rng, sh - height, 0);
  p.offset_x = sw >= width ? randint(rng, 0, sw - width) : randint(rng, sw - width, 0);
  return p;
}

Tensor apply_geometry(const Tensor& x, const AugmentPlan& plan, Resample mode, float fill) {
  const Shape s = x.shape();
  const auto sh = static_cast<int64_t>(std::lround(plan.scale * static_cast<double>(s.h)));
  const auto sw = static_cast<int64_t>(std::lround(plan.scale * static_cast<double>(s.w)));
  if (sh < 1 || sw < 1) throw ConfigError("augmentation scale collapses the image");
  const double ry = static_cast<double>(s.h) / static_cast<double>(sh);
  const double rx = static_cast<double>(s.w) / static_cast<double>(sw);
  const auto v = x.data();
  std::vector<float> out(v.size());
  for (int64_t p = 0; p < s.n * s.c; ++p) {
    const float* src = v.data() + p * s.h * s.w;
    float* dst = out.data() + p * s.h * s.w;
    for (int64_t y = 0; y < s.h; ++y) {
      const int64_t u = y + plan.offset_y;
      double sy = (static_cast<double>(u) + 0.5) * ry - 0.5;
      if (plan.flip_v) sy = static_cast<double>(s.h - 1) - sy;
      for (int64_t xx = 0; xx < s.w; ++xx) {
        const int64_t t = xx + plan.offset_x;
        float& o = dst[y * s.w + xx];
        if (u < 0 || u >= sh || t < 0 || t >= sw) {
          o = fill;
          continue;
        }
        double sx = (static_cast<double>(t) + 0.5) * rx - 0.5;
        if (plan.flip_h) sx = static_cast<double>(s.w - 1) - sx;
        if (mode == Resample::nearest) {
          const int64_t iy = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy + 0.5)), 0, s.h - 1);
          const int64_t ix = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx + 0.5)), 0, s.w - 1);
          o = src[iy * s.w + ix];
        } else {
          const double cy = std::clamp(sy, 0.0, static_cast<double>(s.h - 1));
          const double cx = std::clamp(sx, 0.0, static_cast<double>(s.w - 1));
          const auto y0 = static_cast<int64_t>(std::floor(cy));
          const auto x0 = static_cast<int64_t>(std::floor(cx));
          const int64_t y1 = std::min(y0 + 1, s.h - 1);
          const int64_t x1 = std::min(x0 + 1, s.w - 1);
          const double fy = cy - static_cast<double>(y0);
          const double fx = cx - static_cast<double>(x0);
          const double top = (1.0 - fx) * src[y0 * s.w + x0] + fx * src[y0 * s.w + x1];
          const double bot = (1.0 - fx) * src[y1 * s.w + x0] + fx * src[y1 * s.w + x1];
          o = static_cast<float>((1.0 - fy) * top + fy * bot);
        }
      }
    }
  }
  return Tensor(s, std::move(out));
}

Sample augment(const Sample& s, uint64_t seed, const AugmentOptions& options) {
  const Shape is = s.image.shape();
  const AugmentPlan plan = sample_plan(is.h, is.w, seed, options);
  Tensor shifted = s.image.clone();
  double mean = 0.0;
  for (auto& v : shifted.mutable_data()) {
    v = std::clamp(static_cast<float>(v + plan.intensity), 0.0f, 1.0f);
    mean += v;
  }
  mean /= static_cast<double>(std::max<int64_t>(shifted.numel(), 1));
  Sample out;
  out.id = s.id;
  out.label = s.label;
  out.image = apply_geometry(shifted, plan, Resample::bilinear, static_cast<float>(mean));
  if (s.mask.defined()) out.mask = apply_geometry(s.mask, plan, Resample::nearest, 0.0f);
  if (options.normalize) out.image = standardize(out.image);
  return out;
}

Sample normalize_sample(const Sample& s) {
  Sample out = s;
  out.image = standardize(s.image);
  return out;
}

Sample resize_sample(const Sample& s, int64_t height, int64_t width) {
  const Shape is = s.image.shape();
  if (is.h == height && is.w == width) return s;
  Sample out = s;
  out.image = resize_bilinear(s.image, height, width);
  if (s.mask.defined()) {
    const Shape ms = s.mask.shape();
    std::vector<float> v(static_cast<std::size_t>(ms.n * ms.c * height * width));
    const auto src = s.mask.data();
    for (int64_t p = 0; p < ms.n * ms.c; ++p) {
      for (int64_t y = 0; y < height; ++y) {
        const int64_t sy = height == 1 ? 0 : std::lround(static_cast<double>(y) * static_cast<double>(ms.h - 1) / static_cast<double>(height - 1));
        for (int64_t x = 0; x < width; ++x) {
          const int64_t sx = width == 1 ? 0 : std::lround(static_cast<double>(x) * static_cast<double>(ms.w - 1) / static_cast<double>(width - 1));
          v[static_cast<std::size_t>((p * height + y) * width + x)] = src[static_cast<std::size_t>((p * ms.h + sy) * ms.w + sx)];
        }
      }
    }
    out.mask = Tensor({ms.n, ms.c, height, width}, std::move(v));
  }
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("cannot stack an empty batch");
  const Shape first = items.front().shape();
  std::vector<float> v;
  v.reserve(static_cast<std::size_t>(first.numel()) * items.size());
  int64_t n = 0;
  for (const auto& t : items) {
    const Shape s = t.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError("batch items differ in shape: " + first.str() + " vs " + s.str());
    }
    n += s.n;
    const auto d = t.data();
    v.insert(v.end(), d.begin(), d.end());
  }
  return Tensor({n, first.c, first.h, first.w}, std::move(v));
}

Tensor batch_item(const Tensor& batch, int64_t index) {
  const Shape s = batch.shape();
  if (index < 0 || index >= s.n) throw ShapeError("batch index " + std::to_string(index) + " out of range for " + s.str());
  const int64_t per = s.c * s.h * s.w;
  const auto d = batch.data();
  return Tensor({1, s.c, s.h, s.w}, std::vector<float>(d.begin() + index * per, d.begin() + (index + 1) * per));
}

void export_prediction(const Tensor& map, const fs::path& path) {
  const Shape s = map.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("export_prediction expects a (1, 1, H, W) map, got " + s.str());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png(tensor_to_image(map), path);
}

}  // namespace gmbinet
