// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmbinet/image_io.hpp"
#include "gmbinet/tensor.hpp"

namespace gmbinet {

/// image: (1, 3, H, W), values in [0, 1] before normalization.
/// mask: (1, 1, H, W), values in {0, 1}. label: class index or -1.
struct Sample {
  std::string id;
  Tensor image;
  Tensor mask;
  int64_t label = -1;
};

enum class DefectKind { scratch, patch, inclusion };

const char* to_string(DefectKind k);
DefectKind parse_defect_kind(const std::string& text);

struct SynthSpec {
  DefectKind kind = DefectKind::scratch;
  int64_t size = 64;
  int64_t min_defects = 1;
  int64_t max_defects = 1;
  double salt_pepper = 0.05;  ///< per-pixel corruption probability, image only
  uint64_t seed = 0;

  void validate() const;
};

Sample generate(const SynthSpec& spec, const std::string& id = "synth");

/// count samples cycling through scratch, patch, inclusion; sample i uses a
/// seed derived from (seed, i) and id synth_%04d.
std::vector<Sample> generate_dataset(int64_t count, int64_t size, uint64_t seed, double salt_pepper = 0.05);

/// splitmix64 of the global seed mixed with the FNV-1a hash of the id.
uint64_t derive_seed(uint64_t global_seed, const std::string& id);
uint64_t derive_seed(uint64_t global_seed, uint64_t index);

Tensor image_to_tensor(const Image8& image);      ///< gray replicated to 3 channels
Tensor mask_to_tensor(const Image8& image);       ///< first channel >= 128 -> 1
Image8 tensor_to_image(const Tensor& map);        ///< (1, 1|3, H, W) in [0, 1] -> round(255 p)

/// Pairs <root>/images/*.png with <root>/masks/<stem>.png, sorted by stem.
/// With a split name, only stems listed under "[split]" in <root>/split.txt
/// are loaded.
std::vector<Sample> load_dataset(const std::filesystem::path& root, const std::string& split = {});

/// Writes images/ and masks/ PNGs; the inverse of load_dataset.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

/// <root>/<class>/*.png; classes sorted by name, label = class index.
struct ClassificationSet {
  std::vector<std::string> classes;
  std::vector<Sample> samples;
};
ClassificationSet load_classification(const std::filesystem::path& root);

/// Random parameters of one augmentation draw.
struct AugmentPlan {
  bool flip_h = false;
  bool flip_v = false;
  double intensity = 0.0;
  double scale = 1.0;
  int64_t offset_y = 0;  ///< crop (>= 0) or pad (< 0) offset in the scaled frame
  int64_t offset_x = 0;
};

struct AugmentOptions {
  double flip_probability = 0.5;
  double intensity_range = 0.1;
  double scale_min = 0.8;
  double scale_max = 1.2;
  bool normalize = true;
};

AugmentPlan sample_plan(int64_t height, int64_t width, uint64_t seed, const AugmentOptions& options = {});

enum class Resample { bilinear, nearest };

/// Applies the flips, scaling and crop/pad of a plan. Output keeps (H, W).
/// Both resamplers use the same pixel-centre mapping, so image and mask stay
/// aligned. Pixels padded in take fill.
Tensor apply_geometry(const Tensor& x, const AugmentPlan& plan, Resample mode, float fill = 0.0f);

/// Flips, intensity shift (image only, clamped to [0, 1]), scale with
/// crop/pad, then per-image z-score. Masks use nearest-neighbour sampling.
Sample augment(const Sample& s, uint64_t seed, const AugmentOptions& options = {});

/// Z-score only; the evaluation-time counterpart of augment.
Sample normalize_sample(const Sample& s);

/// Image bilinear, mask nearest; no-op when already at the size.
Sample resize_sample(const Sample& s, int64_t height, int64_t width);

/// Concatenates (1, C, H, W) tensors along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& items);
/// Item i of a batch as (1, C, H, W).
Tensor batch_item(const Tensor& batch, int64_t index);

/// 8-bit grayscale PNG with value round(255 p).
void export_prediction(const Tensor& map, const std::filesystem::path& path);

}  // namespace gmbinet
