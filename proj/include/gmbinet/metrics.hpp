// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gmbinet/tensor.hpp"

namespace gmbinet {

/// Pixel-level saliency metrics on maps binarized at a threshold.
struct MetricReport {
  double mae = 0.0;
  double iou = 0.0;
  double overlap_ratio = 0.0;        ///< |P and G| / |P or G| (same as iou)
  double overlap_ratio_gt = 0.0;     ///< |P and G| / |G| variant
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  /// (name, value) pairs in a fixed order; counts are emitted as reals.
  std::vector<std::pair<std::string, double>> fields() const;
  std::string to_text() const;
  std::string to_json() const;
};

/// Counts-based metrics are derived from the pooled tp/fp/fn/tn, MAE from the
/// per-pixel mean. Empty prediction gives precision 0; empty union gives
/// IoU 1 (both maps empty agree perfectly).
MetricReport segmentation_metrics(const Tensor& pred, const Tensor& target, double threshold = 0.5);

/// Aggregates per-image reports: counts are pooled, MAE is averaged by pixel
/// count.
MetricReport merge_reports(const std::vector<MetricReport>& reports, const std::vector<int64_t>& pixel_counts);

struct ClassificationReport {
  double accuracy = 0.0;
  double precision = 0.0;  ///< macro
  double recall = 0.0;     ///< macro
  double f1 = 0.0;         ///< macro
  std::vector<std::vector<int64_t>> confusion;  ///< [true][predicted]

  std::vector<std::pair<std::string, double>> fields() const;
  std::string to_text() const;
  std::string to_json() const;
};

/// Index of the largest value; ties go to the lowest index.
int64_t argmax_row(const float* row, int64_t count);

/// logits (n, classes, 1, 1); labels in [0, classes). Classes that never occur
/// and are never predicted are left out of the macro averages.
ClassificationReport classification_metrics(const Tensor& logits, const std::vector<int64_t>& labels);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace gmbinet
