// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "gmbinet/errors.hpp"

namespace gmbinet {

namespace {

double ratio(int64_t num, int64_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

void finish_counts(MetricReport& r) {
  const int64_t uni = r.tp + r.fp + r.fn;
  r.iou = uni == 0 ? 1.0 : ratio(r.tp, uni);
  r.overlap_ratio = r.iou;
  const int64_t gt = r.tp + r.fn;
  r.overlap_ratio_gt = gt == 0 ? (r.fp == 0 ? 1.0 : 0.0) : ratio(r.tp, gt);
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = gt == 0 ? (r.fp == 0 ? 1.0 : 0.0) : ratio(r.tp, gt);
  const double pr = r.precision + r.recall;
  r.f_measure = pr == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / pr;
}

std::string format_text(const std::vector<std::pair<std::string, double>>& fields) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (const auto& [k, v] : fields) os << k << '=' << v << '\n';
  return os.str();
}

std::string format_json(const std::vector<std::pair<std::string, double>>& fields) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : fields) j[k] = v;
  return j.dump(2) + "\n";
}

}  // namespace

std::vector<std::pair<std::string, double>> MetricReport::fields() const {
  return {{"mae", mae},
          {"iou", iou},
          {"or", overlap_ratio},
          {"or_gt", overlap_ratio_gt},
          {"precision", precision},
          {"recall", recall},
          {"f_measure", f_measure},
          {"tp", static_cast<double>(tp)},
          {"fp", static_cast<double>(fp)},
          {"fn", static_cast<double>(fn)},
          {"tn", static_cast<double>(tn)}};
}

std::string MetricReport::to_text() const { return format_text(fields()); }
std::string MetricReport::to_json() const { return format_json(fields()); }

MetricReport segmentation_metrics(const Tensor& pred, const Tensor& target, double threshold) {
  if (!pred.defined() || !target.defined() || pred.numel() == 0) throw ShapeError("segmentation_metrics on empty tensors");
  if (pred.shape() != target.shape()) {
    throw ShapeError("segmentation_metrics: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  MetricReport r;
  const auto p = pred.data();
  const auto t = target.data();
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    abs_sum += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
    const bool pp = static_cast<double>(p[i]) >= threshold;
    const bool gg = t[i] >= 0.5f;
    if (pp && gg) ++r.tp;
    else if (pp) ++r.fp;
    else if (gg) ++r.fn;
    else ++r.tn;
  }
  r.mae = abs_sum / static_cast<double>(p.size());
  finish_counts(r);
  return r;
}

MetricReport merge_reports(const std::vector<MetricReport>& reports, const std::vector<int64_t>& pixel_counts) {
  if (reports.empty()) throw ConfigError("no reports to merge");
  if (reports.size() != pixel_counts.size()) throw ConfigError("one pixel count per report is required");
  MetricReport out;
  double mae_sum = 0.0;
  int64_t pixels = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out.tp += reports[i].tp;
    out.fp += reports[i].fp;
    out.fn += reports[i].fn;
    out.tn += reports[i].tn;
    mae_sum += reports[i].mae * static_cast<double>(pixel_counts[i]);
    pixels += pixel_counts[i];
  }
  out.mae = pixels == 0 ? 0.0 : mae_sum / static_cast<double>(pixels);
  finish_counts(out);
  return out;
}

std::vector<std::pair<std::string, double>> ClassificationReport::fields() const {
  return {{"accuracy", accuracy}, {"precision", precision}, {"recall", recall}, {"f1", f1}};
}

std::string ClassificationReport::to_text() const { return format_text(fields()); }
std::string ClassificationReport::to_json() const { return format_json(fields()); }

int64_t argmax_row(const float* row, int64_t count) {
  int64_t best = 0;
  for (int64_t i = 1; i < count; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

ClassificationReport classification_metrics(const Tensor& logits, const std::vector<int64_t>& labels) {
  const Shape s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("logits must be (n, classes, 1, 1), got " + s.str());
  if (static_cast<std::size_t>(s.n) != labels.size()) {
    throw ShapeError("got " + std::to_string(s.n) + " logit rows for " + std::to_string(labels.size()) + " labels");
  }
  if (s.n == 0) throw ShapeError("classification_metrics on an empty batch");
  const int64_t k = s.c;
  ClassificationReport r;
  r.confusion.assign(static_cast<std::size_t>(k), std::vector<int64_t>(static_cast<std::size_t>(k), 0));
  const auto v = logits.data();
  int64_t correct = 0;
  for (int64_t i = 0; i < s.n; ++i) {
    const int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    const int64_t yhat = argmax_row(v.data() + i * k, k);
    ++r.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(yhat)];
    if (y == yhat) ++correct;
  }
  r.accuracy = ratio(correct, s.n);
  int64_t used = 0;
  for (int64_t c = 0; c < k; ++c) {
    int64_t tp = r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    int64_t actual = 0, predicted = 0;
    for (int64_t o = 0; o < k; ++o) {
      actual += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
      predicted += r.confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
    }
    if (actual == 0 && predicted == 0) continue;
    ++used;
    const double p = ratio(tp, predicted);
    const double rc = ratio(tp, actual);
    r.precision += p;
    r.recall += rc;
    r.f1 += (p + rc) == 0.0 ? 0.0 : 2.0 * p * rc / (p + rc);
  }
  r.precision /= static_cast<double>(used);
  r.recall /= static_cast<double>(used);
  r.f1 /= static_cast<double>(used);
  return r;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gmbinet
