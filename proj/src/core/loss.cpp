// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"

namespace gmbinet {

template <typename T>
BasicTensor<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("bce_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  }
  const auto p = pred.data();
  const auto t = target.data();
  if (p.empty()) throw ShapeError("bce_loss on empty tensors");
  const double lo = kBceEpsilon;
  const double hi = 1.0 - kBceEpsilon;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), lo, hi);
    const double tv = static_cast<double>(t[i]);
    acc -= tv * std::log(pc) + (1.0 - tv) * std::log(1.0 - pc);
  }
  const double count = static_cast<double>(p.size());
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(acc / count));
  if (should_record(tape, {&pred, &target})) {
    result.set_requires_grad(true);
    tape->record([pred, target, result, lo, hi, count]() mutable {
      if (!result.has_grad()) return;
      const double g = static_cast<double>(result.grad()[0]) / count;
      const auto p = pred.data();
      const auto t = target.data();
      if (pred.requires_grad()) {
        auto gp = pred.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double pv = static_cast<double>(p[i]);
          if (pv < lo || pv > hi) continue;  // clamped
          const double tv = static_cast<double>(t[i]);
          gp[i] += static_cast<T>(g * (-tv / pv + (1.0 - tv) / (1.0 - pv)));
        }
      }
      if (target.requires_grad()) {
        auto gt = target.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double pc = std::clamp(static_cast<double>(p[i]), lo, hi);
          gt[i] += static_cast<T>(g * (std::log(1.0 - pc) - std::log(pc)));
        }
      }
    });
  }
  return result;
}

namespace {

std::vector<double> gaussian_kernel(const SsimOptions& o) {
  std::vector<double> k(static_cast<std::size_t>(o.window));
  const double center = (o.window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < o.window; ++i) {
    const double d = i - center;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * o.sigma * o.sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= total;
  return k;
}

// Valid separable filtering of an (h, w) plane into (h - K + 1, w - K + 1).
void filter_valid(const double* in, int64_t h, int64_t w, const std::vector<double>& k, double* out,
                  std::vector<double>& tmp) {
  const auto K = static_cast<int64_t>(k.size());
  const int64_t ow = w - K + 1;
  const int64_t oh = h - K + 1;
  tmp.assign(static_cast<std::size_t>(h * ow), 0.0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int64_t t = 0; t < K; ++t) acc += k[static_cast<std::size_t>(t)] * in[y * w + x + t];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int64_t t = 0; t < K; ++t) acc += k[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>((y + t) * ow + x)];
      out[y * ow + x] = acc;
    }
  }
}

// Adjoint of filter_valid: scatters an (oh, ow) map back to (h, w), accumulating.
void filter_valid_adjoint(const double* g, int64_t h, int64_t w, const std::vector<double>& k, double* out,
                          std::vector<double>& tmp) {
  const auto K = static_cast<int64_t>(k.size());
  const int64_t ow = w - K + 1;
  const int64_t oh = h - K + 1;
  tmp.assign(static_cast<std::size_t>(h * ow), 0.0);
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      const double v = g[y * ow + x];
      for (int64_t t = 0; t < K; ++t) tmp[static_cast<std::size_t>((y + t) * ow + x)] += k[static_cast<std::size_t>(t)] * v;
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<std::size_t>(y * ow + x)];
      for (int64_t t = 0; t < K; ++t) out[y * w + x + t] += k[static_cast<std::size_t>(t)] * v;
    }
  }
}

struct SsimPlaneStats {
  std::vector<double> mu_a, mu_b, s_aa, s_bb, s_ab;
};

template <typename T>
void check_ssim_inputs(const BasicTensor<T>& a, const BasicTensor<T>& b, const SsimOptions& o) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.shape().h < o.window || a.shape().w < o.window) {
    throw ShapeError("ssim: image " + std::to_string(a.shape().h) + "x" + std::to_string(a.shape().w) +
                     " is smaller than the " + std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
}

// Per-plane SSIM map computation; fills gradient coefficient maps when requested.
template <typename T>
double ssim_planes(const BasicTensor<T>& a, const BasicTensor<T>& b, const SsimOptions& o,
                   std::vector<double>* grad_a, std::vector<double>* grad_b, double upstream) {
  const Shape s = a.shape();
  const auto kernel = gaussian_kernel(o);
  const int64_t K = o.window;
  const int64_t oh = s.h - K + 1;
  const int64_t ow = s.w - K + 1;
  const int64_t plane = s.h * s.w;
  const int64_t vplane = oh * ow;
  const double count = static_cast<double>(s.n * s.c * vplane);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> pa(static_cast<std::size_t>(plane)), pb(pa.size()), paa(pa.size()), pbb(pa.size()),
      pab(pa.size()), tmp;
  std::vector<double> mu_a(static_cast<std::size_t>(vplane)), mu_b(mu_a.size()), s_aa(mu_a.size()),
      s_bb(mu_a.size()), s_ab(mu_a.size());
  std::vector<double> g_mu_a(mu_a.size()), g_mu_b(mu_a.size()), g_aa(mu_a.size()), g_bb(mu_a.size()),
      g_ab(mu_a.size());
  double total = 0.0;
  for (int64_t p = 0; p < s.n * s.c; ++p) {
    for (int64_t i = 0; i < plane; ++i) {
      const auto j = static_cast<std::size_t>(i);
      pa[j] = static_cast<double>(av[static_cast<std::size_t>(p * plane + i)]);
      pb[j] = static_cast<double>(bv[static_cast<std::size_t>(p * plane + i)]);
      paa[j] = pa[j] * pa[j];
      pbb[j] = pb[j] * pb[j];
      pab[j] = pa[j] * pb[j];
    }
    filter_valid(pa.data(), s.h, s.w, kernel, mu_a.data(), tmp);
    filter_valid(pb.data(), s.h, s.w, kernel, mu_b.data(), tmp);
    filter_valid(paa.data(), s.h, s.w, kernel, s_aa.data(), tmp);
    filter_valid(pbb.data(), s.h, s.w, kernel, s_bb.data(), tmp);
    filter_valid(pab.data(), s.h, s.w, kernel, s_ab.data(), tmp);
    const double gscale = -upstream / count;  // d(1 - mean S)/dS
    for (std::size_t j = 0; j < mu_a.size(); ++j) {
      const double ma = mu_a[j], mb = mu_b[j];
      const double a1 = 2.0 * ma * mb + o.c1;
      const double a2 = 2.0 * (s_ab[j] - ma * mb) + o.c2;
      const double b1 = ma * ma + mb * mb + o.c1;
      const double b2 = (s_aa[j] - ma * ma) + (s_bb[j] - mb * mb) + o.c2;
      const double ssim = (a1 * a2) / (b1 * b2);
      total += ssim;
      if (grad_a != nullptr || grad_b != nullptr) {
        const double gs = gscale * ssim;
        g_mu_a[j] = gs * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2);
        g_mu_b[j] = gs * (2.0 * ma / a1 - 2.0 * ma / a2 - 2.0 * mb / b1 + 2.0 * mb / b2);
        g_aa[j] = -gs / b2;
        g_bb[j] = -gs / b2;
        g_ab[j] = 2.0 * gs / a2;
      }
    }
    if (grad_a != nullptr || grad_b != nullptr) {
      // pull the window-space coefficients back to pixels
      std::vector<double> back_mu_a(static_cast<std::size_t>(plane), 0.0), back_mu_b(back_mu_a.size(), 0.0),
          back_aa(back_mu_a.size(), 0.0), back_bb(back_mu_a.size(), 0.0), back_ab(back_mu_a.size(), 0.0);
      filter_valid_adjoint(g_mu_a.data(), s.h, s.w, kernel, back_mu_a.data(), tmp);
      filter_valid_adjoint(g_mu_b.data(), s.h, s.w, kernel, back_mu_b.data(), tmp);
      filter_valid_adjoint(g_aa.data(), s.h, s.w, kernel, back_aa.data(), tmp);
      filter_valid_adjoint(g_bb.data(), s.h, s.w, kernel, back_bb.data(), tmp);
      filter_valid_adjoint(g_ab.data(), s.h, s.w, kernel, back_ab.data(), tmp);
      for (int64_t i = 0; i < plane; ++i) {
        const auto j = static_cast<std::size_t>(i);
        const auto dst = static_cast<std::size_t>(p * plane + i);
        if (grad_a != nullptr) (*grad_a)[dst] += back_mu_a[j] + 2.0 * pa[j] * back_aa[j] + pb[j] * back_ab[j];
        if (grad_b != nullptr) (*grad_b)[dst] += back_mu_b[j] + 2.0 * pb[j] * back_bb[j] + pa[j] * back_ab[j];
      }
    }
  }
  return total / count;
}

}  // namespace

template <typename T>
double ssim_index(const BasicTensor<T>& a, const BasicTensor<T>& b, const SsimOptions& options) {
  check_ssim_inputs(a, b, options);
  return ssim_planes(a, b, options, nullptr, nullptr, 0.0);
}

template <typename T>
BasicTensor<T> ssim_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape,
                         const SsimOptions& options) {
  check_ssim_inputs(pred, target, options);
  const double index = ssim_planes(pred, target, options, nullptr, nullptr, 0.0);
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(1.0 - index));
  if (should_record(tape, {&pred, &target})) {
    result.set_requires_grad(true);
    tape->record([pred, target, result, options]() mutable {
      if (!result.has_grad()) return;
      const double up = static_cast<double>(result.grad()[0]);
      std::vector<double> ga, gb;
      if (pred.requires_grad()) ga.assign(static_cast<std::size_t>(pred.numel()), 0.0);
      if (target.requires_grad()) gb.assign(static_cast<std::size_t>(target.numel()), 0.0);
      ssim_planes(pred, target, options, pred.requires_grad() ? &ga : nullptr,
                  target.requires_grad() ? &gb : nullptr, up);
      if (pred.requires_grad()) {
        auto g = pred.mutable_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) g[i] += static_cast<T>(ga[i]);
      }
      if (target.requires_grad()) {
        auto g = target.mutable_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) g[i] += static_cast<T>(gb[i]);
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> hybrid_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, Tape<T>* tape) {
  return add(bce_loss(pred, target, tape), ssim_loss(pred, target, tape), tape);
}

void LossWeights::validate() const {
  bool positive = false;
  for (const double a : alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("loss weights must be finite and non-negative");
    positive = positive || a > 0.0;
  }
  if (!positive) throw ConfigError("at least one loss weight must be positive");
}

template <typename T>
LossBreakdown<T> total_loss(const DeepSupervisionOutputs<T>& outputs, const BasicTensor<T>& target,
                            const LossWeights& weights, Tape<T>* tape, SideResolution resolution) {
  weights.validate();
  if (weights.alpha.size() != outputs.side_maps.size()) {
    throw ConfigError("got " + std::to_string(weights.alpha.size()) + " loss weights for " +
                      std::to_string(outputs.side_maps.size()) + " side outputs");
  }
  LossBreakdown<T> out;
  BasicTensor<T> total;
  const Shape ts = target.shape();
  for (std::size_t i = 0; i < outputs.side_maps.size(); ++i) {
    const BasicTensor<T>& side = outputs.side_maps[i];
    BasicTensor<T> stage;
    if (resolution == SideResolution::upsample_maps) {
      const BasicTensor<T> up =
          (side.shape().h == ts.h && side.shape().w == ts.w) ? side : resize_bilinear(side, ts.h, ts.w, tape);
      stage = hybrid_loss(up, target, tape);
    } else {
      // nearest-free: corner-aligned bilinear then re-binarize keeps labels in {0,1}
      BasicTensor<T> small = resize_bilinear(target, side.shape().h, side.shape().w);
      auto v = small.mutable_data();
      for (auto& x : v) x = x >= T(0.5) ? T(1) : T(0);
      stage = hybrid_loss(side, small, tape);
    }
    out.per_stage.push_back(static_cast<double>(stage.item()));
    const double alpha = weights.alpha[i];
    if (alpha == 0.0) continue;
    const BasicTensor<T> weighted = alpha == 1.0 ? stage : scale(stage, alpha, tape);
    total = total.defined() ? add(total, weighted, tape) : weighted;
  }
  out.total = total;
  return out;
}

#define GMBINET_INSTANTIATE_LOSS(T)                                                                              \
  template BasicTensor<T> bce_loss(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);                     \
  template double ssim_index(const BasicTensor<T>&, const BasicTensor<T>&, const SsimOptions&);                 \
  template BasicTensor<T> ssim_loss(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*, const SsimOptions&); \
  template BasicTensor<T> hybrid_loss(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);                  \
  template LossBreakdown<T> total_loss(const DeepSupervisionOutputs<T>&, const BasicTensor<T>&,                 \
                                       const LossWeights&, Tape<T>*, SideResolution);

GMBINET_INSTANTIATE_LOSS(float)
GMBINET_INSTANTIATE_LOSS(double)

#undef GMBINET_INSTANTIATE_LOSS

}  // namespace gmbinet
