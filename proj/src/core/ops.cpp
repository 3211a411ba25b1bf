// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gmbinet/errors.hpp"

namespace gmbinet {
namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined operand");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

template <typename T>
void accumulate(const BasicTensor<T>& target, std::span<const T> g) {
  auto dst = target.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// Corner-aligned source coordinate table for one axis.
struct AxisWeights {
  std::vector<int64_t> lo;
  std::vector<int64_t> hi;
  std::vector<double> frac;
};

AxisWeights axis_weights(int64_t in, int64_t out) {
  AxisWeights a;
  a.lo.resize(static_cast<std::size_t>(out));
  a.hi.resize(static_cast<std::size_t>(out));
  a.frac.resize(static_cast<std::size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    const double pos = (out > 1 && in > 1) ? static_cast<double>(o) * static_cast<double>(in - 1) /
                                                 static_cast<double>(out - 1)
                                           : 0.0;
    int64_t lo = static_cast<int64_t>(std::floor(pos));
    lo = std::clamp<int64_t>(lo, 0, in - 1);
    const int64_t hi = std::min<int64_t>(lo + 1, in - 1);
    a.lo[static_cast<std::size_t>(o)] = lo;
    a.hi[static_cast<std::size_t>(o)] = hi;
    a.frac[static_cast<std::size_t>(o)] = pos - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                          const BatchNormOptions& options, Tape<T>* tape) {
  const Shape s = input.shape();
  const Shape ps{1, s.c, 1, 1};
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->shape() != ps) {
      throw ShapeError("batch_norm parameter shape " + t->shape().str() + " does not match channels of " + s.str());
    }
  }
  const int64_t plane = s.plane();
  const int64_t count = s.n * plane;
  if (count == 0) throw ShapeError("batch_norm on empty tensor " + s.str());
  std::vector<T> mean_c(static_cast<std::size_t>(s.c));
  std::vector<T> inv_std(static_cast<std::size_t>(s.c));
  const auto x = input.data();
  if (options.training) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (int64_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = x.data() + (n * s.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
      }
      const double mu = acc / static_cast<double>(count);
      double var = 0.0;
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = x.data() + (n * s.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      mean_c[static_cast<std::size_t>(c)] = static_cast<T>(mu);
      inv_std[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + options.eps));
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      const double m = options.momentum;
      rm[static_cast<std::size_t>(c)] = static_cast<T>((1.0 - m) * rm[static_cast<std::size_t>(c)] + m * mu);
      rv[static_cast<std::size_t>(c)] = static_cast<T>((1.0 - m) * rv[static_cast<std::size_t>(c)] + m * unbiased);
    }
  } else {
    for (int64_t c = 0; c < s.c; ++c) {
      mean_c[static_cast<std::size_t>(c)] = running_mean.data()[static_cast<std::size_t>(c)];
      inv_std[static_cast<std::size_t>(c)] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var.data()[static_cast<std::size_t>(c)]) + options.eps));
    }
  }
  std::vector<T> xhat(x.size());
  std::vector<T> out(x.size());
  const auto g = gamma.data();
  const auto b = beta.data();
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      const std::size_t base = static_cast<std::size_t>((n * s.c + c) * plane);
      const T mu = mean_c[static_cast<std::size_t>(c)];
      const T is = inv_std[static_cast<std::size_t>(c)];
      const T gc = g[static_cast<std::size_t>(c)];
      const T bc = b[static_cast<std::size_t>(c)];
      for (int64_t i = 0; i < plane; ++i) {
        const T xh = (x[base + static_cast<std::size_t>(i)] - mu) * is;
        xhat[base + static_cast<std::size_t>(i)] = xh;
        out[base + static_cast<std::size_t>(i)] = gc * xh + bc;
      }
    }
  }
  BasicTensor<T> result(s, std::move(out));
  if (should_record(tape, {&input, &gamma, &beta})) {
    result.set_requires_grad(true);
    const bool training = options.training;
    tape->record([input, gamma, beta, result, xhat = std::move(xhat), inv_std = std::move(inv_std), training, s,
                  plane, count]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      std::vector<double> sum_gy(static_cast<std::size_t>(s.c), 0.0);
      std::vector<double> sum_gy_xhat(static_cast<std::size_t>(s.c), 0.0);
      for (int64_t n = 0; n < s.n; ++n) {
        for (int64_t c = 0; c < s.c; ++c) {
          const std::size_t base = static_cast<std::size_t>((n * s.c + c) * plane);
          double a = 0.0, bsum = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            const double gv = gy[base + static_cast<std::size_t>(i)];
            a += gv;
            bsum += gv * static_cast<double>(xhat[base + static_cast<std::size_t>(i)]);
          }
          sum_gy[static_cast<std::size_t>(c)] += a;
          sum_gy_xhat[static_cast<std::size_t>(c)] += bsum;
        }
      }
      if (gamma.requires_grad()) {
        auto gg = gamma.mutable_grad();
        for (int64_t c = 0; c < s.c; ++c) gg[static_cast<std::size_t>(c)] += static_cast<T>(sum_gy_xhat[static_cast<std::size_t>(c)]);
      }
      if (beta.requires_grad()) {
        auto gb = beta.mutable_grad();
        for (int64_t c = 0; c < s.c; ++c) gb[static_cast<std::size_t>(c)] += static_cast<T>(sum_gy[static_cast<std::size_t>(c)]);
      }
      if (input.requires_grad()) {
        auto gx = input.mutable_grad();
        const auto gam = gamma.data();
        for (int64_t n = 0; n < s.n; ++n) {
          for (int64_t c = 0; c < s.c; ++c) {
            const std::size_t base = static_cast<std::size_t>((n * s.c + c) * plane);
            const std::size_t ci = static_cast<std::size_t>(c);
            const double k = static_cast<double>(gam[ci]) * static_cast<double>(inv_std[ci]);
            if (training) {
              const double mg = sum_gy[ci] / static_cast<double>(count);
              const double mgx = sum_gy_xhat[ci] / static_cast<double>(count);
              for (int64_t i = 0; i < plane; ++i) {
                const std::size_t j = base + static_cast<std::size_t>(i);
                gx[j] += static_cast<T>(k * (static_cast<double>(gy[j]) - mg - static_cast<double>(xhat[j]) * mgx));
              }
            } else {
              for (int64_t i = 0; i < plane; ++i) {
                const std::size_t j = base + static_cast<std::size_t>(i);
                gx[j] += static_cast<T>(k * static_cast<double>(gy[j]));
              }
            }
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x, Tape<T>* tape) {
  const auto v = x.data();
  std::vector<T> out(v.size());
  // NaN passes through so a poisoned forward pass still reaches the loss
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] < T(0) ? T(0) : v[i];
  BasicTensor<T> result(x.shape(), std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      const auto v = x.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] > T(0)) gx[i] += gy[i];
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x, Tape<T>* tape) {
  const auto v = x.data();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // split by sign so exp never overflows
    if (v[i] >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v[i]));
    } else {
      const T e = std::exp(v[i]);
      out[i] = e / (T(1) + e);
    }
  }
  BasicTensor<T> result(x.shape(), std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      const auto y = result.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape) {
  require_same_shape(a, b, "add");
  const auto va = a.data();
  const auto vb = b.data();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  BasicTensor<T> result(a.shape(), std::move(out));
  if (should_record(tape, {&a, &b})) {
    result.set_requires_grad(true);
    tape->record([a, b, result]() mutable {
      if (!result.has_grad()) return;
      if (a.requires_grad()) accumulate(a, result.grad());
      if (b.requires_grad()) accumulate(b, result.grad());
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b, Tape<T>* tape) {
  require_same_shape(a, b, "mul");
  const auto va = a.data();
  const auto vb = b.data();
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  BasicTensor<T> result(a.shape(), std::move(out));
  if (should_record(tape, {&a, &b})) {
    result.set_requires_grad(true);
    tape->record([a, b, result]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        const auto vb = b.data();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * vb[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        const auto va = a.data();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * va[i];
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, double factor, Tape<T>* tape) {
  const auto v = x.data();
  std::vector<T> out(v.size());
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * f;
  BasicTensor<T> result(x.shape(), std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result, f]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * f;
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, int64_t out_h, int64_t out_w, Tape<T>* tape) {
  const Shape s = x.shape();
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("resize_bilinear target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " must be positive");
  }
  if (s.h <= 0 || s.w <= 0) throw ShapeError("resize_bilinear on empty input " + s.str());
  const Shape os{s.n, s.c, out_h, out_w};
  if (out_h == s.h && out_w == s.w) {
    // identity resize: copy exactly (corner-aligned weights are integral)
    BasicTensor<T> result(os, std::vector<T>(x.data().begin(), x.data().end()));
    if (should_record(tape, {&x})) {
      result.set_requires_grad(true);
      tape->record([x, result]() mutable {
        if (result.has_grad()) accumulate(x, result.grad());
      });
    }
    return result;
  }
  const AxisWeights ay = axis_weights(s.h, out_h);
  const AxisWeights ax = axis_weights(s.w, out_w);
  const auto v = x.data();
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  for (int64_t p = 0; p < s.n * s.c; ++p) {
    const T* in = v.data() + p * s.h * s.w;
    T* o = out.data() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const std::size_t iy = static_cast<std::size_t>(i);
      const T fy = static_cast<T>(ay.frac[iy]);
      const T* r0 = in + ay.lo[iy] * s.w;
      const T* r1 = in + ay.hi[iy] * s.w;
      for (int64_t j = 0; j < out_w; ++j) {
        const std::size_t jx = static_cast<std::size_t>(j);
        const T fx = static_cast<T>(ax.frac[jx]);
        const T top = r0[ax.lo[jx]] + fx * (r0[ax.hi[jx]] - r0[ax.lo[jx]]);
        const T bot = r1[ax.lo[jx]] + fx * (r1[ax.hi[jx]] - r1[ax.lo[jx]]);
        o[i * out_w + j] = top + fy * (bot - top);
      }
    }
  }
  BasicTensor<T> result(os, std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result, ay, ax, s, out_h, out_w]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      auto gx = x.mutable_grad();
      for (int64_t p = 0; p < s.n * s.c; ++p) {
        T* gin = gx.data() + p * s.h * s.w;
        const T* go = gy.data() + p * out_h * out_w;
        for (int64_t i = 0; i < out_h; ++i) {
          const std::size_t iy = static_cast<std::size_t>(i);
          const T fy = static_cast<T>(ay.frac[iy]);
          T* r0 = gin + ay.lo[iy] * s.w;
          T* r1 = gin + ay.hi[iy] * s.w;
          for (int64_t j = 0; j < out_w; ++j) {
            const std::size_t jx = static_cast<std::size_t>(j);
            const T fx = static_cast<T>(ax.frac[jx]);
            const T g = go[i * out_w + j];
            r0[ax.lo[jx]] += g * (T(1) - fy) * (T(1) - fx);
            r0[ax.hi[jx]] += g * (T(1) - fy) * fx;
            r1[ax.lo[jx]] += g * fy * (T(1) - fx);
            r1[ax.hi[jx]] += g * fy * fx;
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, int64_t factor, Tape<T>* tape) {
  if (factor < 1) throw ShapeError("bilinear_upsample factor must be >= 1, got " + std::to_string(factor));
  return resize_bilinear(x, x.shape().h * factor, x.shape().w * factor, tape);
}

template <typename T>
BasicTensor<T> channel_slice(const BasicTensor<T>& x, int64_t begin, int64_t count, Tape<T>* tape) {
  const Shape s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw ShapeError("channel_slice [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of range for " + s.str());
  }
  const Shape os{s.n, count, s.h, s.w};
  const int64_t plane = s.plane();
  const auto v = x.data();
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  for (int64_t n = 0; n < s.n; ++n) {
    std::copy_n(v.data() + (n * s.c + begin) * plane, count * plane, out.data() + n * count * plane);
  }
  BasicTensor<T> result(os, std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result, s, begin, count, plane]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      auto gx = x.mutable_grad();
      for (int64_t n = 0; n < s.n; ++n) {
        T* dst = gx.data() + (n * s.c + begin) * plane;
        const T* src = gy.data() + n * count * plane;
        for (int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return result;
}

template <typename T>
std::vector<BasicTensor<T>> channel_split(const BasicTensor<T>& x, int64_t parts, Tape<T>* tape) {
  const Shape s = x.shape();
  if (parts <= 0) throw ShapeError("channel_split needs a positive part count");
  if (s.c % parts != 0) {
    throw ShapeError("channel_split: " + std::to_string(s.c) + " channels not divisible into " +
                     std::to_string(parts) + " parts");
  }
  const int64_t each = s.c / parts;
  std::vector<BasicTensor<T>> out;
  out.reserve(static_cast<std::size_t>(parts));
  for (int64_t i = 0; i < parts; ++i) out.push_back(channel_slice(x, i * each, each, tape));
  return out;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, Tape<T>* tape) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  const Shape first = parts.front().shape();
  int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat: part " + s.str() + " does not match batch/spatial extent of " + first.str());
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const int64_t plane = first.plane();
  std::vector<T> out(static_cast<std::size_t>(os.numel()));
  for (int64_t n = 0; n < os.n; ++n) {
    int64_t offset = 0;
    for (const auto& p : parts) {
      const int64_t c = p.shape().c;
      std::copy_n(p.data().data() + n * c * plane, c * plane, out.data() + (n * channels + offset) * plane);
      offset += c;
    }
  }
  BasicTensor<T> result(os, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    result.set_requires_grad(true);
    tape->record([parts, result, os, plane]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      int64_t offset = 0;
      for (auto& p : parts) {
        const int64_t c = p.shape().c;
        if (p.requires_grad()) {
          auto gp = p.mutable_grad();
          for (int64_t n = 0; n < os.n; ++n) {
            const T* src = gy.data() + (n * os.c + offset) * plane;
            T* dst = gp.data() + n * c * plane;
            for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
        offset += c;
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& x, int64_t groups, Tape<T>* tape) {
  const Shape s = x.shape();
  if (groups <= 0 || s.c % groups != 0) {
    throw ShapeError("channel_shuffle: " + std::to_string(s.c) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
  const int64_t per = s.c / groups;
  const int64_t plane = s.plane();
  // destination channel for source channel g*per + j is j*groups + g
  auto dest = [groups, per](int64_t c) { return (c % per) * groups + c / per; };
  const auto v = x.data();
  std::vector<T> out(v.size());
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      std::copy_n(v.data() + (n * s.c + c) * plane, plane, out.data() + (n * s.c + dest(c)) * plane);
    }
  }
  BasicTensor<T> result(s, std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result, s, plane, dest]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      auto gx = x.mutable_grad();
      for (int64_t n = 0; n < s.n; ++n) {
        for (int64_t c = 0; c < s.c; ++c) {
          const T* src = gy.data() + (n * s.c + dest(c)) * plane;
          T* dst = gx.data() + (n * s.c + c) * plane;
          for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x, Tape<T>* tape) {
  const Shape s = x.shape();
  const int64_t plane = s.plane();
  if (plane == 0) throw ShapeError("global_avg_pool on empty spatial extent " + s.str());
  const auto v = x.data();
  std::vector<T> out(static_cast<std::size_t>(s.n * s.c));
  for (int64_t p = 0; p < s.n * s.c; ++p) {
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += static_cast<double>(v[static_cast<std::size_t>(p * plane + i)]);
    out[static_cast<std::size_t>(p)] = static_cast<T>(acc / static_cast<double>(plane));
  }
  BasicTensor<T> result(Shape{s.n, s.c, 1, 1}, std::move(out));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result, s, plane]() mutable {
      if (!result.has_grad()) return;
      const auto gy = result.grad();
      auto gx = x.mutable_grad();
      const T inv = T(1) / static_cast<T>(plane);
      for (int64_t p = 0; p < s.n * s.c; ++p) {
        for (int64_t i = 0; i < plane; ++i) gx[static_cast<std::size_t>(p * plane + i)] += gy[static_cast<std::size_t>(p)] * inv;
      }
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x, Tape<T>* tape) {
  double acc = 0.0;
  for (const T v : x.data()) acc += static_cast<double>(v);
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(acc));
  if (should_record(tape, {&x})) {
    result.set_requires_grad(true);
    tape->record([x, result]() mutable {
      if (!result.has_grad()) return;
      const T g = result.grad()[0];
      for (T& v : x.mutable_grad()) v += g;
    });
  }
  return result;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x, Tape<T>* tape) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x, tape), 1.0 / static_cast<double>(x.numel()), tape);
}

template <typename T>
BasicTensor<T> standardize(const BasicTensor<T>& x, double eps) {
  const Shape s = x.shape();
  const int64_t per = s.c * s.h * s.w;
  if (per == 0) throw ShapeError("standardize on empty tensor " + s.str());
  const auto v = x.data();
  std::vector<T> out(v.size());
  for (int64_t n = 0; n < s.n; ++n) {
    const T* p = v.data() + n * per;
    double acc = 0.0;
    for (int64_t i = 0; i < per; ++i) acc += static_cast<double>(p[i]);
    const double mu = acc / static_cast<double>(per);
    double var = 0.0;
    for (int64_t i = 0; i < per; ++i) {
      const double d = static_cast<double>(p[i]) - mu;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(per));
    for (int64_t i = 0; i < per; ++i) {
      out[static_cast<std::size_t>(n * per + i)] = static_cast<T>((static_cast<double>(p[i]) - mu) / (sd + eps));
    }
  }
  return BasicTensor<T>(s, std::move(out));
}

#define GMBINET_INSTANTIATE_OPS(T)                                                                              \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                     BasicTensor<T>&, BasicTensor<T>&, const BatchNormOptions&, Tape<T>*);     \
  template BasicTensor<T> relu(const BasicTensor<T>&, Tape<T>*);                                               \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&, Tape<T>*);                                            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);                         \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&, Tape<T>*);                         \
  template BasicTensor<T> scale(const BasicTensor<T>&, double, Tape<T>*);                                      \
  template BasicTensor<T> resize_bilinear(const BasicTensor<T>&, int64_t, int64_t, Tape<T>*);                  \
  template BasicTensor<T> bilinear_upsample(const BasicTensor<T>&, int64_t, Tape<T>*);                         \
  template std::vector<BasicTensor<T>> channel_split(const BasicTensor<T>&, int64_t, Tape<T>*);                \
  template BasicTensor<T> channel_slice(const BasicTensor<T>&, int64_t, int64_t, Tape<T>*);                    \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, Tape<T>*);                                \
  template BasicTensor<T> channel_shuffle(const BasicTensor<T>&, int64_t, Tape<T>*);                           \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&, Tape<T>*);                                    \
  template BasicTensor<T> sum(const BasicTensor<T>&, Tape<T>*);                                                \
  template BasicTensor<T> mean(const BasicTensor<T>&, Tape<T>*);                                               \
  template BasicTensor<T> standardize(const BasicTensor<T>&, double);

GMBINET_INSTANTIATE_OPS(float)
GMBINET_INSTANTIATE_OPS(double)

#undef GMBINET_INSTANTIATE_OPS

}  // namespace gmbinet
