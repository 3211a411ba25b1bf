// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <vector>

#include "gmbinet/errors.hpp"
#include "gmbinet/ops.hpp"
#include "gmbinet/parallel.hpp"

namespace gmbinet {

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || dilation <= 0 || groups <= 0) {
    throw ConfigError("conv spec needs positive channels, kernel, stride, dilation and groups: " + str());
  }
  if (padding < 0) throw ConfigError("conv spec has negative padding: " + str());
  if (in_channels % groups != 0) {
    throw ConfigError("in_channels " + std::to_string(in_channels) + " not divisible by groups " +
                      std::to_string(groups));
  }
  if (out_channels % groups != 0) {
    throw ConfigError("out_channels " + std::to_string(out_channels) + " not divisible by groups " +
                      std::to_string(groups));
  }
}

int64_t ConvSpec::output_extent(int64_t input_extent) const {
  const int64_t span = (kernel - 1) * dilation + 1;
  const int64_t padded = input_extent + 2 * padding;
  if (span > padded) return 0;
  return (padded - span) / stride + 1;
}

std::string ConvSpec::str() const {
  return "conv(" + std::to_string(in_channels) + "->" + std::to_string(out_channels) + ", k=" +
         std::to_string(kernel) + ", s=" + std::to_string(stride) + ", d=" + std::to_string(dilation) +
         ", p=" + std::to_string(padding) + ", g=" + std::to_string(groups) + (bias ? ", bias" : "") + ")";
}

ConvSpec ConvSpec::depthwise_3x3(int64_t channels, int64_t dilation, int64_t stride) {
  ConvSpec s;
  s.in_channels = channels;
  s.out_channels = channels;
  s.kernel = 3;
  s.stride = stride;
  s.dilation = dilation;
  s.padding = dilation;
  s.groups = channels;
  return s;
}

ConvSpec ConvSpec::pointwise_1x1(int64_t in, int64_t out, bool bias) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = 1;
  s.padding = 0;
  s.bias = bias;
  return s;
}

namespace {

// Valid output-column interval [lo, hi) for kernel column kw.
struct ColumnRange {
  int64_t lo;
  int64_t hi;
  int64_t offset;  // input column = ow * stride + offset
};

std::vector<ColumnRange> column_ranges(const ConvSpec& s, int64_t in_w, int64_t out_w) {
  std::vector<ColumnRange> ranges(static_cast<std::size_t>(s.kernel));
  for (int64_t kw = 0; kw < s.kernel; ++kw) {
    const int64_t offset = kw * s.dilation - s.padding;
    int64_t lo = 0;
    while (lo < out_w && lo * s.stride + offset < 0) ++lo;
    int64_t hi = out_w;
    while (hi > lo && (hi - 1) * s.stride + offset >= in_w) --hi;
    ranges[static_cast<std::size_t>(kw)] = {lo, hi, offset};
  }
  return ranges;
}

struct ConvGeometry {
  Shape in;
  Shape out;
  std::vector<ColumnRange> cols;
};

ConvGeometry check_conv(const Shape& in, const Shape& weight, bool has_bias, const Shape& bias, const ConvSpec& spec) {
  spec.validate();
  if (in.c != spec.in_channels) {
    throw ShapeError("conv input channels: tensor has " + std::to_string(in.c) + ", spec expects " +
                     std::to_string(spec.in_channels) + " for " + spec.str());
  }
  if (weight != spec.weight_shape()) {
    throw ShapeError("conv weight shape " + weight.str() + " does not match expected " + spec.weight_shape().str() +
                     " for " + spec.str());
  }
  if (spec.bias != has_bias) {
    throw ShapeError("conv bias presence does not match spec " + spec.str());
  }
  if (has_bias && bias != Shape{1, spec.out_channels, 1, 1}) {
    throw ShapeError("conv bias shape " + bias.str() + " must be (1," + std::to_string(spec.out_channels) + ",1,1)");
  }
  const int64_t oh = spec.output_extent(in.h);
  const int64_t ow = spec.output_extent(in.w);
  if (oh <= 0) {
    throw ShapeError("conv output height is zero: input height " + std::to_string(in.h) + " too small for " +
                     spec.str());
  }
  if (ow <= 0) {
    throw ShapeError("conv output width is zero: input width " + std::to_string(in.w) + " too small for " +
                     spec.str());
  }
  ConvGeometry g;
  g.in = in;
  g.out = Shape{in.n, spec.out_channels, oh, ow};
  g.cols = column_ranges(spec, in.w, ow);
  return g;
}

template <typename T>
void forward_direct(const T* x, const T* w, const T* b, T* y, const ConvSpec& s, const ConvGeometry& g) {
  const int64_t ipg = s.in_per_group();
  const int64_t opg = s.out_per_group();
  const int64_t k = s.kernel;
  const int64_t H = g.in.h, W = g.in.w, OH = g.out.h, OW = g.out.w;
  const bool flat = s.kernel == 1 && s.stride == 1 && s.padding == 0;
  parallel_for(g.in.n, [&](int64_t n) {
    for (int64_t co = 0; co < s.out_channels; ++co) {
      const int64_t grp = co / opg;
      T* out = y + (n * s.out_channels + co) * OH * OW;
      std::fill(out, out + OH * OW, b ? b[co] : T(0));
      for (int64_t cil = 0; cil < ipg; ++cil) {
        const int64_t ci = grp * ipg + cil;
        const T* in = x + (n * s.in_channels + ci) * H * W;
        const T* wk = w + (co * ipg + cil) * k * k;
        if (flat) {
          const T wv = wk[0];
          for (int64_t i = 0; i < OH * OW; ++i) out[i] += wv * in[i];
          continue;
        }
        for (int64_t kh = 0; kh < k; ++kh) {
          for (int64_t kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            const ColumnRange& cr = g.cols[static_cast<std::size_t>(kw)];
            for (int64_t oh = 0; oh < OH; ++oh) {
              const int64_t ih = oh * s.stride - s.padding + kh * s.dilation;
              if (ih < 0 || ih >= H) continue;
              T* orow = out + oh * OW;
              const T* irow = in + ih * W + cr.offset;
              if (s.stride == 1) {
                for (int64_t ow = cr.lo; ow < cr.hi; ++ow) orow[ow] += wv * irow[ow];
              } else {
                for (int64_t ow = cr.lo; ow < cr.hi; ++ow) orow[ow] += wv * irow[ow * s.stride];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void forward_lowered(const T* x, const T* w, const T* b, T* y, const ConvSpec& s, const ConvGeometry& g) {
  const int64_t ipg = s.in_per_group();
  const int64_t opg = s.out_per_group();
  const int64_t k = s.kernel;
  const int64_t H = g.in.h, W = g.in.w, OH = g.out.h, OW = g.out.w;
  const int64_t cols = OH * OW;
  const int64_t rows = ipg * k * k;
  parallel_for(g.in.n, [&](int64_t n) {
    std::vector<T> col(static_cast<std::size_t>(rows * cols));
    for (int64_t grp = 0; grp < s.groups; ++grp) {
      // im2col for this group
      for (int64_t cil = 0; cil < ipg; ++cil) {
        const T* in = x + (n * s.in_channels + grp * ipg + cil) * H * W;
        for (int64_t kh = 0; kh < k; ++kh) {
          for (int64_t kw = 0; kw < k; ++kw) {
            T* dst = col.data() + ((cil * k + kh) * k + kw) * cols;
            for (int64_t oh = 0; oh < OH; ++oh) {
              const int64_t ih = oh * s.stride - s.padding + kh * s.dilation;
              for (int64_t ow = 0; ow < OW; ++ow) {
                const int64_t iw = ow * s.stride - s.padding + kw * s.dilation;
                dst[oh * OW + ow] = (ih >= 0 && ih < H && iw >= 0 && iw < W) ? in[ih * W + iw] : T(0);
              }
            }
          }
        }
      }
      for (int64_t col_out = 0; col_out < opg; ++col_out) {
        const int64_t co = grp * opg + col_out;
        T* out = y + (n * s.out_channels + co) * cols;
        std::fill(out, out + cols, b ? b[co] : T(0));
        const T* wrow = w + co * rows;
        for (int64_t r = 0; r < rows; ++r) {
          const T wv = wrow[r];
          const T* src = col.data() + r * cols;
          for (int64_t i = 0; i < cols; ++i) out[i] += wv * src[i];
        }
      }
    }
  });
}

template <typename T>
void backward_input(const T* gy, const T* w, T* gx, const ConvSpec& s, const ConvGeometry& g) {
  const int64_t ipg = s.in_per_group();
  const int64_t opg = s.out_per_group();
  const int64_t k = s.kernel;
  const int64_t H = g.in.h, W = g.in.w, OH = g.out.h, OW = g.out.w;
  const bool flat = s.kernel == 1 && s.stride == 1 && s.padding == 0;
  parallel_for(g.in.n, [&](int64_t n) {
    for (int64_t co = 0; co < s.out_channels; ++co) {
      const int64_t grp = co / opg;
      const T* gout = gy + (n * s.out_channels + co) * OH * OW;
      for (int64_t cil = 0; cil < ipg; ++cil) {
        const int64_t ci = grp * ipg + cil;
        T* gin = gx + (n * s.in_channels + ci) * H * W;
        const T* wk = w + (co * ipg + cil) * k * k;
        if (flat) {
          const T wv = wk[0];
          for (int64_t i = 0; i < OH * OW; ++i) gin[i] += wv * gout[i];
          continue;
        }
        for (int64_t kh = 0; kh < k; ++kh) {
          for (int64_t kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            const ColumnRange& cr = g.cols[static_cast<std::size_t>(kw)];
            for (int64_t oh = 0; oh < OH; ++oh) {
              const int64_t ih = oh * s.stride - s.padding + kh * s.dilation;
              if (ih < 0 || ih >= H) continue;
              const T* grow = gout + oh * OW;
              T* irow = gin + ih * W + cr.offset;
              for (int64_t ow = cr.lo; ow < cr.hi; ++ow) irow[ow * s.stride] += wv * grow[ow];
            }
          }
        }
      }
    }
  });
}

template <typename T>
void backward_weight(const T* gy, const T* x, T* gw, T* gb, const ConvSpec& s, const ConvGeometry& g) {
  const int64_t ipg = s.in_per_group();
  const int64_t opg = s.out_per_group();
  const int64_t k = s.kernel;
  const int64_t H = g.in.h, W = g.in.w, OH = g.out.h, OW = g.out.w;
  const bool flat = s.kernel == 1 && s.stride == 1 && s.padding == 0;
  parallel_for(s.out_channels, [&](int64_t co) {
    const int64_t grp = co / opg;
    for (int64_t n = 0; n < g.in.n; ++n) {
      const T* gout = gy + (n * s.out_channels + co) * OH * OW;
      if (gb != nullptr) {
        T acc = 0;
        for (int64_t i = 0; i < OH * OW; ++i) acc += gout[i];
        gb[co] += acc;
      }
      for (int64_t cil = 0; cil < ipg; ++cil) {
        const int64_t ci = grp * ipg + cil;
        const T* in = x + (n * s.in_channels + ci) * H * W;
        T* gk = gw + (co * ipg + cil) * k * k;
        if (flat) {
          T acc = 0;
          for (int64_t i = 0; i < OH * OW; ++i) acc += gout[i] * in[i];
          gk[0] += acc;
          continue;
        }
        for (int64_t kh = 0; kh < k; ++kh) {
          for (int64_t kw = 0; kw < k; ++kw) {
            const ColumnRange& cr = g.cols[static_cast<std::size_t>(kw)];
            T acc = 0;
            for (int64_t oh = 0; oh < OH; ++oh) {
              const int64_t ih = oh * s.stride - s.padding + kh * s.dilation;
              if (ih < 0 || ih >= H) continue;
              const T* grow = gout + oh * OW;
              const T* irow = in + ih * W + cr.offset;
              for (int64_t ow = cr.lo; ow < cr.hi; ++ow) acc += grow[ow] * irow[ow * s.stride];
            }
            gk[kh * k + kw] += acc;
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const ConvSpec& spec, Tape<T>* tape, ConvAlgo algo) {
  const ConvGeometry geo = check_conv(input.shape(), weight.shape(), bias.defined(), bias.shape(), spec);
  std::vector<T> out(static_cast<std::size_t>(geo.out.numel()));
  const T* b = bias.defined() ? bias.data().data() : nullptr;
  if (algo == ConvAlgo::lowered) {
    forward_lowered(input.data().data(), weight.data().data(), b, out.data(), spec, geo);
  } else {
    forward_direct(input.data().data(), weight.data().data(), b, out.data(), spec, geo);
  }
  BasicTensor<T> result(geo.out, std::move(out));
  if (should_record(tape, {&input, &weight, &bias})) {
    result.set_requires_grad(true);
    tape->record([input, weight, bias, result, spec, geo]() mutable {
      if (!result.has_grad()) return;
      const T* gy = result.grad().data();
      if (input.requires_grad()) {
        backward_input(gy, weight.data().data(), input.mutable_grad().data(), spec, geo);
      }
      if (weight.requires_grad() || (bias.defined() && bias.requires_grad())) {
        std::vector<T> scratch_w;
        T* gw = nullptr;
        if (weight.requires_grad()) {
          gw = weight.mutable_grad().data();
        } else {
          scratch_w.assign(static_cast<std::size_t>(weight.numel()), T(0));
          gw = scratch_w.data();
        }
        T* gb = (bias.defined() && bias.requires_grad()) ? bias.mutable_grad().data() : nullptr;
        backward_weight(gy, input.data().data(), gw, gb, spec, geo);
      }
    });
  }
  return result;
}

template Tensor conv2d(const Tensor&, const Tensor&, const Tensor&, const ConvSpec&, Tape<float>*, ConvAlgo);
template Tensor64 conv2d(const Tensor64&, const Tensor64&, const Tensor64&, const ConvSpec&, Tape<double>*, ConvAlgo);

}  // namespace gmbinet
