#include "panet/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detail/bilinear.hpp"
#include "detail/linalg.hpp"

namespace panet {

using detail::as_matrix;

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw InvalidParam("ConvSpec: channel counts must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw InvalidParam("ConvSpec: kernel dims must be >= 1");
  if (stride_h == 0 || stride_w == 0) throw InvalidParam("ConvSpec: stride must be >= 1");
}

std::size_t ConvSpec::out_h(std::size_t in_h) const {
  const std::size_t padded = in_h + 2 * pad_h;
  if (padded < kernel_h) throw InvalidParam("conv: input height " + std::to_string(in_h) + " too small for kernel");
  return (padded - kernel_h) / stride_h + 1;
}

std::size_t ConvSpec::out_w(std::size_t in_w) const {
  const std::size_t padded = in_w + 2 * pad_w;
  if (padded < kernel_w) throw InvalidParam("conv: input width " + std::to_string(in_w) + " too small for kernel");
  return (padded - kernel_w) / stride_w + 1;
}

std::size_t ConvSpec::transposed_out_h(std::size_t in_h) const {
  const std::size_t full = (in_h - 1) * stride_h + kernel_h;
  if (full <= 2 * pad_h) throw InvalidParam("conv_transpose: padding exceeds output height");
  return full - 2 * pad_h;
}

std::size_t ConvSpec::transposed_out_w(std::size_t in_w) const {
  const std::size_t full = (in_w - 1) * stride_w + kernel_w;
  if (full <= 2 * pad_w) throw InvalidParam("conv_transpose: padding exceeds output width");
  return full - 2 * pad_w;
}

PoolMode parse_pool_mode(std::string_view s) {
  if (s == "max") return PoolMode::kMax;
  if (s == "mean") return PoolMode::kMean;
  throw InvalidParam("unknown pooling mode '" + std::string(s) + "' (expected max|mean)");
}

std::string_view to_string(PoolMode mode) { return mode == PoolMode::kMax ? "max" : "mean"; }

namespace {

struct Geometry {
  std::size_t channels, in_h, in_w, out_h, out_w;
  std::size_t kh, kw, sh, sw, ph, pw;

  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0; }
};

Geometry make_geometry(const ConvSpec& spec, std::size_t channels, std::size_t in_h, std::size_t in_w,
                       std::size_t out_h, std::size_t out_w) {
  return {channels, in_h, in_w, out_h, out_w, spec.kernel_h, spec.kernel_w,
          spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w};
}

// Valid output-column range [lo, hi) for which ix = ox*sw - pw + kx lies in [0, in_w).
inline void valid_range(long k, long stride, long pad, long in_extent, long out_extent, long& lo, long& hi) {
  // ox*stride >= pad - k  and  ox*stride <= in_extent - 1 + pad - k
  const long a = pad - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const long b = in_extent - 1 + pad - k;
  hi = b < 0 ? 0 : std::min(out_extent, b / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const T* x, const Geometry& g, T* cols) {
  const long in_h = static_cast<long>(g.in_h), in_w = static_cast<long>(g.in_w);
  const long out_h = static_cast<long>(g.out_h), out_w = static_cast<long>(g.out_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.col_cols();
        long lo, hi;
        valid_range(static_cast<long>(kx), static_cast<long>(g.sw), static_cast<long>(g.pw), in_w, out_w, lo, hi);
        for (long oy = 0; oy < out_h; ++oy) {
          T* dst = row + oy * out_w;
          const long iy = oy * static_cast<long>(g.sh) - static_cast<long>(g.ph) + static_cast<long>(ky);
          if (iy < 0 || iy >= in_h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          const T* src = plane + iy * in_w;
          const long base = static_cast<long>(kx) - static_cast<long>(g.pw);
          if (g.sw == 1) {
            std::copy(src + lo + base, src + hi + base, dst + lo);
          } else {
            for (long ox = lo; ox < hi; ++ox) dst[ox] = src[ox * static_cast<long>(g.sw) + base];
          }
          std::fill(dst + hi, dst + out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const Geometry& g, T* x) {
  const long in_h = static_cast<long>(g.in_h), in_w = static_cast<long>(g.in_w);
  const long out_h = static_cast<long>(g.out_h), out_w = static_cast<long>(g.out_w);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.col_cols();
        long lo, hi;
        valid_range(static_cast<long>(kx), static_cast<long>(g.sw), static_cast<long>(g.pw), in_w, out_w, lo, hi);
        for (long oy = 0; oy < out_h; ++oy) {
          const long iy = oy * static_cast<long>(g.sh) - static_cast<long>(g.ph) + static_cast<long>(ky);
          if (iy < 0 || iy >= in_h) continue;
          const T* src = row + oy * out_w;
          T* dst = plane + iy * in_w;
          const long base = static_cast<long>(kx) - static_cast<long>(g.pw);
          for (long ox = lo; ox < hi; ++ox) dst[ox * static_cast<long>(g.sw) + base] += src[ox];
        }
      }
    }
  }
}

template <typename T>
void check_conv_params(const LayerParams<T>& p, const ConvSpec& spec, bool transposed, const char* op) {
  spec.validate();
  const Shape expected = transposed ? Shape{spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w}
                                    : Shape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (p.weight.shape() != expected) {
    throw ShapeMismatch(std::string(op) + ": weight shape " + shape_str(p.weight.shape()) + ", expected " +
                        shape_str(expected));
  }
  if (!p.bias.empty() && p.bias.shape() != Shape{spec.out_channels}) {
    throw ShapeMismatch(std::string(op) + ": bias shape " + shape_str(p.bias.shape()));
  }
}

template <typename T>
void check_input(const Tensor<T>& x, std::size_t channels, const char* op) {
  if (x.rank() != 4) throw ShapeMismatch(std::string(op) + ": expected N x C x H x W input, got " + shape_str(x.shape()));
  if (x.dim(1) != channels) {
    throw ShapeMismatch(std::string(op) + ": input has " + std::to_string(x.dim(1)) + " channels, expected " +
                        std::to_string(channels));
  }
}

template <typename T>
void add_bias(T* out, const Tensor<T>& bias, std::size_t plane) {
  if (bias.empty()) return;
  for (std::size_t c = 0; c < bias.numel(); ++c) {
    T* dst = out + c * plane;
    const T b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) dst[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(const T* grad_out, Tensor<T>& grad_bias, std::size_t plane) {
  for (std::size_t c = 0; c < grad_bias.numel(); ++c) {
    const T* src = grad_out + c * plane;
    T s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    grad_bias[c] += s;
  }
}

// out[n] (out_ch x out_plane) = weight (out_ch x K) * im2col(x[n])
template <typename T>
void conv_forward_core(const Tensor<T>& x, const Tensor<T>& weight_rows, std::size_t out_ch,
                       const Geometry& g, Tensor<T>& out) {
  const std::size_t n_batch = x.dim(0);
  const std::size_t in_block = g.channels * g.in_h * g.in_w;
  const std::size_t out_block = out_ch * g.col_cols();
  AlignedVector<T> cols(g.is_pointwise() ? 0 : g.col_rows() * g.col_cols());
  const auto w = as_matrix(weight_rows.ptr(), out_ch, g.col_rows());
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* src = x.ptr() + n * in_block;
    if (!g.is_pointwise()) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    auto o = as_matrix(out.ptr() + n * out_block, out_ch, g.col_cols());
    o.noalias() = w * as_matrix(src, g.col_rows(), g.col_cols());
  }
}

// grad_x[n] = col2im(weight^T * grad_out[n])
template <typename T>
void conv_backward_data_core(const Tensor<T>& grad_out, const Tensor<T>& weight_rows, std::size_t out_ch,
                             const Geometry& g, Tensor<T>& grad_x) {
  const std::size_t n_batch = grad_out.dim(0);
  const std::size_t in_block = g.channels * g.in_h * g.in_w;
  const std::size_t out_block = out_ch * g.col_cols();
  const auto w = as_matrix(weight_rows.ptr(), out_ch, g.col_rows());
  AlignedVector<T> cols(g.col_rows() * g.col_cols());
  for (std::size_t n = 0; n < n_batch; ++n) {
    const auto go = as_matrix(grad_out.ptr() + n * out_block, out_ch, g.col_cols());
    if (g.is_pointwise()) {
      auto gx = as_matrix(grad_x.ptr() + n * in_block, g.col_rows(), g.col_cols());
      gx.noalias() += w.transpose() * go;
    } else {
      auto c = as_matrix(cols.data(), g.col_rows(), g.col_cols());
      c.noalias() = w.transpose() * go;
      col2im(cols.data(), g, grad_x.ptr() + n * in_block);
    }
  }
}

// grad_weight (out_ch x K) += grad_out[n] * im2col(x[n])^T
template <typename T>
void conv_backward_weight_core(const Tensor<T>& x, const Tensor<T>& grad_out, std::size_t out_ch,
                               const Geometry& g, T* grad_weight) {
  const std::size_t n_batch = x.dim(0);
  const std::size_t in_block = g.channels * g.in_h * g.in_w;
  const std::size_t out_block = out_ch * g.col_cols();
  AlignedVector<T> cols(g.is_pointwise() ? 0 : g.col_rows() * g.col_cols());
  auto gw = as_matrix(grad_weight, out_ch, g.col_rows());
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* src = x.ptr() + n * in_block;
    if (!g.is_pointwise()) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    gw.noalias() += as_matrix(grad_out.ptr() + n * out_block, out_ch, g.col_cols()) *
                    as_matrix(src, g.col_rows(), g.col_cols()).transpose();
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec) {
  check_conv_params(p, spec, false, "conv2d");
  check_input(x, spec.in_channels, "conv2d");
  const std::size_t oh = spec.out_h(x.dim(2)), ow = spec.out_w(x.dim(3));
  const Geometry g = make_geometry(spec, spec.in_channels, x.dim(2), x.dim(3), oh, ow);
  Tensor<T> out({x.dim(0), spec.out_channels, oh, ow});
  conv_forward_core(x, p.weight, spec.out_channels, g, out);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    add_bias(out.ptr() + n * spec.out_channels * oh * ow, p.bias, oh * ow);
  }
  ensure_finite(out, "conv2d");
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec,
                          const Tensor<T>& grad_out, LayerParams<T>* grads, bool need_input_grad) {
  check_conv_params(p, spec, false, "conv2d_backward");
  check_input(x, spec.in_channels, "conv2d_backward");
  const std::size_t oh = spec.out_h(x.dim(2)), ow = spec.out_w(x.dim(3));
  if (grad_out.shape() != Shape{x.dim(0), spec.out_channels, oh, ow}) {
    throw ShapeMismatch("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  const Geometry g = make_geometry(spec, spec.in_channels, x.dim(2), x.dim(3), oh, ow);
  if (grads != nullptr) {
    conv_backward_weight_core(x, grad_out, spec.out_channels, g, grads->weight.ptr());
    if (!grads->bias.empty()) {
      for (std::size_t n = 0; n < x.dim(0); ++n) {
        accumulate_bias_grad(grad_out.ptr() + n * spec.out_channels * oh * ow, grads->bias, oh * ow);
      }
    }
  }
  if (!need_input_grad) return {};
  Tensor<T> grad_x(x.shape());
  conv_backward_data_core(grad_out, p.weight, spec.out_channels, g, grad_x);
  return grad_x;
}

template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& grad_out, const Tensor<T>& weight, const ConvSpec& spec,
                               std::size_t in_h, std::size_t in_w) {
  spec.validate();
  if (weight.shape() != Shape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}) {
    throw ShapeMismatch("conv2d_backward_data: weight shape " + shape_str(weight.shape()));
  }
  const std::size_t oh = spec.out_h(in_h), ow = spec.out_w(in_w);
  if (grad_out.rank() != 4 || grad_out.dim(1) != spec.out_channels || grad_out.dim(2) != oh ||
      grad_out.dim(3) != ow) {
    throw ShapeMismatch("conv2d_backward_data: grad_out shape " + shape_str(grad_out.shape()));
  }
  const Geometry g = make_geometry(spec, spec.in_channels, in_h, in_w, oh, ow);
  Tensor<T> grad_x({grad_out.dim(0), spec.in_channels, in_h, in_w});
  conv_backward_data_core(grad_out, weight, spec.out_channels, g, grad_x);
  return grad_x;
}

namespace {

// The convolution whose input-adjoint is the transposed convolution `spec`.
ConvSpec adjoint_spec(const ConvSpec& spec) {
  ConvSpec a = spec;
  a.in_channels = spec.out_channels;
  a.out_channels = spec.in_channels;
  return a;
}

}  // namespace

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec) {
  check_conv_params(p, spec, true, "conv_transpose2d");
  check_input(x, spec.in_channels, "conv_transpose2d");
  const std::size_t oh = spec.transposed_out_h(x.dim(2)), ow = spec.transposed_out_w(x.dim(3));
  const ConvSpec adj = adjoint_spec(spec);
  if (adj.out_h(oh) != x.dim(2) || adj.out_w(ow) != x.dim(3)) {
    throw ShapeMismatch("conv_transpose2d: geometry is not invertible for input " + shape_str(x.shape()));
  }
  Tensor<T> out = conv2d_backward_data(x, p.weight, adj, oh, ow);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    add_bias(out.ptr() + n * spec.out_channels * oh * ow, p.bias, oh * ow);
  }
  ensure_finite(out, "conv_transpose2d");
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec,
                                    const Tensor<T>& grad_out, LayerParams<T>* grads, bool need_input_grad) {
  check_conv_params(p, spec, true, "conv_transpose2d_backward");
  check_input(x, spec.in_channels, "conv_transpose2d_backward");
  const std::size_t oh = spec.transposed_out_h(x.dim(2)), ow = spec.transposed_out_w(x.dim(3));
  if (grad_out.shape() != Shape{x.dim(0), spec.out_channels, oh, ow}) {
    throw ShapeMismatch("conv_transpose2d_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  const ConvSpec adj = adjoint_spec(spec);
  const Geometry g = make_geometry(adj, adj.in_channels, oh, ow, x.dim(2), x.dim(3));
  if (grads != nullptr) {
    // out = A^T x  =>  dW = sum_n x[n] * im2col(grad_out[n])^T
    conv_backward_weight_core(grad_out, x, spec.in_channels, g, grads->weight.ptr());
    if (!grads->bias.empty()) {
      for (std::size_t n = 0; n < x.dim(0); ++n) {
        accumulate_bias_grad(grad_out.ptr() + n * spec.out_channels * oh * ow, grads->bias, oh * ow);
      }
    }
  }
  if (!need_input_grad) return {};
  Tensor<T> grad_x(x.shape());
  conv_forward_core(grad_out, p.weight, spec.in_channels, g, grad_x);
  return grad_x;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_pool_input(const Tensor<T>& x, const char* op) {
  if (x.rank() != 4) throw ShapeMismatch(std::string(op) + ": expected rank-4 input");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw ShapeMismatch(std::string(op) + ": spatial dims must be even, got " + shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  check_pool_input(x, "maxpool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), h / 2, w / 2});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = out.ptr() + p * (h / 2) * (w / 2);
    for (std::size_t oy = 0; oy < h / 2; ++oy) {
      const T* r0 = src + 2 * oy * w;
      const T* r1 = r0 + w;
      for (std::size_t ox = 0; ox < w / 2; ++ox) {
        dst[oy * (w / 2) + ox] = std::max(std::max(r0[2 * ox], r0[2 * ox + 1]), std::max(r1[2 * ox], r1[2 * ox + 1]));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  check_pool_input(x, "maxpool2_backward");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (grad_out.shape() != Shape{x.dim(0), x.dim(1), h / 2, w / 2}) {
    throw ShapeMismatch("maxpool2_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  Tensor<T> grad_x(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = grad_x.ptr() + p * h * w;
    const T* g = grad_out.ptr() + p * (h / 2) * (w / 2);
    for (std::size_t oy = 0; oy < h / 2; ++oy) {
      for (std::size_t ox = 0; ox < w / 2; ++ox) {
        const std::size_t cand[4] = {2 * oy * w + 2 * ox, 2 * oy * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                     (2 * oy + 1) * w + 2 * ox + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (src[cand[k]] > src[best]) best = cand[k];
        }
        dst[best] += g[oy * (w / 2) + ox];
      }
    }
  }
  return grad_x;
}

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  check_pool_input(x, "avgpool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), h / 2, w / 2});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = out.ptr() + p * (h / 2) * (w / 2);
    for (std::size_t oy = 0; oy < h / 2; ++oy) {
      for (std::size_t ox = 0; ox < w / 2; ++ox) {
        const T* r0 = src + 2 * oy * w + 2 * ox;
        dst[oy * (w / 2) + ox] = (r0[0] + r0[1] + r0[w] + r0[w + 1]) * T(0.25);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> avgpool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  check_pool_input(x, "avgpool2_backward");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (grad_out.shape() != Shape{x.dim(0), x.dim(1), h / 2, w / 2}) {
    throw ShapeMismatch("avgpool2_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  Tensor<T> grad_x(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    T* dst = grad_x.ptr() + p * h * w;
    const T* g = grad_out.ptr() + p * (h / 2) * (w / 2);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) dst[y * w + xx] = g[(y / 2) * (w / 2) + xx / 2] * T(0.25);
    }
  }
  return grad_x;
}

template <typename T>
Tensor<T> pool2(const Tensor<T>& x, PoolMode mode) {
  return mode == PoolMode::kMax ? maxpool2(x) : avgpool2(x);
}

template <typename T>
Tensor<T> pool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out, PoolMode mode) {
  return mode == PoolMode::kMax ? maxpool2_backward(x, grad_out) : avgpool2_backward(x, grad_out);
}

// ---------------------------------------------------------------------------

namespace {

struct PlaneView {
  std::size_t channels, height, width;
};

template <typename T>
PlaneView plane_view(const Tensor<T>& f, const char* op) {
  if (f.rank() == 3) return {f.dim(0), f.dim(1), f.dim(2)};
  if (f.rank() == 4 && f.dim(0) == 1) return {f.dim(1), f.dim(2), f.dim(3)};
  throw ShapeMismatch(std::string(op) + ": expected C x H x W or 1 x C x H x W, got " + shape_str(f.shape()));
}

}  // namespace

template <typename T>
T bilinear_sample(const Tensor<T>& f, std::size_t channel, T y, T x) {
  const PlaneView v = plane_view(f, "bilinear_sample");
  if (channel >= v.channels) throw ShapeMismatch("bilinear_sample: channel out of range");
  return detail::bilinear_value(f.ptr() + channel * v.height * v.width, static_cast<int>(v.height),
                                static_cast<int>(v.width), y, x);
}

template <typename T>
BilinearGrad<T> bilinear_sample_grad(const Tensor<T>& f, std::size_t channel, T y, T x) {
  const PlaneView v = plane_view(f, "bilinear_sample_grad");
  if (channel >= v.channels) throw ShapeMismatch("bilinear_sample_grad: channel out of range");
  BilinearGrad<T> r{};
  r.value = detail::bilinear_value_grad(f.ptr() + channel * v.height * v.width, static_cast<int>(v.height),
                                        static_cast<int>(v.width), y, x, r.dy, r.dx);
  return r;
}

template <typename T>
void bilinear_sample_backward(Tensor<T>& grad_f, std::size_t channel, T y, T x, T g) {
  const PlaneView v = plane_view(grad_f, "bilinear_sample_backward");
  if (channel >= v.channels) throw ShapeMismatch("bilinear_sample_backward: channel out of range");
  detail::bilinear_scatter(grad_f.ptr() + channel * v.height * v.width, static_cast<int>(v.height),
                           static_cast<int>(v.width), y, x, g);
}

// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> spp_bin_range(std::size_t i, std::size_t extent, std::size_t bins) noexcept {
  const std::size_t lo = (i * extent) / bins;
  const std::size_t hi = ((i + 1) * extent + bins - 1) / bins;
  return {lo, std::max(hi, lo + 1)};
}

namespace {

template <typename T>
PlaneView check_spp_region(const Tensor<T>& region, std::size_t bins, const char* op) {
  if (bins == 0) throw InvalidParam(std::string(op) + ": bins must be >= 1");
  if (region.empty()) throw ShapeMismatch(std::string(op) + ": empty region " + shape_str(region.shape()));
  return plane_view(region, op);
}

}  // namespace

template <typename T>
Tensor<T> spp_pool(const Tensor<T>& region, std::size_t bins, PoolMode mode) {
  const PlaneView v = check_spp_region(region, bins, "spp_pool");
  Tensor<T> out({v.channels, bins, bins});
  for (std::size_t c = 0; c < v.channels; ++c) {
    const T* plane = region.ptr() + c * v.height * v.width;
    for (std::size_t i = 0; i < bins; ++i) {
      const auto [y0, y1] = spp_bin_range(i, v.height, bins);
      for (std::size_t j = 0; j < bins; ++j) {
        const auto [x0, x1] = spp_bin_range(j, v.width, bins);
        T acc = mode == PoolMode::kMax ? plane[y0 * v.width + x0] : T(0);
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            const T val = plane[y * v.width + x];
            if (mode == PoolMode::kMax) {
              if (val > acc) acc = val;
            } else {
              acc += val;
            }
          }
        }
        if (mode == PoolMode::kMean) acc /= static_cast<T>((y1 - y0) * (x1 - x0));
        out[(c * bins + i) * bins + j] = acc;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> spp_pool_backward(const Tensor<T>& region, std::size_t bins, PoolMode mode, const Tensor<T>& grad_out) {
  const PlaneView v = check_spp_region(region, bins, "spp_pool_backward");
  if (grad_out.numel() != v.channels * bins * bins) {
    throw ShapeMismatch("spp_pool_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  Tensor<T> grad(region.shape());
  for (std::size_t c = 0; c < v.channels; ++c) {
    const T* plane = region.ptr() + c * v.height * v.width;
    T* gplane = grad.ptr() + c * v.height * v.width;
    for (std::size_t i = 0; i < bins; ++i) {
      const auto [y0, y1] = spp_bin_range(i, v.height, bins);
      for (std::size_t j = 0; j < bins; ++j) {
        const auto [x0, x1] = spp_bin_range(j, v.width, bins);
        const T g = grad_out[(c * bins + i) * bins + j];
        if (mode == PoolMode::kMax) {
          std::size_t best = y0 * v.width + x0;
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) {
              if (plane[y * v.width + x] > plane[best]) best = y * v.width + x;
            }
          }
          gplane[best] += g;
        } else {
          const T share = g / static_cast<T>((y1 - y0) * (x1 - x0));
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) gplane[y * v.width + x] += share;
          }
        }
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------

std::size_t grouped_fc_weight_count(std::size_t in, std::size_t out, std::size_t groups) {
  if (groups == 0 || in % groups != 0 || out % groups != 0) {
    throw ShapeMismatch("grouped_fc: in=" + std::to_string(in) + " and out=" + std::to_string(out) +
                        " must both be divisible by groups=" + std::to_string(groups));
  }
  return groups * (in / groups) * (out / groups);
}

namespace {

template <typename T>
std::pair<std::size_t, std::size_t> check_grouped_fc(const Tensor<T>& x, const LayerParams<T>& p,
                                                     std::size_t groups, const char* op) {
  if (p.weight.rank() != 3 || p.weight.dim(0) != groups) {
    throw ShapeMismatch(std::string(op) + ": weight must be groups x out_g x in_g, got " + shape_str(p.weight.shape()));
  }
  const std::size_t in = groups * p.weight.dim(2), out = groups * p.weight.dim(1);
  grouped_fc_weight_count(in, out, groups);
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  if (x.rank() > 2 || x.numel() != rows * in) {
    throw ShapeMismatch(std::string(op) + ": input " + shape_str(x.shape()) + " does not have " +
                        std::to_string(in) + " features per row");
  }
  if (!p.bias.empty() && p.bias.shape() != Shape{out}) {
    throw ShapeMismatch(std::string(op) + ": bias shape " + shape_str(p.bias.shape()));
  }
  return {rows, in};
}

}  // namespace

template <typename T>
Tensor<T> grouped_fc(const Tensor<T>& x, const LayerParams<T>& p, std::size_t groups) {
  const auto [rows, in] = check_grouped_fc(x, p, groups, "grouped_fc");
  const std::size_t out_g = p.weight.dim(1), in_g = p.weight.dim(2), out = groups * out_g;
  Tensor<T> y = x.rank() == 1 ? Tensor<T>({out}) : Tensor<T>({rows, out});
  for (std::size_t g = 0; g < groups; ++g) {
    const detail::ConstStridedMap<T> xg(x.ptr() + g * in_g, rows, in_g, Eigen::OuterStride<>(in));
    detail::StridedMap<T> yg(y.ptr() + g * out_g, rows, out_g, Eigen::OuterStride<>(out));
    const auto wg = as_matrix(p.weight.ptr() + g * out_g * in_g, out_g, in_g);
    yg.noalias() = xg * wg.transpose();
  }
  if (!p.bias.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) y[r * out + o] += p.bias[o];
    }
  }
  ensure_finite(y, "grouped_fc");
  return y;
}

template <typename T>
Tensor<T> grouped_fc_backward(const Tensor<T>& x, const LayerParams<T>& p, std::size_t groups,
                              const Tensor<T>& grad_out, LayerParams<T>* grads, bool need_input_grad) {
  const auto [rows, in] = check_grouped_fc(x, p, groups, "grouped_fc_backward");
  const std::size_t out_g = p.weight.dim(1), in_g = p.weight.dim(2), out = groups * out_g;
  if (grad_out.numel() != rows * out) {
    throw ShapeMismatch("grouped_fc_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  Tensor<T> grad_x = need_input_grad ? Tensor<T>(x.shape()) : Tensor<T>();
  for (std::size_t g = 0; g < groups; ++g) {
    const detail::ConstStridedMap<T> xg(x.ptr() + g * in_g, rows, in_g, Eigen::OuterStride<>(in));
    const detail::ConstStridedMap<T> gy(grad_out.ptr() + g * out_g, rows, out_g, Eigen::OuterStride<>(out));
    const auto wg = as_matrix(p.weight.ptr() + g * out_g * in_g, out_g, in_g);
    if (grads != nullptr) {
      auto gw = as_matrix(grads->weight.ptr() + g * out_g * in_g, out_g, in_g);
      gw.noalias() += gy.transpose() * xg;
    }
    if (need_input_grad) {
      detail::StridedMap<T> gx(grad_x.ptr() + g * in_g, rows, in_g, Eigen::OuterStride<>(in));
      gx.noalias() = gy * wg;
    }
  }
  if (grads != nullptr && !grads->bias.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) grads->bias[o] += grad_out[r * out + o];
    }
  }
  return grad_x;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  if (x.rank() != 4) throw ShapeMismatch("instance_norm: expected rank-4 input");
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * hw;
    T* dst = y.ptr() + p * hw;
    T mean = 0;
    for (std::size_t i = 0; i < hw; ++i) mean += src[i];
    mean /= static_cast<T>(hw);
    T var = 0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(hw);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * inv;
  }
  return y;
}

template <typename T>
Tensor<T> instance_norm_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T eps) {
  if (!x.same_shape(grad_out)) throw ShapeMismatch("instance_norm_backward: gradient shape mismatch");
  const Tensor<T> y = instance_norm(x, eps);
  const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> gx(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * hw;
    const T* yp = y.ptr() + p * hw;
    const T* g = grad_out.ptr() + p * hw;
    T mean = 0;
    for (std::size_t i = 0; i < hw; ++i) mean += src[i];
    mean /= static_cast<T>(hw);
    T var = 0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(hw);
    const T inv = T(1) / std::sqrt(var + eps);
    T mean_g = 0, mean_gy = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      mean_g += g[i];
      mean_gy += g[i] * yp[i];
    }
    mean_g /= static_cast<T>(hw);
    mean_gy /= static_cast<T>(hw);
    T* dst = gx.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = inv * (g[i] - mean_g - yp[i] * mean_gy);
  }
  return gx;
}

#define PANET_INSTANTIATE(T)                                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const LayerParams<T>&, const ConvSpec&);                      \
  template Tensor<T> conv2d_backward<T>(const Tensor<T>&, const LayerParams<T>&, const ConvSpec&,              \
                                        const Tensor<T>&, LayerParams<T>*, bool);                              \
  template Tensor<T> conv2d_backward_data<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, std::size_t, \
                                             std::size_t);                                                     \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const LayerParams<T>&, const ConvSpec&);            \
  template Tensor<T> conv_transpose2d_backward<T>(const Tensor<T>&, const LayerParams<T>&, const ConvSpec&,    \
                                                  const Tensor<T>&, LayerParams<T>*, bool);                    \
  template Tensor<T> maxpool2<T>(const Tensor<T>&);                                                            \
  template Tensor<T> maxpool2_backward<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> avgpool2<T>(const Tensor<T>&);                                                            \
  template Tensor<T> avgpool2_backward<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> pool2<T>(const Tensor<T>&, PoolMode);                                                     \
  template Tensor<T> pool2_backward<T>(const Tensor<T>&, const Tensor<T>&, PoolMode);                          \
  template T bilinear_sample<T>(const Tensor<T>&, std::size_t, T, T);                                          \
  template BilinearGrad<T> bilinear_sample_grad<T>(const Tensor<T>&, std::size_t, T, T);                       \
  template void bilinear_sample_backward<T>(Tensor<T>&, std::size_t, T, T, T);                                 \
  template Tensor<T> spp_pool<T>(const Tensor<T>&, std::size_t, PoolMode);                                     \
  template Tensor<T> spp_pool_backward<T>(const Tensor<T>&, std::size_t, PoolMode, const Tensor<T>&);          \
  template Tensor<T> grouped_fc<T>(const Tensor<T>&, const LayerParams<T>&, std::size_t);                      \
  template Tensor<T> grouped_fc_backward<T>(const Tensor<T>&, const LayerParams<T>&, std::size_t,              \
                                            const Tensor<T>&, LayerParams<T>*, bool);                          \
  template Tensor<T> instance_norm<T>(const Tensor<T>&, T);                                                    \
  template Tensor<T> instance_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, T);

PANET_INSTANTIATE(float)
PANET_INSTANTIATE(double)

#undef PANET_INSTANTIATE

}  // namespace panet
