#include "panet/adaptive_ops.hpp"

#include <algorithm>
#include <string>

#include "detail/bilinear.hpp"
#include "detail/linalg.hpp"

namespace panet {

using detail::as_matrix;

template <typename T>
OffsetField<T> offset_field(const Tensor<T>& f, const LayerParams<T>& p, std::size_t kernel_taps) {
  if (p.weight.rank() != 4 || p.weight.dim(0) != 2 * kernel_taps) {
    throw ShapeMismatch("offset_field: offset conv must emit " + std::to_string(2 * kernel_taps) +
                        " channels, weight is " + shape_str(p.weight.shape()));
  }
  if (f.rank() != 4) throw ShapeMismatch("offset_field: expected N x C x H x W input");
  return {conv2d(f, p, ConvSpec::same3x3(f.dim(1), 2 * kernel_taps))};
}

template <typename T>
Tensor<T> offset_field_backward(const Tensor<T>& f, const LayerParams<T>& p, const Tensor<T>& grad_offsets,
                                LayerParams<T>* grads, bool need_input_grad) {
  return conv2d_backward(f, p, ConvSpec::same3x3(f.dim(1), p.weight.dim(0)), grad_offsets, grads, need_input_grad);
}

namespace {

struct DeformGeometry {
  int channels, height, width;
  int kh, kw, ph, pw;
  int taps() const { return kh * kw; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

template <typename T>
DeformGeometry check_deform(const Tensor<T>& f, const LayerParams<T>& p, const OffsetField<T>& o,
                            const ConvSpec& spec, const char* op) {
  spec.validate();
  if (spec.stride_h != 1 || spec.stride_w != 1 || spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0 ||
      spec.pad_h != spec.kernel_h / 2 || spec.pad_w != spec.kernel_w / 2) {
    throw InvalidParam(std::string(op) + ": only stride-1, size-preserving odd kernels are supported");
  }
  if (f.rank() != 4 || f.dim(1) != spec.in_channels) {
    throw ShapeMismatch(std::string(op) + ": input " + shape_str(f.shape()) + " does not match in_channels " +
                        std::to_string(spec.in_channels));
  }
  const Shape wshape{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (p.weight.shape() != wshape) {
    throw ShapeMismatch(std::string(op) + ": weight shape " + shape_str(p.weight.shape()) + ", expected " +
                        shape_str(wshape));
  }
  if (!p.bias.empty() && p.bias.shape() != Shape{spec.out_channels}) {
    throw ShapeMismatch(std::string(op) + ": bias shape " + shape_str(p.bias.shape()));
  }
  const Shape oshape{f.dim(0), 2 * spec.kernel_h * spec.kernel_w, f.dim(2), f.dim(3)};
  if (o.data.shape() != oshape) {
    throw ShapeMismatch(std::string(op) + ": offset field " + shape_str(o.data.shape()) + " misaligned, expected " +
                        shape_str(oshape));
  }
  return {static_cast<int>(spec.in_channels), static_cast<int>(f.dim(2)), static_cast<int>(f.dim(3)),
          static_cast<int>(spec.kernel_h),    static_cast<int>(spec.kernel_w), static_cast<int>(spec.pad_h),
          static_cast<int>(spec.pad_w)};
}

// cols[(c*K + k), p] = f(c, p + g_k + o_p(g_k))
template <typename T>
void deform_im2col(const T* f, const T* offsets, const DeformGeometry& g, T* cols) {
  const std::size_t plane = g.plane();
  const int taps = g.taps();
  for (int k = 0; k < taps; ++k) {
    const int ky = k / g.kw, kx = k % g.kw;
    const T* off_y = offsets + (2 * k) * plane;
    const T* off_x = offsets + (2 * k + 1) * plane;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * g.width + x;
        const T sy = T(y - g.ph + ky) + off_y[pix];
        const T sx = T(x - g.pw + kx) + off_x[pix];
        T* dst = cols + static_cast<std::size_t>(k) * plane + pix;
        const std::size_t row_stride = static_cast<std::size_t>(taps) * plane;
        detail::Corners<T> c;
        if (!detail::bilinear_corners(g.height, g.width, sy, sx, c)) {
          for (int ch = 0; ch < g.channels; ++ch) dst[ch * row_stride] = T(0);
          continue;
        }
        const T hy = T(1) - c.ly, hx = T(1) - c.lx;
        const T w00 = c.in00 ? hy * hx : T(0), w01 = c.in01 ? hy * c.lx : T(0);
        const T w10 = c.in10 ? c.ly * hx : T(0), w11 = c.in11 ? c.ly * c.lx : T(0);
        const long base = static_cast<long>(c.y0) * g.width + c.x0;
        // Clamp reads of excluded corners to a valid index; their weight is 0.
        const long i00 = c.in00 ? base : 0, i01 = c.in01 ? base + 1 : 0;
        const long i10 = c.in10 ? base + g.width : 0, i11 = c.in11 ? base + g.width + 1 : 0;
        const T* src = f;
        for (int ch = 0; ch < g.channels; ++ch, src += plane) {
          dst[ch * row_stride] = w00 * src[i00] + w01 * src[i01] + w10 * src[i10] + w11 * src[i11];
        }
      }
    }
  }
}

// Scatter column gradients back to the input and to the offsets.
template <typename T>
void deform_col2im(const T* gcols, const T* f, const T* offsets, const DeformGeometry& g, T* grad_f,
                   T* grad_offsets) {
  const std::size_t plane = g.plane();
  const int taps = g.taps();
  const std::size_t row_stride = static_cast<std::size_t>(taps) * plane;
  for (int k = 0; k < taps; ++k) {
    const int ky = k / g.kw, kx = k % g.kw;
    const T* off_y = offsets + (2 * k) * plane;
    const T* off_x = offsets + (2 * k + 1) * plane;
    T* goff_y = grad_offsets + (2 * k) * plane;
    T* goff_x = grad_offsets + (2 * k + 1) * plane;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * g.width + x;
        const T sy = T(y - g.ph + ky) + off_y[pix];
        const T sx = T(x - g.pw + kx) + off_x[pix];
        detail::Corners<T> c;
        if (!detail::bilinear_corners(g.height, g.width, sy, sx, c)) continue;
        const T hy = T(1) - c.ly, hx = T(1) - c.lx;
        const long base = static_cast<long>(c.y0) * g.width + c.x0;
        const T* gsrc = gcols + static_cast<std::size_t>(k) * plane + pix;
        T acc_dy = 0, acc_dx = 0;
        for (int ch = 0; ch < g.channels; ++ch) {
          const T gv = gsrc[ch * row_stride];
          const T* fp = f + ch * plane;
          T* gp = grad_f + ch * plane;
          const T v00 = c.in00 ? fp[base] : T(0);
          const T v01 = c.in01 ? fp[base + 1] : T(0);
          const T v10 = c.in10 ? fp[base + g.width] : T(0);
          const T v11 = c.in11 ? fp[base + g.width + 1] : T(0);
          acc_dy += gv * (hx * (v10 - v00) + c.lx * (v11 - v01));
          acc_dx += gv * (hy * (v01 - v00) + c.ly * (v11 - v10));
          if (gv == T(0)) continue;
          if (c.in00) gp[base] += gv * hy * hx;
          if (c.in01) gp[base + 1] += gv * hy * c.lx;
          if (c.in10) gp[base + g.width] += gv * c.ly * hx;
          if (c.in11) gp[base + g.width + 1] += gv * c.ly * c.lx;
        }
        goff_y[pix] += acc_dy;
        goff_x[pix] += acc_dx;
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& f, const LayerParams<T>& p, const OffsetField<T>& offsets,
                        const ConvSpec& spec) {
  const DeformGeometry g = check_deform(f, p, offsets, spec, "deform_conv2d");
  const std::size_t n_batch = f.dim(0), plane = g.plane();
  const std::size_t rows = static_cast<std::size_t>(g.channels) * g.taps();
  Tensor<T> out({n_batch, spec.out_channels, f.dim(2), f.dim(3)});
  AlignedVector<T> cols(rows * plane);
  const auto w = as_matrix(p.weight.ptr(), spec.out_channels, rows);
  for (std::size_t n = 0; n < n_batch; ++n) {
    deform_im2col(f.ptr() + n * g.channels * plane, offsets.data.ptr() + n * 2 * g.taps() * plane, g, cols.data());
    auto o = as_matrix(out.ptr() + n * spec.out_channels * plane, spec.out_channels, plane);
    o.noalias() = w * as_matrix(cols.data(), rows, plane);
    if (!p.bias.empty()) {
      for (std::size_t c = 0; c < spec.out_channels; ++c) o.row(c).array() += p.bias[c];
    }
  }
  ensure_finite(out, "deform_conv2d");
  return out;
}

template <typename T>
DeformGrads<T> deform_conv2d_backward(const Tensor<T>& f, const LayerParams<T>& p, const OffsetField<T>& offsets,
                                      const ConvSpec& spec, const Tensor<T>& grad_out, LayerParams<T>* grads) {
  const DeformGeometry g = check_deform(f, p, offsets, spec, "deform_conv2d_backward");
  const std::size_t n_batch = f.dim(0), plane = g.plane();
  if (grad_out.shape() != Shape{n_batch, spec.out_channels, f.dim(2), f.dim(3)}) {
    throw ShapeMismatch("deform_conv2d_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  const std::size_t rows = static_cast<std::size_t>(g.channels) * g.taps();
  DeformGrads<T> out{Tensor<T>(f.shape()), Tensor<T>(offsets.data.shape())};
  AlignedVector<T> cols(rows * plane);
  AlignedVector<T> gcols(rows * plane);
  const auto w = as_matrix(p.weight.ptr(), spec.out_channels, rows);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* fn = f.ptr() + n * g.channels * plane;
    const T* on = offsets.data.ptr() + n * 2 * g.taps() * plane;
    const auto go = as_matrix(grad_out.ptr() + n * spec.out_channels * plane, spec.out_channels, plane);
    if (grads != nullptr) {
      deform_im2col(fn, on, g, cols.data());
      auto gw = as_matrix(grads->weight.ptr(), spec.out_channels, rows);
      gw.noalias() += go * as_matrix(cols.data(), rows, plane).transpose();
      if (!grads->bias.empty()) {
        for (std::size_t c = 0; c < spec.out_channels; ++c) grads->bias[c] += go.row(c).sum();
      }
    }
    auto gc = as_matrix(gcols.data(), rows, plane);
    gc.noalias() = w.transpose() * go;
    deform_col2im(gcols.data(), fn, on, g, out.input.ptr() + n * g.channels * plane,
                  out.offset.ptr() + n * 2 * g.taps() * plane);
  }
  return out;
}

// ---------------------------------------------------------------------------

RegionGrid RegionGrid::make(std::size_t height, std::size_t width, std::size_t n) {
  if (n == 0) throw InvalidParam("region grid: n must be >= 1");
  if (n > height || n > width) {
    throw InvalidParam("region grid: n=" + std::to_string(n) + " exceeds feature size " + std::to_string(height) +
                       "x" + std::to_string(width));
  }
  RegionGrid g;
  g.n = n;
  for (std::size_t i = 0; i <= n; ++i) {
    g.row_splits.push_back(i * height / n);
    g.col_splits.push_back(i * width / n);
  }
  return g;
}

namespace {

template <typename T>
Tensor<T> crop(const Tensor<T>& f, std::size_t sample, std::size_t r0, std::size_t r1, std::size_t c0,
               std::size_t c1) {
  const std::size_t channels = f.dim(1), h = f.dim(2), w = f.dim(3);
  Tensor<T> out({1, channels, r1 - r0, c1 - c0});
  T* dst = out.ptr();
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = f.ptr() + (sample * channels + c) * h * w;
    for (std::size_t y = r0; y < r1; ++y) {
      dst = std::copy(plane + y * w + c0, plane + y * w + c1, dst);
    }
  }
  return out;
}

// dst[sample, channel_offset + c, r0 + y, c0 + x] (+)= src[0, c, y, x]
template <typename T>
void paste(Tensor<T>& dst, std::size_t sample, std::size_t channel_offset, const Tensor<T>& src, std::size_t r0,
           std::size_t c0, bool accumulate) {
  const std::size_t channels = dst.dim(1), h = dst.dim(2), w = dst.dim(3);
  const std::size_t sc = src.dim(1), sh = src.dim(2), sw = src.dim(3);
  for (std::size_t c = 0; c < sc; ++c) {
    T* plane = dst.ptr() + (sample * channels + channel_offset + c) * h * w;
    const T* sp = src.ptr() + c * sh * sw;
    for (std::size_t y = 0; y < sh; ++y) {
      T* row = plane + (r0 + y) * w + c0;
      const T* srow = sp + y * sw;
      if (accumulate) {
        for (std::size_t x = 0; x < sw; ++x) row[x] += srow[x];
      } else {
        std::copy(srow, srow + sw, row);
      }
    }
  }
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> region_partition(const Tensor<T>& f, std::size_t n, RegionGrid* grid_out) {
  if (f.rank() != 4) throw ShapeMismatch("region_partition: expected N x C x H x W input");
  const RegionGrid grid = RegionGrid::make(f.dim(2), f.dim(3), n);
  std::vector<Tensor<T>> regions;
  regions.reserve(grid.count());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Tensor<T>> per_sample;
      for (std::size_t s = 0; s < f.dim(0); ++s) {
        per_sample.push_back(crop(f, s, grid.row_splits[i], grid.row_splits[i + 1], grid.col_splits[j],
                                  grid.col_splits[j + 1]));
      }
      regions.push_back(per_sample.size() == 1 ? std::move(per_sample.front()) : concat_batch(per_sample));
    }
  }
  if (grid_out != nullptr) *grid_out = grid;
  return regions;
}

template <typename T>
Tensor<T> region_reassemble(const std::vector<Tensor<T>>& regions, const RegionGrid& grid) {
  if (regions.size() != grid.count() || regions.empty()) {
    throw ShapeMismatch("region_reassemble: expected " + std::to_string(grid.count()) + " regions");
  }
  const std::size_t n_batch = regions.front().dim(0), channels = regions.front().dim(1);
  Tensor<T> out({n_batch, channels, grid.height(), grid.width()});
  for (std::size_t i = 0; i < grid.n; ++i) {
    for (std::size_t j = 0; j < grid.n; ++j) {
      const Tensor<T>& r = regions[i * grid.n + j];
      const Shape expected{n_batch, channels, grid.row_splits[i + 1] - grid.row_splits[i],
                           grid.col_splits[j + 1] - grid.col_splits[j]};
      if (r.shape() != expected) {
        throw ShapeMismatch("region_reassemble: region " + std::to_string(i * grid.n + j) + " has shape " +
                            shape_str(r.shape()) + ", expected " + shape_str(expected));
      }
      for (std::size_t s = 0; s < n_batch; ++s) {
        paste(out, s, 0, batch_item(r, s), grid.row_splits[i], grid.col_splits[j], false);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void GeneratorSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || bins == 0) {
    throw InvalidParam("generator: channel, kernel and bin counts must be >= 1");
  }
  if (groups.size() != hidden.size() + 1) {
    throw InvalidParam("generator: need one group count per FC layer (" + std::to_string(hidden.size() + 1) + ")");
  }
  std::size_t in = spp_features();
  for (std::size_t l = 0; l < groups.size(); ++l) {
    const std::size_t out = l < hidden.size() ? hidden[l] : filter_size();
    grouped_fc_weight_count(in, out, groups[l]);
    in = out;
  }
}

template <typename T>
GeneratorParams<T> GeneratorParams<T>::zeros_like() const {
  GeneratorParams<T> z;
  for (const auto& l : fc) z.fc.push_back(l.zeros_like());
  return z;
}

template <typename T>
std::size_t GeneratorParams<T>::count() const noexcept {
  std::size_t c = 0;
  for (const auto& l : fc) c += l.count();
  return c;
}

template <typename T>
GeneratorParams<T> make_generator_params(const GeneratorSpec& spec) {
  spec.validate();
  GeneratorParams<T> p;
  std::size_t in = spec.spp_features();
  for (std::size_t l = 0; l < spec.groups.size(); ++l) {
    const std::size_t out = l < spec.hidden.size() ? spec.hidden[l] : spec.filter_size();
    const std::size_t g = spec.groups[l];
    p.fc.push_back({Tensor<T>({g, out / g, in / g}), Tensor<T>({out})});
    in = out;
  }
  return p;
}

namespace {

template <typename T>
void check_generator(const GeneratorParams<T>& params, const GeneratorSpec& spec) {
  spec.validate();
  if (params.fc.size() != spec.groups.size()) {
    throw ShapeMismatch("generator: expected " + std::to_string(spec.groups.size()) + " FC layers, got " +
                        std::to_string(params.fc.size()));
  }
}

// FC stack over a batch of SPP feature rows (R x spp_features).
template <typename T>
struct GeneratorPass {
  std::vector<Tensor<T>> inputs;  // input to each FC layer
  std::vector<Tensor<T>> pre;     // pre-ReLU hidden activations
  Tensor<T> output;               // R x filter_size
};

template <typename T>
GeneratorPass<T> generator_rows_forward(Tensor<T> rows, const GeneratorParams<T>& params, const GeneratorSpec& spec) {
  GeneratorPass<T> pass;
  const std::size_t layers = params.fc.size();
  pass.inputs.push_back(std::move(rows));
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor<T> h = grouped_fc(pass.inputs.back(), params.fc[l], spec.groups[l]);
    if (l + 1 < layers) {
      pass.inputs.push_back(relu(h));
      pass.pre.push_back(std::move(h));
    } else {
      pass.output = std::move(h);
    }
  }
  return pass;
}

template <typename T>
Tensor<T> generator_rows_backward(const std::vector<Tensor<T>>& inputs, const std::vector<Tensor<T>>& pre,
                                  const GeneratorParams<T>& params, const GeneratorSpec& spec, Tensor<T> grad,
                                  GeneratorParams<T>* grads) {
  for (std::size_t l = params.fc.size(); l-- > 0;) {
    Tensor<T> gx = grouped_fc_backward(inputs[l], params.fc[l], spec.groups[l], grad,
                                       grads != nullptr ? &grads->fc[l] : nullptr, true);
    grad = l > 0 ? relu_backward(pre[l - 1], gx) : std::move(gx);
  }
  return grad;
}

template <typename T>
Tensor<T> check_region(const Tensor<T>& region, const GeneratorSpec& spec, const char* op) {
  const bool ok3 = region.rank() == 3 && region.dim(0) == spec.in_channels;
  const bool ok4 = region.rank() == 4 && region.dim(0) == 1 && region.dim(1) == spec.in_channels;
  if (!ok3 && !ok4) {
    throw ShapeMismatch(std::string(op) + ": region must have " + std::to_string(spec.in_channels) +
                        " channels, got " + shape_str(region.shape()));
  }
  return region;
}

}  // namespace

template <typename T>
GeneratedFilter<T> weight_generator(const Tensor<T>& region, const GeneratorParams<T>& params,
                                    const GeneratorSpec& spec) {
  check_generator(params, spec);
  check_region(region, spec, "weight_generator");
  Tensor<T> pooled = spp_pool(region, spec.bins, spec.spp_mode).reshape({1, spec.spp_features()});
  GeneratorPass<T> pass = generator_rows_forward(std::move(pooled), params, spec);
  return {std::move(pass.output).reshape({spec.in_channels, spec.kernel, spec.kernel, spec.out_channels})};
}

template <typename T>
Tensor<T> weight_generator_backward(const Tensor<T>& region, const GeneratorParams<T>& params,
                                    const GeneratorSpec& spec, const Tensor<T>& grad_filter,
                                    GeneratorParams<T>* grads) {
  check_generator(params, spec);
  check_region(region, spec, "weight_generator_backward");
  if (grad_filter.numel() != spec.filter_size()) {
    throw ShapeMismatch("weight_generator_backward: grad_filter shape " + shape_str(grad_filter.shape()));
  }
  Tensor<T> pooled = spp_pool(region, spec.bins, spec.spp_mode).reshape({1, spec.spp_features()});
  GeneratorPass<T> pass = generator_rows_forward(std::move(pooled), params, spec);
  Tensor<T> g_rows = generator_rows_backward(pass.inputs, pass.pre, params, spec,
                                             grad_filter.reshape({1, spec.filter_size()}), grads);
  return spp_pool_backward(region, spec.bins, spec.spp_mode, g_rows);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> filter_to_conv_weight(const Tensor<T>& filter) {
  if (filter.rank() != 4) throw ShapeMismatch("filter_to_conv_weight: expected in x kh x kw x out");
  const std::size_t in = filter.dim(0), kh = filter.dim(1), kw = filter.dim(2), out = filter.dim(3);
  Tensor<T> w({out, in, kh, kw});
  for (std::size_t c = 0; c < in; ++c)
    for (std::size_t y = 0; y < kh; ++y)
      for (std::size_t x = 0; x < kw; ++x)
        for (std::size_t o = 0; o < out; ++o) w[((o * in + c) * kh + y) * kw + x] = filter[((c * kh + y) * kw + x) * out + o];
  return w;
}

template <typename T>
Tensor<T> conv_weight_to_filter(const Tensor<T>& weight) {
  if (weight.rank() != 4) throw ShapeMismatch("conv_weight_to_filter: expected out x in x kh x kw");
  const std::size_t out = weight.dim(0), in = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  Tensor<T> f({in, kh, kw, out});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t c = 0; c < in; ++c)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x) f[((c * kh + y) * kw + x) * out + o] = weight[((o * in + c) * kh + y) * kw + x];
  return f;
}

namespace {

template <typename T>
ConvSpec adaptive_spec(const Tensor<T>& region, const GeneratedFilter<T>& w, const char* op) {
  if (w.weights.rank() != 4 || w.weights.dim(1) != w.weights.dim(2) || w.weights.dim(1) % 2 == 0) {
    throw ShapeMismatch(std::string(op) + ": filter must be in x k x k x out with odd k, got " +
                        shape_str(w.weights.shape()));
  }
  if (region.rank() != 4 || region.dim(1) != w.weights.dim(0)) {
    throw ShapeMismatch(std::string(op) + ": region " + shape_str(region.shape()) + " does not match filter " +
                        shape_str(w.weights.shape()));
  }
  const std::size_t k = w.weights.dim(1);
  return {w.weights.dim(0), w.weights.dim(3), k, k, 1, 1, k / 2, k / 2};
}

}  // namespace

template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& region, const GeneratedFilter<T>& w) {
  const ConvSpec spec = adaptive_spec(region, w, "adaptive_conv");
  const LayerParams<T> p{filter_to_conv_weight(w.weights), Tensor<T>()};
  return conv2d(region, p, spec);
}

template <typename T>
AdaptiveConvGrads<T> adaptive_conv_backward(const Tensor<T>& region, const GeneratedFilter<T>& w,
                                            const Tensor<T>& grad_out) {
  const ConvSpec spec = adaptive_spec(region, w, "adaptive_conv_backward");
  const LayerParams<T> p{filter_to_conv_weight(w.weights), Tensor<T>()};
  LayerParams<T> g{Tensor<T>(p.weight.shape()), Tensor<T>()};
  Tensor<T> grad_region = conv2d_backward(region, p, spec, grad_out, &g, true);
  return {std::move(grad_region), conv_weight_to_filter(g.weight)};
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> capm_forward(const Tensor<T>& f, const std::vector<std::size_t>& grids,
                       const std::vector<GeneratorParams<T>>& params, const GeneratorSpec& spec, CapmCache<T>* cache) {
  if (grids.empty()) throw InvalidParam("capm_forward: at least one branch grid is required");
  if (params.size() != grids.size()) {
    throw ShapeMismatch("capm_forward: " + std::to_string(grids.size()) + " grids but " +
                        std::to_string(params.size()) + " generator parameter sets");
  }
  if (f.rank() != 4 || f.dim(1) != spec.in_channels) {
    throw ShapeMismatch("capm_forward: input " + shape_str(f.shape()) + " must have " +
                        std::to_string(spec.in_channels) + " channels");
  }
  const std::size_t n_batch = f.dim(0), h = f.dim(2), w = f.dim(3);
  Tensor<T> out({n_batch, spec.out_channels * grids.size(), h, w});
  if (cache != nullptr) {
    cache->branches.clear();
    cache->input_shape = f.shape();
  }

  for (std::size_t b = 0; b < grids.size(); ++b) {
    check_generator(params[b], spec);
    CapmBranchCache<T> bc;
    bc.grid = RegionGrid::make(h, w, grids[b]);
    const std::size_t n = bc.grid.n, per_sample = bc.grid.count();

    AlignedVector<T> rows;
    rows.reserve(n_batch * per_sample * spec.spp_features());
    for (std::size_t s = 0; s < n_batch; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          Tensor<T> r = crop(f, s, bc.grid.row_splits[i], bc.grid.row_splits[i + 1], bc.grid.col_splits[j],
                             bc.grid.col_splits[j + 1]);
          const Tensor<T> pooled = spp_pool(r, spec.bins, spec.spp_mode);
          rows.insert(rows.end(), pooled.data().begin(), pooled.data().end());
          bc.regions.push_back(std::move(r));
        }
      }
    }
    const std::size_t count = bc.regions.size();
    GeneratorPass<T> pass =
        generator_rows_forward(Tensor<T>::adopt({count, spec.spp_features()}, std::move(rows)), params[b], spec);

    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t s = r / per_sample, i = (r % per_sample) / n, j = r % n;
      const T* row = pass.output.ptr() + r * spec.filter_size();
      GeneratedFilter<T> filt{Tensor<T>::adopt({spec.in_channels, spec.kernel, spec.kernel, spec.out_channels},
                                        AlignedVector<T>(row, row + spec.filter_size()))};
      const Tensor<T> specialized = adaptive_conv(bc.regions[r], filt);
      paste(out, s, b * spec.out_channels, specialized, bc.grid.row_splits[i], bc.grid.col_splits[j], false);
      bc.filters.push_back(std::move(filt));
    }
    if (cache != nullptr) {
      bc.activations = std::move(pass.inputs);
      bc.pre_relu = std::move(pass.pre);
      cache->branches.push_back(std::move(bc));
    }
  }
  return out;
}

template <typename T>
Tensor<T> capm_backward(const CapmCache<T>& cache, const std::vector<GeneratorParams<T>>& params,
                        const GeneratorSpec& spec, const Tensor<T>& grad_out,
                        std::vector<GeneratorParams<T>>* grads) {
  if (cache.branches.size() != params.size()) throw ShapeMismatch("capm_backward: cache/params branch mismatch");
  const Shape& in_shape = cache.input_shape;
  const std::size_t n_batch = in_shape[0];
  if (grad_out.shape() != Shape{n_batch, spec.out_channels * params.size(), in_shape[2], in_shape[3]}) {
    throw ShapeMismatch("capm_backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  Tensor<T> grad_f(in_shape);
  for (std::size_t b = 0; b < cache.branches.size(); ++b) {
    const CapmBranchCache<T>& bc = cache.branches[b];
    const std::size_t n = bc.grid.n, per_sample = bc.grid.count(), count = bc.regions.size();
    std::vector<Tensor<T>> grad_regions(count);
    AlignedVector<T> grad_rows;
    grad_rows.reserve(count * spec.filter_size());
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t s = r / per_sample, i = (r % per_sample) / n, j = r % n;
      const std::size_t r0 = bc.grid.row_splits[i], r1 = bc.grid.row_splits[i + 1];
      const std::size_t c0 = bc.grid.col_splits[j], c1 = bc.grid.col_splits[j + 1];
      // Slice this branch's channels out of grad_out for the region.
      Tensor<T> g({1, spec.out_channels, r1 - r0, c1 - c0});
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        const T* plane = grad_out.ptr() + ((s * grad_out.dim(1)) + b * spec.out_channels + c) * in_shape[2] * in_shape[3];
        T* dst = g.ptr() + c * (r1 - r0) * (c1 - c0);
        for (std::size_t y = r0; y < r1; ++y) dst = std::copy(plane + y * in_shape[3] + c0, plane + y * in_shape[3] + c1, dst);
      }
      AdaptiveConvGrads<T> ag = adaptive_conv_backward(bc.regions[r], bc.filters[r], g);
      grad_regions[r] = std::move(ag.region);
      grad_rows.insert(grad_rows.end(), ag.filter.data().begin(), ag.filter.data().end());
    }
    const Tensor<T> g_spp = generator_rows_backward(bc.activations, bc.pre_relu, params[b], spec,
                                                    Tensor<T>::adopt({count, spec.filter_size()}, std::move(grad_rows)),
                                                    grads != nullptr ? &(*grads)[b] : nullptr);
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t s = r / per_sample, i = (r % per_sample) / n, j = r % n;
      const T* row = g_spp.ptr() + r * spec.spp_features();
      const Tensor<T> g_row =
          Tensor<T>::adopt({spec.in_channels, spec.bins, spec.bins}, AlignedVector<T>(row, row + spec.spp_features()));
      add_inplace(grad_regions[r], spp_pool_backward(bc.regions[r], spec.bins, spec.spp_mode, g_row));
      paste(grad_f, s, 0, grad_regions[r], bc.grid.row_splits[i], bc.grid.col_splits[j], true);
    }
  }
  return grad_f;
}

#define PANET_INSTANTIATE(T)                                                                                       \
  template OffsetField<T> offset_field<T>(const Tensor<T>&, const LayerParams<T>&, std::size_t);                   \
  template Tensor<T> offset_field_backward<T>(const Tensor<T>&, const LayerParams<T>&, const Tensor<T>&,           \
                                              LayerParams<T>*, bool);                                              \
  template Tensor<T> deform_conv2d<T>(const Tensor<T>&, const LayerParams<T>&, const OffsetField<T>&,              \
                                      const ConvSpec&);                                                            \
  template DeformGrads<T> deform_conv2d_backward<T>(const Tensor<T>&, const LayerParams<T>&,                       \
                                                    const OffsetField<T>&, const ConvSpec&, const Tensor<T>&,      \
                                                    LayerParams<T>*);                                              \
  template std::vector<Tensor<T>> region_partition<T>(const Tensor<T>&, std::size_t, RegionGrid*);                 \
  template Tensor<T> region_reassemble<T>(const std::vector<Tensor<T>>&, const RegionGrid&);                       \
  template struct GeneratorParams<T>;                                                                              \
  template GeneratorParams<T> make_generator_params<T>(const GeneratorSpec&);                                      \
  template GeneratedFilter<T> weight_generator<T>(const Tensor<T>&, const GeneratorParams<T>&,                     \
                                                  const GeneratorSpec&);                                           \
  template Tensor<T> weight_generator_backward<T>(const Tensor<T>&, const GeneratorParams<T>&,                     \
                                                  const GeneratorSpec&, const Tensor<T>&, GeneratorParams<T>*);    \
  template Tensor<T> filter_to_conv_weight<T>(const Tensor<T>&);                                                   \
  template Tensor<T> conv_weight_to_filter<T>(const Tensor<T>&);                                                   \
  template Tensor<T> adaptive_conv<T>(const Tensor<T>&, const GeneratedFilter<T>&);                                \
  template AdaptiveConvGrads<T> adaptive_conv_backward<T>(const Tensor<T>&, const GeneratedFilter<T>&,             \
                                                          const Tensor<T>&);                                       \
  template Tensor<T> capm_forward<T>(const Tensor<T>&, const std::vector<std::size_t>&,                            \
                                     const std::vector<GeneratorParams<T>>&, const GeneratorSpec&, CapmCache<T>*); \
  template Tensor<T> capm_backward<T>(const CapmCache<T>&, const std::vector<GeneratorParams<T>>&,                 \
                                      const GeneratorSpec&, const Tensor<T>&, std::vector<GeneratorParams<T>>*);

PANET_INSTANTIATE(float)
PANET_INSTANTIATE(double)

#undef PANET_INSTANTIATE

}  // namespace panet
