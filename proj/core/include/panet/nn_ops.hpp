#pragma once

#include <cstddef>
#include <string_view>

#include "panet/tensor.hpp"

namespace panet {

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 1, pad_w = 1;

  /// 3x3, stride 1, pad 1: output spatial size equals input.
  static ConvSpec same3x3(std::size_t in, std::size_t out) { return {in, out, 3, 3, 1, 1, 1, 1}; }
  static ConvSpec pointwise(std::size_t in, std::size_t out) { return {in, out, 1, 1, 1, 1, 0, 0}; }
  /// Kernel 4, stride 2, pad 1: the transposed form doubles H and W exactly.
  static ConvSpec upsample2x(std::size_t in, std::size_t out) { return {in, out, 4, 4, 2, 2, 1, 1}; }

  void validate() const;
  /// Output size of a forward convolution; throws InvalidParam if empty.
  std::size_t out_h(std::size_t in_h) const;
  std::size_t out_w(std::size_t in_w) const;
  /// Output size of the transposed convolution.
  std::size_t transposed_out_h(std::size_t in_h) const;
  std::size_t transposed_out_w(std::size_t in_w) const;
};

/// Learnable weights of one layer. Convolution weights are
/// out_ch x in_ch x kh x kw; transposed convolutions store in_ch x out_ch x kh x kw
/// (the weight of the adjoint convolution); grouped FC stores
/// groups x (out/groups) x (in/groups). `bias` may be empty.
template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t count() const noexcept { return weight.numel() + bias.numel(); }
  bool empty() const noexcept { return weight.empty() && bias.empty(); }
  LayerParams zeros_like() const { return {Tensor<T>(weight.shape()), Tensor<T>(bias.shape())}; }
};

enum class PoolMode { kMax, kMean };

PoolMode parse_pool_mode(std::string_view s);
std::string_view to_string(PoolMode mode);

// ---------------------------------------------------------------------------
// Convolution. Cross-correlation convention, N x C x H x W layout.
// Every *_backward accumulates parameter gradients into `grads` (when non-null)
// and returns the input gradient (empty when `need_input_grad` is false).

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec);

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec,
                          const Tensor<T>& grad_out, LayerParams<T>* grads,
                          bool need_input_grad = true);

/// Adjoint of conv2d with respect to its input: maps an output-space tensor
/// back to an input of spatial size in_h x in_w.
template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& grad_out, const Tensor<T>& weight,
                               const ConvSpec& spec, std::size_t in_h, std::size_t in_w);

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& spec);

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const LayerParams<T>& p,
                                    const ConvSpec& spec, const Tensor<T>& grad_out,
                                    LayerParams<T>* grads, bool need_input_grad = true);

// ---------------------------------------------------------------------------
// 2x2 / stride-2 pooling. H and W must be even.

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);
/// Routes each gradient to the window argmax; ties go to the first element in
/// row-major window order.
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x);
template <typename T>
Tensor<T> avgpool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> pool2(const Tensor<T>& x, PoolMode mode);
template <typename T>
Tensor<T> pool2_backward(const Tensor<T>& x, const Tensor<T>& grad_out, PoolMode mode);

// ---------------------------------------------------------------------------
// Bilinear sampling with zero padding.

template <typename T>
struct BilinearGrad {
  T value;
  T dy;  ///< d value / d y
  T dx;  ///< d value / d x
};

/// Samples channel `channel` of a C x H x W (or 1 x C x H x W) tensor at the
/// real-valued location (y, x). Each of the four neighbours contributes with
/// weight max(0, 1-|dy|) * max(0, 1-|dx|); neighbours outside the image read 0.
template <typename T>
T bilinear_sample(const Tensor<T>& f, std::size_t channel, T y, T x);

/// Value together with its analytic derivative with respect to (y, x).
template <typename T>
BilinearGrad<T> bilinear_sample_grad(const Tensor<T>& f, std::size_t channel, T y, T x);

/// Accumulates g * d value / d f into grad_f (same shape as f).
template <typename T>
void bilinear_sample_backward(Tensor<T>& grad_f, std::size_t channel, T y, T x, T g);

// ---------------------------------------------------------------------------
// Spatial pyramid pooling to a fixed bins x bins grid.

/// Half-open row (or column) range covered by bin `i` of `bins` over `extent`:
/// [floor(i*extent/bins), ceil((i+1)*extent/bins)). Never empty.
std::pair<std::size_t, std::size_t> spp_bin_range(std::size_t i, std::size_t extent,
                                                  std::size_t bins) noexcept;

/// region: C x h x w (or 1 x C x h x w) -> C x bins x bins.
template <typename T>
Tensor<T> spp_pool(const Tensor<T>& region, std::size_t bins = 32, PoolMode mode = PoolMode::kMax);

template <typename T>
Tensor<T> spp_pool_backward(const Tensor<T>& region, std::size_t bins, PoolMode mode,
                            const Tensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Grouped fully-connected layer with block-diagonal weights.

std::size_t grouped_fc_weight_count(std::size_t in, std::size_t out, std::size_t groups);

/// x: N x in (a rank-1 tensor is treated as N = 1). Output N x out.
template <typename T>
Tensor<T> grouped_fc(const Tensor<T>& x, const LayerParams<T>& p, std::size_t groups);

template <typename T>
Tensor<T> grouped_fc_backward(const Tensor<T>& x, const LayerParams<T>& p, std::size_t groups,
                              const Tensor<T>& grad_out, LayerParams<T>* grads,
                              bool need_input_grad = true);

// ---------------------------------------------------------------------------
// Per-sample, per-channel normalization over H x W without affine parameters.

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));
template <typename T>
Tensor<T> instance_norm_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T eps = T(1e-5));

}  // namespace panet
