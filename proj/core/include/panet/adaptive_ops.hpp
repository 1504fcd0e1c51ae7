#pragma once

#include <cstddef>
#include <vector>

#include "panet/nn_ops.hpp"
#include "panet/tensor.hpp"

namespace panet {

/// Per-pixel sampling displacements for a kh x kw deformable kernel:
/// N x (2*kh*kw) x H x W. Channel 2k holds dy and 2k+1 holds dx for kernel
/// tap k, taps enumerated row-major over the kernel grid.
template <typename T>
struct OffsetField {
  Tensor<T> data;

  std::size_t taps() const { return data.dim(1) / 2; }
};

/// Computes the offset field with a standard 3x3 / stride 1 / pad 1
/// convolution. `p` must produce 2*kh*kw channels for the deformable kernel
/// it will drive (18 for 3x3).
template <typename T>
OffsetField<T> offset_field(const Tensor<T>& f, const LayerParams<T>& p, std::size_t kernel_taps = 9);

template <typename T>
Tensor<T> offset_field_backward(const Tensor<T>& f, const LayerParams<T>& p, const Tensor<T>& grad_offsets,
                                LayerParams<T>* grads, bool need_input_grad = true);

template <typename T>
struct DeformGrads {
  Tensor<T> input;
  Tensor<T> offset;
};

/// out(p) = sum_k w_k * f(p + g_k + o_p(g_k)) + b, with `spec` a stride-1
/// convolution whose padding keeps the spatial size (odd kernel, pad (k-1)/2).
/// Fractional reads use zero-padded bilinear interpolation.
template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& f, const LayerParams<T>& p, const OffsetField<T>& offsets,
                        const ConvSpec& spec);

/// Gradients for the input feature and the offsets; parameter gradients are
/// accumulated into `grads` when non-null.
template <typename T>
DeformGrads<T> deform_conv2d_backward(const Tensor<T>& f, const LayerParams<T>& p, const OffsetField<T>& offsets,
                                      const ConvSpec& spec, const Tensor<T>& grad_out, LayerParams<T>* grads);

// ---------------------------------------------------------------------------

/// n x n tiling of an H x W map. Split i along rows is floor(i*H/n).
struct RegionGrid {
  std::size_t n = 0;
  std::vector<std::size_t> row_splits;  ///< n + 1 entries, 0 .. H
  std::vector<std::size_t> col_splits;  ///< n + 1 entries, 0 .. W

  static RegionGrid make(std::size_t height, std::size_t width, std::size_t n);
  std::size_t count() const noexcept { return n * n; }
  std::size_t height() const noexcept { return row_splits.back(); }
  std::size_t width() const noexcept { return col_splits.back(); }
};

/// Row-major list of the n*n regions of an N x C x H x W feature.
template <typename T>
std::vector<Tensor<T>> region_partition(const Tensor<T>& f, std::size_t n, RegionGrid* grid_out = nullptr);

template <typename T>
Tensor<T> region_reassemble(const std::vector<Tensor<T>>& regions, const RegionGrid& grid);

// ---------------------------------------------------------------------------

/// Shape of one adaptive-convolution branch: SPP to bins x bins, then grouped
/// FC layers hidden[0] -> hidden[1] -> in*k*k*out with ReLU in between.
struct GeneratorSpec {
  std::size_t in_channels = 64;
  std::size_t out_channels = 32;
  std::size_t kernel = 3;
  std::size_t bins = 32;
  PoolMode spp_mode = PoolMode::kMax;
  std::vector<std::size_t> hidden{256, 512};
  std::vector<std::size_t> groups{32, 16, 16};

  std::size_t spp_features() const noexcept { return in_channels * bins * bins; }
  std::size_t filter_size() const noexcept { return in_channels * kernel * kernel * out_channels; }
  void validate() const;
};

template <typename T>
struct GeneratorParams {
  std::vector<LayerParams<T>> fc;  ///< hidden.size() + 1 grouped FC layers

  GeneratorParams zeros_like() const;
  std::size_t count() const noexcept;
};

/// Allocates zero-filled generator parameters with the right shapes.
template <typename T>
GeneratorParams<T> make_generator_params(const GeneratorSpec& spec);

/// A dynamically generated kernel, in_ch x kh x kw x out_ch, no bias.
template <typename T>
struct GeneratedFilter {
  Tensor<T> weights;
};

/// SPP -> grouped FC -> ReLU -> grouped FC -> ReLU -> grouped FC -> reshape.
/// `region` is C x h x w or 1 x C x h x w.
template <typename T>
GeneratedFilter<T> weight_generator(const Tensor<T>& region, const GeneratorParams<T>& params,
                                    const GeneratorSpec& spec);

/// Returns d loss / d region; accumulates generator parameter gradients.
template <typename T>
Tensor<T> weight_generator_backward(const Tensor<T>& region, const GeneratorParams<T>& params,
                                    const GeneratorSpec& spec, const Tensor<T>& grad_filter,
                                    GeneratorParams<T>* grads);

template <typename T>
struct AdaptiveConvGrads {
  Tensor<T> region;
  Tensor<T> filter;
};

/// 3x3 / stride 1 / pad 1 convolution of an N x C x h x w region with a
/// generated filter; no bias.
template <typename T>
Tensor<T> adaptive_conv(const Tensor<T>& region, const GeneratedFilter<T>& w);

template <typename T>
AdaptiveConvGrads<T> adaptive_conv_backward(const Tensor<T>& region, const GeneratedFilter<T>& w,
                                            const Tensor<T>& grad_out);

/// GeneratedFilter (in x kh x kw x out) -> ordinary conv weight (out x in x kh x kw).
template <typename T>
Tensor<T> filter_to_conv_weight(const Tensor<T>& filter);
template <typename T>
Tensor<T> conv_weight_to_filter(const Tensor<T>& weight);

// ---------------------------------------------------------------------------

/// Per-branch intermediates retained by capm_forward for the backward pass.
template <typename T>
struct CapmBranchCache {
  RegionGrid grid;
  std::vector<Tensor<T>> regions;      ///< N*n*n regions, sample-major
  std::vector<Tensor<T>> activations;  ///< FC inputs, one row per region
  std::vector<Tensor<T>> pre_relu;     ///< hidden-layer pre-activations
  std::vector<GeneratedFilter<T>> filters;
};

template <typename T>
struct CapmCache {
  std::vector<CapmBranchCache<T>> branches;
  Shape input_shape;
};

/// Multi-scale region branches; one generator parameter set per branch, shared
/// by all regions of that branch. Output N x (out_channels * |grids|) x H x W.
template <typename T>
Tensor<T> capm_forward(const Tensor<T>& f, const std::vector<std::size_t>& grids,
                       const std::vector<GeneratorParams<T>>& params, const GeneratorSpec& spec,
                       CapmCache<T>* cache = nullptr);

template <typename T>
Tensor<T> capm_backward(const CapmCache<T>& cache, const std::vector<GeneratorParams<T>>& params,
                        const GeneratorSpec& spec, const Tensor<T>& grad_out,
                        std::vector<GeneratorParams<T>>* grads);

}  // namespace panet
