#pragma once

#include <cstddef>
#include <vector>

#include "panet/model.hpp"

namespace panet {

struct SamplePoint {
  double y = 0;
  double x = 0;
};

/// Input-resolution locations that the three decoder DC layers read for
/// output pixel (y, x): 9 taps per layer, 9^3 = 729 in total. Offsets at
/// fractional positions are interpolated bilinearly. Layers without an offset
/// field (standard variant) contribute their regular 3x3 stencil.
///
/// Ordering is DC3 tap major, then DC2, then DC1; taps are row-major. A point
/// equals p + d3 + 4 d2 + 8 d1 where d is tap + offset at each layer's scale.
std::vector<SamplePoint> ancestral_locations(const FapdCache<float>& cache, std::size_t y, std::size_t x);

/// Mean over channels of a 1 x C x H x W map, min-max scaled to [0, 1]
/// (all zeros if constant). Returns 1 x H x W.
Tensor<float> channel_mean_heatmap(const Tensor<float>& features);

/// Dimmed copy of a C x H x W (or 1 x C x H x W) image as RGB with `points`
/// drawn green and the query pixel red. Points outside the frame are skipped.
Tensor<float> render_locations(const Tensor<float>& image, const std::vector<SamplePoint>& points, std::size_t y,
                               std::size_t x);

struct InspectResult {
  std::vector<SamplePoint> locations;
  Tensor<float> overlay;                    ///< 3 x H x W
  Tensor<float> fapd_heatmap;               ///< 1 x H x W
  std::vector<Tensor<float>> capm_heatmaps;  ///< one per branch, 1 x H x W
};

/// Runs the generator on `image` (1 x C x H x W, already padded) and collects
/// everything for pixel (y, x). InvalidParam if the pixel is outside the image.
InspectResult inspect(const Tensor<float>& image, const SynthesisParams<float>& params, const ModelConfig& cfg,
                      std::size_t y, std::size_t x);

}  // namespace panet
