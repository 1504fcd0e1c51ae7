#include "panet/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detail/bilinear.hpp"
#include "panet/error.hpp"

namespace panet {

namespace {

// Tap k (row-major 3x3) plus its learned offset, read at fractional (y, x) of
// the layer's own grid. Offset channels: 2k = dy, 2k + 1 = dx.
SamplePoint displaced_tap(const OffsetField<float>& field, std::size_t k, double y, double x) {
  SamplePoint d{static_cast<double>(k / 3) - 1.0, static_cast<double>(k % 3) - 1.0};
  if (field.data.empty()) return d;
  const auto& t = field.data;
  const int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  const float* plane_y = t.ptr() + (2 * k) * t.dim(2) * t.dim(3);
  const float* plane_x = plane_y + t.dim(2) * t.dim(3);
  d.y += detail::bilinear_value(plane_y, h, w, static_cast<float>(y), static_cast<float>(x));
  d.x += detail::bilinear_value(plane_x, h, w, static_cast<float>(y), static_cast<float>(x));
  return d;
}

void put(Tensor<float>& rgb, long y, long x, float r, float g, float b) {
  const long h = static_cast<long>(rgb.dim(1)), w = static_cast<long>(rgb.dim(2));
  if (y < 0 || y >= h || x < 0 || x >= w) return;
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  const std::size_t i = static_cast<std::size_t>(y * w + x);
  rgb[i] = r;
  rgb[plane + i] = g;
  rgb[2 * plane + i] = b;
}

}  // namespace

std::vector<SamplePoint> ancestral_locations(const FapdCache<float>& cache, std::size_t y, std::size_t x) {
  if (cache.y_dc3.empty()) throw InvalidParam("ancestral_locations: empty decoder cache");
  const std::size_t h = cache.y_dc3.dim(2), w = cache.y_dc3.dim(3);
  if (y >= h || x >= w) {
    throw InvalidParam("ancestral_locations: pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                       ") outside " + std::to_string(h) + "x" + std::to_string(w));
  }
  std::vector<SamplePoint> out;
  out.reserve(729);
  const double py = static_cast<double>(y), px = static_cast<double>(x);
  for (std::size_t k3 = 0; k3 < 9; ++k3) {
    const SamplePoint d3 = displaced_tap(cache.o_dc3, k3, py, px);
    // Full-resolution read position, seen on DC2's quarter-resolution grid.
    const double q3y = py + d3.y, q3x = px + d3.x;
    for (std::size_t k2 = 0; k2 < 9; ++k2) {
      const SamplePoint d2 = displaced_tap(cache.o_dc2, k2, q3y / 4.0, q3x / 4.0);
      const double q2y = q3y / 4.0 + d2.y, q2x = q3x / 4.0 + d2.x;
      for (std::size_t k1 = 0; k1 < 9; ++k1) {
        const SamplePoint d1 = displaced_tap(cache.o_dc1, k1, q2y / 2.0, q2x / 2.0);
        out.push_back({q3y + 4.0 * d2.y + 8.0 * d1.y, q3x + 4.0 * d2.x + 8.0 * d1.x});
      }
    }
  }
  return out;
}

Tensor<float> channel_mean_heatmap(const Tensor<float>& features) {
  if (features.rank() != 4 || features.dim(0) != 1) {
    throw ShapeMismatch("channel_mean_heatmap: expected 1 x C x H x W, got " + shape_str(features.shape()));
  }
  const std::size_t c = features.dim(1), plane = features.dim(2) * features.dim(3);
  Tensor<float> out({1, features.dim(2), features.dim(3)});
  std::vector<double> acc(plane, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) acc[i] += features[ch * plane + i];
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double range = *hi - *lo;
  if (range > 0) {
    for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<float>((acc[i] - *lo) / range);
  }
  return out;
}

Tensor<float> render_locations(const Tensor<float>& image, const std::vector<SamplePoint>& points, std::size_t y,
                               std::size_t x) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) {
    throw ShapeMismatch("render_locations: expected [1,]C,H,W with C in {1,3}, got " + shape_str(image.shape()));
  }
  const std::size_t h = s[1], w = s[2], plane = h * w;
  Tensor<float> rgb({3, h, w});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const std::size_t src = s[0] == 1 ? 0 : ch;
    for (std::size_t i = 0; i < plane; ++i) rgb[ch * plane + i] = 0.5f * std::clamp(image[src * plane + i], 0.0f, 1.0f);
  }
  for (const auto& p : points) put(rgb, std::lround(p.y), std::lround(p.x), 0.0f, 1.0f, 0.0f);
  put(rgb, static_cast<long>(y), static_cast<long>(x), 1.0f, 0.0f, 0.0f);
  return rgb;
}

InspectResult inspect(const Tensor<float>& image, const SynthesisParams<float>& params, const ModelConfig& cfg,
                      std::size_t y, std::size_t x) {
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw ShapeMismatch("inspect: expected a 1 x C x H x W image, got " + shape_str(image.shape()));
  }
  if (y >= image.dim(2) || x >= image.dim(3)) {
    throw InvalidParam("inspect: pixel (" + std::to_string(y) + ", " + std::to_string(x) + ") outside " +
                       std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)));
  }
  PanetCache<float> cache;
  panet_forward(image, params, cfg, &cache);

  InspectResult r;
  r.locations = ancestral_locations(cache.fapd, y, x);
  r.overlay = render_locations(image, r.locations, y, x);
  r.fapd_heatmap = channel_mean_heatmap(cache.fapd_out);
  const std::size_t per_branch = cfg.capm_channels;
  const std::size_t plane = image.dim(2) * image.dim(3);
  for (std::size_t b = 0; b < cfg.branch_grids.size(); ++b) {
    Tensor<float> branch({1, per_branch, image.dim(2), image.dim(3)});
    const float* src = cache.head_in.ptr() + b * per_branch * plane;
    std::copy(src, src + per_branch * plane, branch.ptr());
    r.capm_heatmaps.push_back(channel_mean_heatmap(branch));
  }
  return r;
}

}  // namespace panet
