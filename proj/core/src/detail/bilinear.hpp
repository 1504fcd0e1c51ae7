#pragma once

#include <cmath>

namespace panet::detail {

// Plane-level bilinear helpers shared by bilinear_sample and the deformable
// im2col kernels. Neighbours outside [0,H) x [0,W) read as zero.

template <typename T>
struct Corners {
  int y0, x0;
  T ly, lx;  // fractional parts
  bool in00, in01, in10, in11;
};

template <typename T>
inline bool bilinear_corners(int height, int width, T y, T x, Corners<T>& c) {
  if (y <= T(-1) || y >= T(height) || x <= T(-1) || x >= T(width)) return false;
  c.y0 = static_cast<int>(std::floor(y));
  c.x0 = static_cast<int>(std::floor(x));
  c.ly = y - T(c.y0);
  c.lx = x - T(c.x0);
  const bool y0_ok = c.y0 >= 0, y1_ok = c.y0 + 1 < height;
  const bool x0_ok = c.x0 >= 0, x1_ok = c.x0 + 1 < width;
  c.in00 = y0_ok && x0_ok;
  c.in01 = y0_ok && x1_ok;
  c.in10 = y1_ok && x0_ok;
  c.in11 = y1_ok && x1_ok;
  return true;
}

template <typename T>
inline T bilinear_value(const T* plane, int height, int width, T y, T x) {
  Corners<T> c;
  if (!bilinear_corners(height, width, y, x, c)) return T(0);
  const T hy = T(1) - c.ly, hx = T(1) - c.lx;
  const T* row0 = plane + static_cast<long>(c.y0) * width;
  const T* row1 = row0 + width;
  T v = 0;
  if (c.in00) v += hy * hx * row0[c.x0];
  if (c.in01) v += hy * c.lx * row0[c.x0 + 1];
  if (c.in10) v += c.ly * hx * row1[c.x0];
  if (c.in11) v += c.ly * c.lx * row1[c.x0 + 1];
  return v;
}

/// Value plus derivatives with respect to y and x. Uses the floor-side
/// derivative at integer coordinates.
template <typename T>
inline T bilinear_value_grad(const T* plane, int height, int width, T y, T x, T& dy, T& dx) {
  dy = dx = T(0);
  Corners<T> c;
  if (!bilinear_corners(height, width, y, x, c)) return T(0);
  const T hy = T(1) - c.ly, hx = T(1) - c.lx;
  const T* row0 = plane + static_cast<long>(c.y0) * width;
  const T* row1 = row0 + width;
  const T v00 = c.in00 ? row0[c.x0] : T(0);
  const T v01 = c.in01 ? row0[c.x0 + 1] : T(0);
  const T v10 = c.in10 ? row1[c.x0] : T(0);
  const T v11 = c.in11 ? row1[c.x0 + 1] : T(0);
  dy = hx * (v10 - v00) + c.lx * (v11 - v01);
  dx = hy * (v01 - v00) + c.ly * (v11 - v10);
  return hy * hx * v00 + hy * c.lx * v01 + c.ly * hx * v10 + c.ly * c.lx * v11;
}

/// grad_plane += g * d(value)/d(plane)
template <typename T>
inline void bilinear_scatter(T* grad_plane, int height, int width, T y, T x, T g) {
  Corners<T> c;
  if (!bilinear_corners(height, width, y, x, c)) return;
  const T hy = T(1) - c.ly, hx = T(1) - c.lx;
  T* row0 = grad_plane + static_cast<long>(c.y0) * width;
  T* row1 = row0 + width;
  if (c.in00) row0[c.x0] += g * hy * hx;
  if (c.in01) row0[c.x0 + 1] += g * hy * c.lx;
  if (c.in10) row1[c.x0] += g * c.ly * hx;
  if (c.in11) row1[c.x0 + 1] += g * c.ly * c.lx;
}

}  // namespace panet::detail
