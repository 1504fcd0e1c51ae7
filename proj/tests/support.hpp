#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "panet/nn_ops.hpp"
#include "panet/tensor.hpp"

namespace panet::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("panet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Textbook six-loop cross-correlation with zero padding.
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const LayerParams<T>& p, const ConvSpec& s) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = (h + 2 * s.pad_h - s.kernel_h) / s.stride_h + 1;
  const std::size_t ow = (w + 2 * s.pad_w - s.kernel_w) / s.stride_w + 1;
  Tensor<T> y({n, s.out_channels, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = p.bias.empty() ? 0.0 : double(p.bias[o]);
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const long yy = long(i * s.stride_h + ki) - long(s.pad_h);
                const long xx = long(j * s.stride_w + kj) - long(s.pad_w);
                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) continue;
                acc += double(p.weight.at(o, ci, ki, kj)) * double(x.at(b, ci, std::size_t(yy), std::size_t(xx)));
              }
          y.at(b, o, i, j) = T(acc);
        }
  return y;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

}  // namespace panet::test
