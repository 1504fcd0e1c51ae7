#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

/// Single-channel image, row-major, values nominally in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double value = 0.0) : height(h), width(w), pixels(h * w, value) {}
  GrayImage(std::size_t h, std::size_t w, std::vector<double> values);

  double& at(std::size_t r, std::size_t c) noexcept { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return pixels[r * width + c]; }
  std::size_t size() const noexcept { return pixels.size(); }
};

/// Accepts C x H x W or 1 x C x H x W with C in {1, 3}; RGB uses BT.601 luma.
GrayImage to_gray(const Tensor<float>& t);

/// Separable Gaussian, truncated at 3 sigma, symmetric borders.
GrayImage gaussian_blur(const GrayImage& img, double sigma);
double mse(const GrayImage& a, const GrayImage& b);

/// Mean SSIM over 'valid' 11x11 Gaussian windows (sigma 1.5), unit dynamic
/// range. Needs both sides >= 11.
double ssim(const GrayImage& a, const GrayImage& b);

struct FsimParams {
  std::size_t scales = 4;
  std::size_t orientations = 4;
  double min_wavelength = 6.0;
  double mult = 2.0;
  double sigma_on_f = 0.55;
  double d_theta_on_sigma = 1.2;
  double noise_k = 2.0;
  double epsilon = 1e-4;
  double t1 = 0.85;
  double t2 = 160.0;  ///< on the 0..255 scale
};

/// Phase congruency map in [0, 1] (log-Gabor bank, noise-compensated).
/// Input on the unit scale.
GrayImage phase_congruency(const GrayImage& img, const FsimParams& params = {});

/// Needs both sides >= 32.
double fsim(const GrayImage& a, const GrayImage& b, const FsimParams& params = {});

struct ScootParams {
  std::size_t levels = 6;
  std::vector<std::size_t> block_sizes{4, 8};
  double stabilizer = 1e-4;
};

/// Block-wise co-occurrence (contrast, energy at offset (1,1)) similarity of
/// quantised images. A Scoot-style score; not numerically comparable with
/// published Scoot values.
double scoot(const GrayImage& a, const GrayImage& b, const ScootParams& params = {});

struct MetricRow {
  std::string filename;
  double ssim = 0;
  double fsim = 0;
  double scoot = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean;  ///< filename "MEAN"
};

/// Scores every image in pred_dir against the same-named image in gt_dir.
/// DataError lists any file present in only one directory.
MetricReport eval_set(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// `filename,ssim,fsim,scoot` rows as percentages with two decimals, then a
/// MEAN row.
std::string report_csv(const MetricReport& report);
std::string report_summary(const MetricReport& report);

}  // namespace panet
