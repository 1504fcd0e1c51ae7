#include "panet/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <unsupported/Eigen/FFT>

#include "panet/error.hpp"
#include "panet/image_io.hpp"

namespace panet {

namespace {

using Complex = std::complex<double>;

void require_same_dims(const GrayImage& a, const GrayImage& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeMismatch(std::string(what) + ": image dims differ (" + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                        ")");
  }
  if (a.pixels.size() != a.height * a.width || b.pixels.size() != b.height * b.width) {
    throw ShapeMismatch(std::string(what) + ": pixel buffer does not match dims");
  }
}

void require_min_side(const GrayImage& a, std::size_t side, const char* what) {
  if (a.height < side || a.width < side) {
    throw InvalidParam(std::string(what) + ": needs images of at least " + std::to_string(side) + "x" +
                       std::to_string(side) + ", got " + std::to_string(a.height) + "x" + std::to_string(a.width));
  }
}

std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Symmetric border: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
std::size_t reflect_index(long i, long n) {
  const long period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - 1 - i);
}

// 'valid' separable filtering: output (H - 2r) x (W - 2r).
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += k[j] * img[r * w + c + j];
      tmp[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * tmp[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

// Row-then-column 2-D DFT on a row-major buffer.
class Fft2 {
 public:
  Fft2(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_buf_(cols), col_buf_(rows) {}

  void forward(std::vector<Complex>& data) { transform(data, false); }
  void inverse(std::vector<Complex>& data) { transform(data, true); }

 private:
  void transform(std::vector<Complex>& data, bool inverse) {
    std::vector<Complex> out_row(cols_), out_col(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
      std::copy_n(data.begin() + static_cast<long>(r * cols_), cols_, row_buf_.begin());
      if (inverse) {
        fft_.inv(out_row, row_buf_);
      } else {
        fft_.fwd(out_row, row_buf_);
      }
      std::copy(out_row.begin(), out_row.end(), data.begin() + static_cast<long>(r * cols_));
    }
    for (std::size_t c = 0; c < cols_; ++c) {
      for (std::size_t r = 0; r < rows_; ++r) col_buf_[r] = data[r * cols_ + c];
      if (inverse) {
        fft_.inv(out_col, col_buf_);
      } else {
        fft_.fwd(out_col, col_buf_);
      }
      for (std::size_t r = 0; r < rows_; ++r) data[r * cols_ + c] = out_col[r];
    }
  }

  std::size_t rows_, cols_;
  std::vector<Complex> row_buf_, col_buf_;
  Eigen::FFT<double> fft_;
};

// Normalised frequency of DFT bin i, already in unshifted (DC-first) order.
double freq_coord(std::size_t i, std::size_t n) {
  const double di = static_cast<double>(i);
  const double dn = static_cast<double>(n);
  if (n % 2 == 0) return (i < n / 2 ? di : di - dn) / dn;
  return (i <= (n - 1) / 2 ? di : di - dn) / (dn - 1);
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<long>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double hi = *mid;
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// 3x3 Scharr gradient magnitude, zero padding, true convolution.
std::vector<double> scharr_magnitude(const std::vector<double>& img, std::size_t h, std::size_t w) {
  static constexpr double kDx[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
  static constexpr double kDy[3][3] = {{3, 10, 3}, {0, 0, 0}, {-3, -10, -3}};
  std::vector<double> out(h * w, 0.0);
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (long r = 0; r < lh; ++r) {
    for (long c = 0; c < lw; ++c) {
      double gx = 0, gy = 0;
      for (long i = -1; i <= 1; ++i) {
        for (long j = -1; j <= 1; ++j) {
          const long rr = r - i, cc = c - j;
          if (rr < 0 || rr >= lh || cc < 0 || cc >= lw) continue;
          const double v = img[static_cast<std::size_t>(rr * lw + cc)];
          gx += v * kDx[i + 1][j + 1];
          gy += v * kDy[i + 1][j + 1];
        }
      }
      out[static_cast<std::size_t>(r * lw + c)] = std::sqrt(gx * gx + gy * gy) / 16.0;
    }
  }
  return out;
}

// (2xy + c) / (x^2 + y^2 + c); written so that swapping x and y is bit-exact.
double similarity(double x, double y, double c) { return (2.0 * (x * y) + c) / ((x * x + y * y) + c); }

std::vector<std::uint8_t> quantize(const GrayImage& img, std::size_t levels) {
  std::vector<std::uint8_t> q(img.size());
  const double dl = static_cast<double>(levels);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    q[i] = static_cast<std::uint8_t>(std::min(levels - 1, static_cast<std::size_t>(std::floor(v * dl))));
  }
  return q;
}

struct GlcmStats {
  double contrast = 0;
  double energy = 0;
};

GlcmStats block_glcm(const std::vector<std::uint8_t>& q, std::size_t width, std::size_t r0, std::size_t c0,
                     std::size_t k, std::size_t levels, std::vector<double>& counts) {
  std::fill(counts.begin(), counts.end(), 0.0);
  for (std::size_t r = r0; r + 1 < r0 + k; ++r) {
    for (std::size_t c = c0; c + 1 < c0 + k; ++c) {
      counts[q[r * width + c] * levels + q[(r + 1) * width + c + 1]] += 1.0;
    }
  }
  const double total = static_cast<double>((k - 1) * (k - 1));
  const double max_d = static_cast<double>((levels - 1) * (levels - 1));
  GlcmStats s;
  for (std::size_t i = 0; i < levels; ++i) {
    for (std::size_t j = 0; j < levels; ++j) {
      const double p = counts[i * levels + j] / total;
      const double d = static_cast<double>(i) - static_cast<double>(j);
      s.contrast += p * d * d;
      s.energy += p * p;
    }
  }
  s.contrast /= max_d;
  return s;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.emplace(entry.path().filename().string(), entry.path());
  }
  if (ec) throw DataError("cannot list " + dir.string() + ": " + ec.message());
  return out;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

GrayImage::GrayImage(std::size_t h, std::size_t w, std::vector<double> values)
    : height(h), width(w), pixels(std::move(values)) {
  if (pixels.size() != h * w) throw ShapeMismatch("GrayImage: " + std::to_string(pixels.size()) + " values for " +
                                                  std::to_string(h) + "x" + std::to_string(w));
}

GrayImage to_gray(const Tensor<float>& t) {
  Shape s = t.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[0] != 1 && s[0] != 3)) throw ShapeMismatch("to_gray: expected [1,]C,H,W with C in {1,3}, got " + shape_str(t.shape()));
  const std::size_t h = s[1], w = s[2], plane = h * w;
  GrayImage g(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    g.pixels[i] = s[0] == 1 ? static_cast<double>(t[i])
                            : 0.299 * t[i] + 0.587 * t[plane + i] + 0.114 * t[2 * plane + i];
  }
  return g;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw InvalidParam("gaussian_blur: sigma must be positive");
  const auto radius = static_cast<std::size_t>(std::ceil(3 * sigma));
  const auto k = gaussian_kernel(sigma, radius);
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width), r = static_cast<long>(radius);
  GrayImage tmp(img.height, img.width), out(img.height, img.width);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double s = 0;
      for (long j = -r; j <= r; ++j) s += k[static_cast<std::size_t>(j + r)] * img.at(static_cast<std::size_t>(y), reflect_index(x + j, w));
      tmp.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = s;
    }
  }
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double s = 0;
      for (long i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp.at(reflect_index(y + i, h), static_cast<std::size_t>(x));
      out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = s;
    }
  }
  return out;
}

double mse(const GrayImage& a, const GrayImage& b) {
  require_same_dims(a, b, "mse");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    s += d * d;
  }
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

double ssim(const GrayImage& a, const GrayImage& b) {
  require_same_dims(a, b, "ssim");
  require_min_side(a, 11, "ssim");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto k = gaussian_kernel(1.5, 5);
  const std::size_t h = a.height, w = a.width;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = filter_valid(a.pixels, h, w, k);
  const auto mu_b = filter_valid(b.pixels, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  double sum = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma, var_b = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    sum += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) / (((ma * ma + mb * mb) + c1) * ((var_a + var_b) + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

GrayImage phase_congruency(const GrayImage& img, const FsimParams& p) {
  if (p.scales < 1 || p.orientations < 1) throw InvalidParam("phase_congruency: need at least one scale and orientation");
  const std::size_t rows = img.height, cols = img.width, n = rows * cols;
  if (n == 0 || img.pixels.size() != n) throw ShapeMismatch("phase_congruency: empty or inconsistent image");

  std::vector<Complex> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = Complex(255.0 * img.pixels[i], 0.0);
  Fft2 fft(rows, cols);
  fft.forward(spectrum);

  // Frequency-plane geometry, DC at (0, 0).
  std::vector<double> radius(n), sin_t(n), cos_t(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = freq_coord(r, rows);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = freq_coord(c, cols);
      const double theta = std::atan2(-y, x);
      radius[r * cols + c] = std::sqrt(x * x + y * y);
      sin_t[r * cols + c] = std::sin(theta);
      cos_t[r * cols + c] = std::cos(theta);
    }
  }
  radius[0] = 1.0;

  std::vector<std::vector<double>> log_gabor(p.scales, std::vector<double>(n));
  const double log_sigma2 = 2.0 * std::pow(std::log(p.sigma_on_f), 2);
  for (std::size_t s = 0; s < p.scales; ++s) {
    const double fo = 1.0 / (p.min_wavelength * std::pow(p.mult, static_cast<double>(s)));
    for (std::size_t i = 0; i < n; ++i) {
      const double lp = 1.0 / (1.0 + std::pow(radius[i] / 0.45, 2 * 15));
      const double l = std::log(radius[i] / fo);
      log_gabor[s][i] = std::exp(-(l * l) / log_sigma2) * lp;
    }
    log_gabor[s][0] = 0.0;
  }

  const double theta_sigma = std::numbers::pi / static_cast<double>(p.orientations) / p.d_theta_on_sigma;
  std::vector<double> energy_all(n, 0.0), an_all(n, 0.0);
  std::vector<double> spread(n), filter(n);
  std::vector<std::vector<Complex>> eo(p.scales);
  std::vector<std::vector<double>> ifft_filter(p.scales, std::vector<double>(n));
  std::vector<Complex> work(n);

  for (std::size_t o = 0; o < p.orientations; ++o) {
    const double angle = static_cast<double>(o) * std::numbers::pi / static_cast<double>(p.orientations);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = sin_t[i] * ca - cos_t[i] * sa;
      const double dc = cos_t[i] * ca + sin_t[i] * sa;
      const double dtheta = std::abs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2 * theta_sigma * theta_sigma));
    }

    std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
    double em_n = 0;
    for (std::size_t s = 0; s < p.scales; ++s) {
      for (std::size_t i = 0; i < n; ++i) filter[i] = log_gabor[s][i] * spread[i];
      if (s == 0) {
        for (double f : filter) em_n += f * f;
      }
      for (std::size_t i = 0; i < n; ++i) work[i] = Complex(filter[i], 0.0);
      fft.inverse(work);
      const double scale = std::sqrt(static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) ifft_filter[s][i] = work[i].real() * scale;

      eo[s].resize(n);
      for (std::size_t i = 0; i < n; ++i) eo[s][i] = spectrum[i] * filter[i];
      fft.inverse(eo[s]);
      for (std::size_t i = 0; i < n; ++i) {
        sum_an[i] += std::abs(eo[s][i]);
        sum_e[i] += eo[s][i].real();
        sum_o[i] += eo[s][i].imag();
      }
    }

    std::vector<double> energy(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x_energy = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + p.epsilon;
      const double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
      for (std::size_t s = 0; s < p.scales; ++s) {
        const double e = eo[s][i].real(), od = eo[s][i].imag();
        energy[i] += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
      }
    }

    // Noise threshold from the smallest-scale response (Rayleigh model).
    std::vector<double> e2(n);
    for (std::size_t i = 0; i < n; ++i) e2[i] = std::norm(eo[0][i]);
    const double mean_e2n = -median(std::move(e2)) / std::log(0.5);
    const double noise_power = em_n > 0 ? mean_e2n / em_n : 0.0;
    double sum_an2 = 0, sum_aiaj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < p.scales; ++s) {
        sum_an2 += ifft_filter[s][i] * ifft_filter[s][i];
        for (std::size_t t = s + 1; t < p.scales; ++t) sum_aiaj += ifft_filter[s][i] * ifft_filter[t][i];
      }
    }
    const double noise_energy2 = 2 * noise_power * sum_an2 + 4 * noise_power * sum_aiaj;
    const double tau = std::sqrt(std::max(0.0, noise_energy2 / 2));
    const double noise_mean = tau * std::sqrt(std::numbers::pi / 2);
    const double noise_sigma = std::sqrt((2 - std::numbers::pi / 2) * tau * tau);
    const double threshold = (noise_mean + p.noise_k * noise_sigma) / 1.7;

    for (std::size_t i = 0; i < n; ++i) {
      energy_all[i] += std::max(energy[i] - threshold, 0.0);
      an_all[i] += sum_an[i];
    }
  }

  GrayImage pc(rows, cols);
  for (std::size_t i = 0; i < n; ++i) pc.pixels[i] = an_all[i] > 0 ? energy_all[i] / an_all[i] : 0.0;
  return pc;
}

double fsim(const GrayImage& a, const GrayImage& b, const FsimParams& params) {
  require_same_dims(a, b, "fsim");
  require_min_side(a, 32, "fsim");
  const GrayImage pc_a = phase_congruency(a, params);
  const GrayImage pc_b = phase_congruency(b, params);
  std::vector<double> a255(a.size()), b255(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a255[i] = 255.0 * a.pixels[i];
    b255[i] = 255.0 * b.pixels[i];
  }
  const auto g_a = scharr_magnitude(a255, a.height, a.width);
  const auto g_b = scharr_magnitude(b255, b.height, b.width);

  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double pcm = std::max(pc_a.pixels[i], pc_b.pixels[i]);
    const double s = similarity(pc_a.pixels[i], pc_b.pixels[i], params.t1) * similarity(g_a[i], g_b[i], params.t2);
    num += s * pcm;
    den += pcm;
  }
  if (!(den > 1e-12)) return a.pixels == b.pixels ? 1.0 : 0.0;
  return num / den;
}

double scoot(const GrayImage& a, const GrayImage& b, const ScootParams& params) {
  require_same_dims(a, b, "scoot");
  if (params.levels < 2 || params.levels > 256) throw InvalidParam("scoot: levels must be in [2, 256]");
  if (params.block_sizes.empty()) throw InvalidParam("scoot: no block sizes");
  const auto qa = quantize(a, params.levels);
  const auto qb = quantize(b, params.levels);
  std::vector<double> counts(params.levels * params.levels);
  double total = 0;
  for (std::size_t k : params.block_sizes) {
    if (k < 2) throw InvalidParam("scoot: block size must be >= 2");
    const std::size_t nr = a.height / k, nc = a.width / k;
    if (nr == 0 || nc == 0) {
      throw InvalidParam("scoot: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " smaller than block size " + std::to_string(k));
    }
    double scale_sum = 0;
    for (std::size_t br = 0; br < nr; ++br) {
      for (std::size_t bc = 0; bc < nc; ++bc) {
        const auto sa = block_glcm(qa, a.width, br * k, bc * k, k, params.levels, counts);
        const auto sb = block_glcm(qb, b.width, br * k, bc * k, k, params.levels, counts);
        scale_sum += 0.5 * (similarity(sa.contrast, sb.contrast, params.stabilizer) +
                            similarity(sa.energy, sb.energy, params.stabilizer));
      }
    }
    total += scale_sum / static_cast<double>(nr * nc);
  }
  return total / static_cast<double>(params.block_sizes.size());
}

MetricReport eval_set(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  const auto pred = list_images(pred_dir);
  const auto gt = list_images(gt_dir);
  std::vector<std::string> unmatched;
  for (const auto& [name, path] : pred) {
    if (!gt.count(name)) unmatched.push_back(name + " (prediction only)");
  }
  for (const auto& [name, path] : gt) {
    if (!pred.count(name)) unmatched.push_back(name + " (ground truth only)");
  }
  if (!unmatched.empty()) {
    std::string msg = "eval_set: unmatched files:";
    for (const auto& u : unmatched) msg += " " + u;
    throw DataError(msg);
  }
  if (pred.empty()) throw DataError("eval_set: no images in " + pred_dir.string() + " and " + gt_dir.string());

  MetricReport report;
  for (const auto& [name, path] : pred) {
    const GrayImage p = to_gray(load_image(path));
    const GrayImage g = to_gray(load_image(gt.at(name)));
    if (p.height != g.height || p.width != g.width) {
      throw DataError("eval_set: " + name + " is " + std::to_string(p.height) + "x" + std::to_string(p.width) +
                      " in predictions but " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                      " in ground truth");
    }
    report.rows.push_back({name, ssim(p, g), fsim(p, g), scoot(p, g)});
  }
  report.mean.filename = "MEAN";
  for (const auto& r : report.rows) {
    report.mean.ssim += r.ssim;
    report.mean.fsim += r.fsim;
    report.mean.scoot += r.scoot;
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean.ssim /= n;
  report.mean.fsim /= n;
  report.mean.scoot /= n;
  return report;
}

std::string report_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "filename,ssim,fsim,scoot\n";
  for (const auto& r : report.rows) os << r.filename << ',' << pct(r.ssim) << ',' << pct(r.fsim) << ',' << pct(r.scoot) << '\n';
  os << "MEAN," << pct(report.mean.ssim) << ',' << pct(report.mean.fsim) << ',' << pct(report.mean.scoot) << '\n';
  return os.str();
}

std::string report_summary(const MetricReport& report) {
  std::ostringstream os;
  os << report.rows.size() << " image" << (report.rows.size() == 1 ? "" : "s") << ": Scoot " << pct(report.mean.scoot)
     << "  FSIM " << pct(report.mean.fsim) << "  SSIM " << pct(report.mean.ssim) << '\n';
  return os.str();
}

}  // namespace panet
