#include "panet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "panet/image_io.hpp"
#include "panet/random.hpp"

namespace panet {

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(s) + "' (expected train|test)");
}

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::vector<ManifestEntry> DatasetManifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  auto fail = [&](const std::string& msg) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (line_no == 1) {
      if (fields != std::vector<std::string>{"photo", "sketch", "split"}) fail("expected header 'photo,sketch,split'");
      continue;
    }
    if (fields.size() != 3) fail("expected 3 fields, got " + std::to_string(fields.size()));
    ManifestEntry e{fields[0], fields[1], parse_split(fields[2])};
    if (!seen.insert(e.photo.lexically_normal().string()).second) fail("duplicate photo path '" + fields[0] + "'");
    for (const auto* p : {&e.photo, &e.sketch}) {
      if (!std::filesystem::exists(m.resolve(*p))) fail("file not found: " + m.resolve(*p).string());
    }
    m.entries.push_back(std::move(e));
  }
  if (line_no == 0) throw DataError(path.string() + ": empty manifest");
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "photo,sketch,split\n";
  for (const auto& e : manifest.entries) {
    os << e.photo.generic_string() << ',' << e.sketch.generic_string() << ',' << to_string(e.split) << '\n';
  }
  const std::string s = os.str();
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

namespace {

using Rgb = std::array<float, 3>;

struct Rect {
  float x0, y0, x1, y1;
  Rgb color;
};

struct Scene {
  float cx, cy, cos_t, sin_t;
  float a, b;  // face semi-axes
  Rgb skin, bg0, bg1;
  float bg_dir_x, bg_dir_y;
  std::vector<Rect> clutter;
  float stroke;
};

Scene make_scene(std::uint64_t seed, std::size_t index, std::size_t size) {
  const CounterRng rng(seed, 0x5ce11e + index);
  std::uint64_t c = 0;
  auto u = [&](double lo, double hi) { return static_cast<float>(rng.uniform(c++, lo, hi)); };
  const float s = static_cast<float>(size);
  Scene sc;
  sc.cx = s / 2 + u(-0.1, 0.1) * s;
  sc.cy = s / 2 + u(-0.1, 0.1) * s;
  const float theta = u(-20.0, 20.0) * std::numbers::pi_v<float> / 180.0f;
  sc.cos_t = std::cos(theta);
  sc.sin_t = std::sin(theta);
  sc.a = s * u(0.22, 0.27);
  sc.b = sc.a * u(1.15, 1.3);
  const float tone = u(0.6, 0.9);
  sc.skin = {tone, tone * 0.8f, tone * 0.68f};
  sc.bg0 = {u(0.15, 0.9), u(0.15, 0.9), u(0.15, 0.9)};
  sc.bg1 = {u(0.15, 0.9), u(0.15, 0.9), u(0.15, 0.9)};
  const float phi = u(0.0, 2.0 * std::numbers::pi);
  sc.bg_dir_x = std::cos(phi);
  sc.bg_dir_y = std::sin(phi);
  const std::size_t n_clutter = 3 + rng.below(c++, 4);
  for (std::size_t i = 0; i < n_clutter; ++i) {
    const float w = u(0.08, 0.3) * s, h = u(0.08, 0.3) * s;
    const float x = u(0.0, 1.0) * s - w / 2, y = u(0.0, 1.0) * s - h / 2;
    sc.clutter.push_back({x, y, x + w, y + h, {u(0.1, 1.0), u(0.1, 1.0), u(0.1, 1.0)}});
  }
  sc.stroke = std::max(1.25f, s / 48.0f);
  return sc;
}

// Approximate signed distance to the ellipse (u/a)^2 + (v/b)^2 = 1.
float ellipse_distance(float u, float v, float a, float b) {
  const float f = (u * u) / (a * a) + (v * v) / (b * b) - 1.0f;
  const float gu = 2.0f * u / (a * a), gv = 2.0f * v / (b * b);
  const float g = std::sqrt(gu * gu + gv * gv);
  return g > 1e-6f ? f / g : -std::min(a, b);
}

struct Sample {
  bool face, eye, stroke, mouth;
};

Sample classify(const Scene& sc, float px, float py) {
  const float dx = px - sc.cx, dy = py - sc.cy;
  const float u = sc.cos_t * dx + sc.sin_t * dy;
  const float v = -sc.sin_t * dx + sc.cos_t * dy;
  const float half = sc.stroke / 2;
  Sample s{};
  const float d_face = ellipse_distance(u, v, sc.a, sc.b);
  s.face = d_face <= 0;
  bool stroke = std::abs(d_face) <= half;

  const float ea = 0.2f * sc.a, eb = 0.1f * sc.b, ey = -0.15f * sc.b;
  for (float ex : {-0.4f * sc.a, 0.4f * sc.a}) {
    const float d_eye = ellipse_distance(u - ex, v - ey, ea, eb);
    s.eye = s.eye || d_eye <= 0;
    stroke = stroke || std::abs(d_eye) <= half;
  }

  const float mw = 0.4f * sc.a;
  if (std::abs(u) <= mw) {
    const float t = u / mw;
    const float curve = 0.5f * sc.b - 0.15f * sc.b * t * t;
    const float slope = -0.3f * sc.b * t / mw;
    const float d_mouth = std::abs(v - curve) / std::sqrt(1.0f + slope * slope);
    s.mouth = d_mouth <= 0.75f * sc.stroke;
    stroke = stroke || d_mouth <= half;
  }
  s.stroke = stroke;
  return s;
}

Rgb photo_color(const Scene& sc, const Sample& s, float px, float py, float size) {
  if (s.face) {
    if (s.eye) return {0.08f, 0.07f, 0.07f};
    if (s.mouth) return {0.55f, 0.12f, 0.15f};
    // Soft radial shading keeps the face from being a flat disc.
    const float r = std::hypot(px - sc.cx, py - sc.cy) / (1.5f * sc.b);
    const float shade = 1.0f - 0.25f * r * r;
    return {sc.skin[0] * shade, sc.skin[1] * shade, sc.skin[2] * shade};
  }
  Rgb col;
  for (auto it = sc.clutter.rbegin(); it != sc.clutter.rend(); ++it) {
    if (px >= it->x0 && px < it->x1 && py >= it->y0 && py < it->y1) return it->color;
  }
  const float t = std::clamp(0.5f + ((px - size / 2) * sc.bg_dir_x + (py - size / 2) * sc.bg_dir_y) / size, 0.0f, 1.0f);
  for (int c = 0; c < 3; ++c) col[c] = sc.bg0[c] + t * (sc.bg1[c] - sc.bg0[c]);
  return col;
}

}  // namespace

std::pair<Tensor<float>, Tensor<float>> synth_pair(std::uint64_t seed, std::size_t index, std::size_t size) {
  if (size == 0 || size % 8 != 0) {
    throw InvalidParam("synth_fixture: size must be a positive multiple of 8, got " + std::to_string(size));
  }
  const Scene sc = make_scene(seed, index, size);
  constexpr int kSuper = 4;
  Tensor<float> photo({3, size, size});
  Tensor<float> sketch({1, size, size});
  const std::size_t plane = size * size;
  const float fsize = static_cast<float>(size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      Rgb acc{0, 0, 0};
      float ink = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const float px = x + (sx + 0.5f) / kSuper, py = y + (sy + 0.5f) / kSuper;
          const Sample s = classify(sc, px, py);
          const Rgb col = photo_color(sc, s, px, py, fsize);
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
          ink += s.stroke ? 1.0f : 0.0f;
        }
      }
      constexpr float kInv = 1.0f / (kSuper * kSuper);
      for (int c = 0; c < 3; ++c) photo[c * plane + y * size + x] = acc[c] * kInv;
      sketch[y * size + x] = ink * kInv;
    }
  }
  return {std::move(photo), std::move(sketch)};
}

DatasetManifest synth_fixture(std::uint64_t seed, std::size_t count, std::size_t size,
                              const std::filesystem::path& out_dir) {
  if (count == 0) throw InvalidParam("synth_fixture: count must be >= 1");
  if (size == 0 || size % 8 != 0) {
    throw InvalidParam("synth_fixture: size must be a positive multiple of 8, got " + std::to_string(size));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  DatasetManifest m;
  m.root = out_dir;
  for (std::size_t i = 0; i < count; ++i) {
    char photo_name[32], sketch_name[32];
    std::snprintf(photo_name, sizeof photo_name, "photo_%03zu.png", i);
    std::snprintf(sketch_name, sizeof sketch_name, "sketch_%03zu.png", i);
    const auto [photo, sketch] = synth_pair(seed, i, size);
    save_image(photo, out_dir / photo_name);
    save_image(sketch, out_dir / sketch_name);
    m.entries.push_back({photo_name, sketch_name, Split::kTrain});
  }
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

// ---------------------------------------------------------------------------
// Padding

namespace {

std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  const std::size_t m = i % period;
  return m < n ? m : period - m;
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

template <typename T>
std::pair<Tensor<T>, CropRecord> pad_to_multiple(const Tensor<T>& t, std::size_t m,
                                                 const std::vector<std::size_t>& grids) {
  if (m == 0) throw InvalidParam("pad_to_multiple: m must be >= 1");
  if (t.rank() < 2) throw ShapeMismatch("pad_to_multiple: expected at least 2 dimensions");
  const std::size_t r = t.rank();
  const std::size_t h = t.dim(r - 2), w = t.dim(r - 1);
  std::size_t floor_size = 0;
  for (std::size_t g : grids) floor_size = std::max(floor_size, g);
  const std::size_t ph = round_up(std::max(h, floor_size), m), pw = round_up(std::max(w, floor_size), m);
  const CropRecord crop{h, w};
  if (ph == h && pw == w) return {t, crop};
  Shape shape = t.shape();
  shape[r - 2] = ph;
  shape[r - 1] = pw;
  Tensor<T> out(shape);
  const std::size_t planes = t.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = t.ptr() + p * h * w;
    T* dst = out.ptr() + p * ph * pw;
    for (std::size_t y = 0; y < ph; ++y) {
      const std::size_t sy = reflect_index(y, h);
      for (std::size_t x = 0; x < pw; ++x) dst[y * pw + x] = src[sy * w + reflect_index(x, w)];
    }
  }
  return {std::move(out), crop};
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& t, const CropRecord& crop) {
  if (t.rank() < 2) throw ShapeMismatch("crop_to: expected at least 2 dimensions");
  const std::size_t r = t.rank();
  const std::size_t h = t.dim(r - 2), w = t.dim(r - 1);
  if (crop.height > h || crop.width > w || crop.height == 0 || crop.width == 0) {
    throw ShapeMismatch("crop_to: crop " + std::to_string(crop.height) + "x" + std::to_string(crop.width) +
                        " does not fit " + shape_str(t.shape()));
  }
  if (crop.height == h && crop.width == w) return t;
  Shape shape = t.shape();
  shape[r - 2] = crop.height;
  shape[r - 1] = crop.width;
  Tensor<T> out(shape);
  const std::size_t planes = t.numel() / (h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < crop.height; ++y) {
      const T* src = t.ptr() + p * h * w + y * w;
      std::copy(src, src + crop.width, out.ptr() + (p * crop.height + y) * crop.width);
    }
  }
  return out;
}

template std::pair<Tensor<float>, CropRecord> pad_to_multiple<float>(const Tensor<float>&, std::size_t,
                                                                     const std::vector<std::size_t>&);
template std::pair<Tensor<double>, CropRecord> pad_to_multiple<double>(const Tensor<double>&, std::size_t,
                                                                       const std::vector<std::size_t>&);
template Tensor<float> crop_to<float>(const Tensor<float>&, const CropRecord&);
template Tensor<double> crop_to<double>(const Tensor<double>&, const CropRecord&);

}  // namespace panet
