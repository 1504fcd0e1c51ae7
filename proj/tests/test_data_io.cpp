#include <gtest/gtest.h>

#include <fstream>

#include "panet/config.hpp"
#include "panet/dataset.hpp"
#include "panet/image_io.hpp"
#include "panet/random.hpp"
#include "support.hpp"

using namespace panet;
using panet::test::TempDir;

namespace {

ImageBuffer pattern(std::size_t h, std::size_t w, std::size_t c) {
  ImageBuffer img{h, w, c, std::vector<std::uint8_t>(h * w * c)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::uint8_t((i * 37 + i / 7) & 0xff);
  return img;
}

}  // namespace

TEST(ImageIo, PngRoundTripGrayAndRgb) {
  for (std::size_t c : {1u, 3u}) {
    const auto img = pattern(13, 17, c);
    const auto bytes = encode_png(img);
    ASSERT_GE(bytes.size(), 8u);
    EXPECT_EQ(bytes[1], 'P');
    const auto back = decode_image(bytes);
    EXPECT_EQ(back.height, 13u);
    EXPECT_EQ(back.width, 17u);
    EXPECT_EQ(back.channels, c);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_EQ(encode_png(back), bytes);
  }
}

TEST(ImageIo, PnmRoundTrip) {
  for (std::size_t c : {1u, 3u}) {
    const auto img = pattern(5, 9, c);
    const auto bytes = encode_pnm(img);
    EXPECT_EQ(bytes[1], c == 1 ? '5' : '6');
    EXPECT_EQ(decode_image(bytes).pixels, img.pixels);
  }
}

TEST(ImageIo, PnmHeaderComments) {
  const std::string text = "P5\n# made by hand\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(10);
  bytes.push_back(200);
  const auto img = decode_image(bytes);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{10, 200}));
}

TEST(ImageIo, RejectsGarbage) {
  const std::vector<std::uint8_t> junk{'h', 'e', 'l', 'l', 'o'};
  EXPECT_THROW(decode_image(junk), DataError);
  auto png = encode_png(pattern(4, 4, 1));
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_image(png), DataError);
  const std::string short_pgm = "P5\n4 4\n255\n";
  EXPECT_THROW(decode_image(std::vector<std::uint8_t>(short_pgm.begin(), short_pgm.end())), DataError);
  EXPECT_THROW(load_image("/nonexistent.png"), DataError);
}

TEST(ImageIo, TensorQuantisation) {
  const Tensor<float> t({1, 1, 4}, {-0.5f, 0.5f, 1.0f, 2.0f});
  const auto img = tensor_to_image(t);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 128, 255, 255}));
  const auto back = image_to_tensor(img);
  EXPECT_EQ(back.shape(), (Shape{1, 1, 4}));
  EXPECT_FLOAT_EQ(back[1], 128.0f / 255.0f);
}

TEST(ImageIo, SaveLoadBothFormats) {
  TempDir dir("imgio");
  const auto t = rand_uniform_seeded<float>({3, 6, 5}, 0, 1, 3);
  for (const char* name : {"a.png", "a.ppm"}) {
    save_image(t, dir / name);
    const auto back = load_image(dir / name);
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_LE(max_abs_diff(back, t), 0.5 / 255 + 1e-6);
  }
  EXPECT_THROW(save_image(Tensor<float>({2, 4, 4}), dir / "bad.png"), ShapeMismatch);
}

TEST(Manifest, SaveLoadAndValidation) {
  TempDir dir("manifest");
  const auto m = synth_fixture(4, 3, 32, dir.path());
  EXPECT_EQ(m.entries.size(), 3u);
  const auto loaded = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(loaded.entries.size(), 3u);
  EXPECT_EQ(loaded.entries[1].photo, m.entries[1].photo);
  EXPECT_EQ(loaded.select(Split::kTrain).size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(loaded.resolve(loaded.entries[0].sketch)));

  auto write = [&](const std::string& text) {
    std::ofstream(dir / "bad.csv") << text;
    return dir / "bad.csv";
  };
  EXPECT_THROW(load_manifest(write("photo,sketch\n")), DataError);
  EXPECT_THROW(load_manifest(write("photo,sketch,split\nphoto_000.png,sketch_000.png,valid\n")), Error);
  EXPECT_THROW(load_manifest(write("photo,sketch,split\nmissing.png,sketch_000.png,train\n")), DataError);
  EXPECT_THROW(load_manifest(write("photo,sketch,split\nphoto_000.png,sketch_000.png,train\n"
                                   "photo_000.png,sketch_001.png,test\n")),
               DataError);
  EXPECT_THROW(load_manifest(dir / "absent.csv"), DataError);
}

TEST(Fixture, DeterministicBytes) {
  TempDir a("fixa"), b("fixb");
  synth_fixture(1, 4, 64, a.path());
  synth_fixture(1, 4, 64, b.path());
  for (const char* f : {"photo_000.png", "sketch_003.png", "manifest.csv"}) {
    EXPECT_EQ(read_file_bytes(a / f), read_file_bytes(b / f)) << f;
  }
  const auto [p, s] = synth_pair(1, 0, 64);
  EXPECT_EQ(p.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(s.shape(), (Shape{1, 64, 64}));
  EXPECT_NE(synth_pair(1, 1, 64).second, s);
  // Sketches are strokes on a zero background.
  std::size_t ink = 0;
  for (float v : s.data()) ink += v > 0.1f;
  EXPECT_GT(ink, 50u);
  EXPECT_LT(ink, s.numel() / 2);
}

TEST(Padding, ReflectPadThenCropIsIdentity) {
  for (std::size_t h : {8u, 13u, 61u}) {
    for (std::size_t w : {5u, 16u, 77u}) {
      const auto t = randn_seeded<float>({1, 2, h, w}, 1.0, h * 100 + w);
      const auto [padded, crop] = pad_to_multiple(t, 8, {3, 4, 5});
      EXPECT_EQ(padded.dim(2) % 8, 0u);
      EXPECT_EQ(padded.dim(3) % 8, 0u);
      EXPECT_GE(padded.dim(2), h);
      EXPECT_LT(padded.dim(2), std::max<std::size_t>(h, 5) + 8);
      EXPECT_EQ(crop_to(padded, crop), t);
      if (padded.dim(3) > w && w >= 2) {
        // Reflection excludes the edge sample: column w mirrors column w - 2.
        EXPECT_EQ(padded.at(0, 1, 0, w), t.at(0, 1, 0, w - 2));
      }
    }
  }
}

TEST(Config, TextRoundTripAndOverrides) {
  RunConfig cfg;
  cfg.train.lr = 1e-3;
  cfg.model.branch_grids = {2, 6};
  cfg.model.fapd_variant = FapdVariant::kStandard;
  RunConfig back;
  apply_config_text(cfg.to_text(), back);
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.model.digest(), cfg.model.digest());

  apply_override("train.batch_size", "3", back);
  EXPECT_EQ(back.train.batch_size, 3u);
  apply_config_text("# comment\n\nmodel.capm_channels = 16\n", back);
  EXPECT_EQ(back.model.capm_channels, 16u);
}

TEST(Config, ErrorsNameTheKey) {
  RunConfig cfg;
  try {
    apply_config_text("train.lr = 1\nmodel.depth = 4\n", cfg, "my.cfg");
    FAIL();
  } catch (const InvalidParam& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("model.depth"), std::string::npos);
    EXPECT_NE(msg.find("my.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(apply_override("train.lr", "fast", cfg), InvalidParam);
  EXPECT_THROW(apply_config_text("train.steps\n", cfg), InvalidParam);
  cfg.train.lr = -1;
  EXPECT_THROW(cfg.validate(), InvalidParam);
  EXPECT_THROW(load_config_file("/nonexistent.cfg"), DataError);
}
