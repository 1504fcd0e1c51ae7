#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

enum class Split { kTrain, kTest };

Split parse_split(std::string_view s);
std::string_view to_string(Split s);

struct ManifestEntry {
  std::filesystem::path photo;   ///< relative to the manifest directory
  std::filesystem::path sketch;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::filesystem::path root;  ///< directory containing the manifest file
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> select(Split split) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const { return root / p; }
};

/// CSV with header `photo,sketch,split`. Throws DataError on malformed rows,
/// duplicate photo paths or files that do not exist.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Procedural photo/sketch pairs: an anti-aliased face (outline, eyes, mouth)
/// under random translation and rotation on a cluttered gradient background.
/// The sketch holds only the face component strokes on a zero background.
/// Writes photo_XXX.png / sketch_XXX.png and manifest.csv into `out_dir`.
DatasetManifest synth_fixture(std::uint64_t seed, std::size_t count, std::size_t size,
                              const std::filesystem::path& out_dir);

/// In-memory form of one fixture pair: photo 3 x S x S, sketch 1 x S x S.
std::pair<Tensor<float>, Tensor<float>> synth_pair(std::uint64_t seed, std::size_t index, std::size_t size);

struct CropRecord {
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Reflect-pads the bottom and right edges of a (N x) C x H x W tensor so both
/// extents are multiples of `m` and at least max(grids).
template <typename T>
std::pair<Tensor<T>, CropRecord> pad_to_multiple(const Tensor<T>& t, std::size_t m,
                                                 const std::vector<std::size_t>& grids = {});

/// Keeps the top-left crop.height x crop.width window.
template <typename T>
Tensor<T> crop_to(const Tensor<T>& t, const CropRecord& crop);

}  // namespace panet
