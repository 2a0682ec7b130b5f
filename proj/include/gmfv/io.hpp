#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gmfv/errors.hpp"
#include "gmfv/tensor.hpp"

namespace gmfv {

// GMFV feature file, little-endian throughout:
//   bytes 0-3   magic "GMFV"
//   bytes 4-7   u32 version (= 1)
//   byte  8     u8 rank (2 or 3)
//   bytes 9-11  zero padding
//   next        rank x u32 dims
//   payload     row-major float32, innermost axis = feature dim
struct FeatureArray {
  std::uint8_t rank = 0;
  std::array<std::uint32_t, 3> dims{0, 0, 0};
  std::vector<float> data;  // row-major

  std::size_t element_count() const;

  // Shape adapters; throw FeatureFileError(BadRank) on a rank mismatch.
  FeatureTensor<float> as_tensor() const;  // rank 3: [n_crops, T, D]
  Mat<float> as_matrix() const;            // rank 2: [T, D]

  static FeatureArray from_tensor(const FeatureTensor<float>& t);
  static FeatureArray from_matrix(const Mat<float>& m);
};

void write_feature_file(const FeatureArray& array, const std::filesystem::path& path);
FeatureArray read_feature_file(const std::filesystem::path& path);

// -----------------------------------------------------------------------
// Dataset manifest: UTF-8 JSON lines, one video per line.
// -----------------------------------------------------------------------

struct VideoRecord {
  std::string video_id;
  int label = 0;  // 0 normal, 1 abnormal
  std::string feature_path;
  std::string text_path;
  std::int64_t num_frames = 0;
  std::optional<std::vector<std::uint8_t>> frame_labels;  // test split only
};

enum class Split { Train, Test };

struct Manifest {
  std::vector<VideoRecord> records;
  Split split = Split::Train;
};

// Parses all records up front but never opens the referenced feature files.
Manifest load_manifest(const std::filesystem::path& path, Split split = Split::Train);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace gmfv
