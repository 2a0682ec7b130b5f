#pragma once

#include <cstdint>
#include <filesystem>

#include "gmfv/io.hpp"

namespace gmfv {

enum class AnomalyChannel { Visual, Text, Both };

// Desk-scale stand-in for a real benchmark: normal videos are iid N(0,1)
// features; abnormal ones get a mean shift on the chosen channel(s) inside
// the anomaly window.
struct SyntheticSpec {
  Index n_normal = 0;    // train split counts
  Index n_abnormal = 0;
  Index n_normal_test = -1;    // -1: mirror the train counts
  Index n_abnormal_test = -1;
  Index snippets = 32;   // T
  Index visual_dim = 16;
  Index text_dim = 8;
  Index n_crops = 2;
  Index window_start = 0;  // [start, end) in snippet indices
  Index window_end = 0;
  AnomalyChannel channel = AnomalyChannel::Both;
  double shift_magnitude = 2.0;
  std::uint64_t seed = 1;
};

struct SyntheticResult {
  Manifest train;
  Manifest test;
  std::filesystem::path train_manifest_path;
  std::filesystem::path test_manifest_path;
};

// Writes features/*.gmfv plus train.jsonl / test.jsonl under out_dir.
// Byte-deterministic in spec.seed; feature paths are stored relative to
// out_dir so the tree is relocatable.
SyntheticResult generate_synthetic_dataset(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir);

AnomalyChannel parse_anomaly_channel(const std::string& name);

}  // namespace gmfv
