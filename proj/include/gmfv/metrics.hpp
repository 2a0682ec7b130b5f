#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmfv/errors.hpp"

namespace gmfv {

// Frame-level scores and ground truth for one test video.
struct ScoreRecord {
  std::string video_id;
  std::vector<float> frame_scores;        // in [0, 1]
  std::vector<std::uint8_t> frame_labels; // 0/1, same length
};

struct MetricsReport {
  double auc = 0;
  double ap = 0;
  std::int64_t n_frames = 0;
  std::int64_t n_positive = 0;
};

// Frame-pooled ROC-AUC, equal to the Mann-Whitney pairwise concordance with
// ties counted 1/2. Throws MetricError unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Step-interpolated average precision; ties at a threshold are processed as
// one group. Throws MetricError when there is no positive frame.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels);

// Pools all frames of all records (micro protocol) and computes both metrics.
MetricsReport compute_metrics(const std::vector<ScoreRecord>& records);

// Score CSV: header "video_id,frame_index,score,label", one row per frame,
// UTF-8 with LF endings. Scores print with %.9g so float32 values round-trip.
void write_scores_csv(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

}  // namespace gmfv
