#include "gmfv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

namespace gmfv {

namespace {

void check_sizes(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw MetricError("metrics: scores and labels differ in length");
  if (scores.empty()) throw MetricError("metrics: empty input");
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("roc_auc: both classes must be present");

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks within tie groups give ties exactly 1/2 concordance credit.
  double pos_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels) {
  check_sizes(scores, labels);
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l;
  if (n_pos == 0) throw MetricError("average_precision: no positive frames");

  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0, recall_prev = 0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) (labels[idx[k]] ? tp : fp) += 1;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

MetricsReport compute_metrics(const std::vector<ScoreRecord>& records) {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& r : records) {
    if (r.frame_scores.size() != r.frame_labels.size())
      throw MetricError("record '" + r.video_id + "': scores/labels length mismatch");
    for (std::size_t i = 0; i < r.frame_scores.size(); ++i) {
      scores.push_back(static_cast<double>(r.frame_scores[i]));
      labels.push_back(r.frame_labels[i]);
    }
  }
  MetricsReport rep;
  rep.n_frames = static_cast<std::int64_t>(scores.size());
  rep.n_positive = 0;
  for (auto l : labels) rep.n_positive += l;
  rep.auc = roc_auc(scores, labels);
  rep.ap = average_precision(scores, labels);
  return rep;
}

void write_scores_csv(const std::vector<ScoreRecord>& records,
                      const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MetricError("cannot write scores CSV " + path.string());
  os << "video_id,frame_index,score,label\n";
  char buf[64];
  for (const auto& r : records) {
    if (r.video_id.find(',') != std::string::npos || r.video_id.find('\n') != std::string::npos)
      throw MetricError("video_id '" + r.video_id + "' contains CSV delimiters");
    for (std::size_t i = 0; i < r.frame_scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(r.frame_scores[i]));
      os << r.video_id << ',' << i << ',' << buf << ',' << int(r.frame_labels[i]) << "\n";
    }
  }
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MetricError("cannot read scores CSV " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw MetricError("scores CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "video_id,frame_index,score,label")
    throw MetricError("scores CSV has an unexpected header: " + line);

  std::vector<ScoreRecord> records;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::array<std::string, 4> fields;
    std::size_t start = 0;
    for (int f = 0; f < 4; ++f) {
      const std::size_t comma = line.find(',', start);
      const bool last = f == 3;
      if ((comma == std::string::npos) != last)
        throw MetricError("scores CSV line " + std::to_string(line_no) + ": expected 4 fields");
      fields[f] = line.substr(start, last ? std::string::npos : comma - start);
      start = comma + 1;
    }

    char* end = nullptr;
    const float score = std::strtof(fields[2].c_str(), &end);
    if (end == fields[2].c_str() || *end != '\0' || !std::isfinite(score))
      throw MetricError("scores CSV line " + std::to_string(line_no) + ": bad score");
    if (fields[3] != "0" && fields[3] != "1")
      throw MetricError("scores CSV line " + std::to_string(line_no) + ": label must be 0 or 1");

    if (records.empty() || records.back().video_id != fields[0]) {
      records.push_back({fields[0], {}, {}});
    }
    records.back().frame_scores.push_back(score);
    records.back().frame_labels.push_back(fields[3] == "1" ? 1 : 0);
  }
  return records;
}

}  // namespace gmfv
