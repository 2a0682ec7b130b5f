#pragma once

#include <Eigen/Dense>

#include <vector>

#include "gmfv/errors.hpp"

namespace gmfv {

using Index = Eigen::Index;

// Row-major so [T x D] matrices map directly onto the on-disk payload
// (innermost axis = feature dim).
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr Index kFramesPerSnippet = 16;

// Per-snippet features with a crop axis: one [T x D] matrix per spatial crop.
template <class Scalar>
struct FeatureTensor {
  std::vector<Mat<Scalar>> crops;

  FeatureTensor() = default;
  FeatureTensor(Index n_crops, Index snippets, Index dim)
      : crops(static_cast<std::size_t>(n_crops), Mat<Scalar>::Zero(snippets, dim)) {}

  Index n_crops() const { return static_cast<Index>(crops.size()); }
  Index snippets() const { return crops.empty() ? 0 : crops.front().rows(); }
  Index dim() const { return crops.empty() ? 0 : crops.front().cols(); }

  bool all_finite() const {
    for (const auto& c : crops)
      if (!c.allFinite()) return false;
    return true;
  }

  // Mean over the crop axis -> [T x D].
  Mat<Scalar> crop_mean() const {
    Mat<Scalar> m = Mat<Scalar>::Zero(snippets(), dim());
    for (const auto& c : crops) m += c;
    m /= static_cast<Scalar>(crops.size());
    return m;
  }

  template <class Other>
  FeatureTensor<Other> cast() const {
    FeatureTensor<Other> out;
    out.crops.reserve(crops.size());
    for (const auto& c : crops) out.crops.push_back(c.template cast<Other>());
    return out;
  }
};

// Text embeddings are one row per snippet; replicate across the crop axis so
// they line up with the cropped visual features.
template <class Scalar>
FeatureTensor<Scalar> tile_text_features(const Mat<Scalar>& text, Index n_crops) {
  if (n_crops < 1) throw ShapeError("tile_text_features: n_crops must be >= 1");
  FeatureTensor<Scalar> out;
  out.crops.assign(static_cast<std::size_t>(n_crops), text);
  return out;
}

// Frame f inherits the score of snippet floor(f / 16); the final snippet may
// cover fewer than 16 frames.
template <class Scalar>
Vec<Scalar> snippet_to_frame_scores(const Vec<Scalar>& scores, Index num_frames) {
  const Index t_len = scores.size();
  if (t_len < 1) throw ShapeError("snippet_to_frame_scores: empty score vector");
  if (num_frames <= kFramesPerSnippet * (t_len - 1) || num_frames > kFramesPerSnippet * t_len)
    throw ShapeError("snippet_to_frame_scores: num_frames inconsistent with snippet count");
  Vec<Scalar> frames(num_frames);
  for (Index f = 0; f < num_frames; ++f) frames[f] = scores[f / kFramesPerSnippet];
  return frames;
}

}  // namespace gmfv
