#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "gmfv/nn.hpp"

// Top-k feature-magnitude machinery and the training objective pieces.

namespace gmfv {

// Squared Euclidean norm of the crop-averaged feature at each snippet.
template <class S>
Vec<S> snippet_magnitudes(const FeatureTensor<S>& x) {
  const Mat<S> mean = x.crop_mean();
  Vec<S> m(mean.rows());
  for (Index t = 0; t < mean.rows(); ++t) m[t] = mean.row(t).squaredNorm();
  return m;
}

// Indices of the k largest magnitudes, descending; ties break toward the
// smaller index so selection is deterministic.
template <class S>
std::vector<Index> select_topk(const Vec<S>& magnitudes, Index k) {
  const Index t_len = magnitudes.size();
  if (k < 1 || k > t_len)
    throw ShapeError("select_topk: k=" + std::to_string(k) + " out of range for T=" +
                     std::to_string(t_len));
  std::vector<Index> idx(static_cast<std::size_t>(t_len));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    if (magnitudes[a] != magnitudes[b]) return magnitudes[a] > magnitudes[b];
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

template <class S>
S topk_magnitude(const Vec<S>& magnitudes, Index k) {
  const auto idx = select_topk(magnitudes, k);
  S sum = S(0);
  for (Index i : idx) sum += magnitudes[i];
  return sum / static_cast<S>(k);
}

// Hinge on the magnitude gap; i indexes the abnormal video of the pair.
template <class S>
S margin_loss_pair(S m_i, S m_j, int y_i, int y_j, S margin) {
  if (y_i != 1 || y_j != 0) return S(0);
  return std::max(S(0), margin - (m_i - m_j));
}

// Sum over all ordered pairs in the batch; only (abnormal, normal) pairs are
// active, so this equals the cross-label double loop.
template <class S>
S batch_margin_loss(const std::vector<std::pair<S, int>>& videos, S margin) {
  if (videos.empty()) throw ShapeError("batch_margin_loss: empty batch");
  S total = S(0);
  for (const auto& [m_i, y_i] : videos)
    for (const auto& [m_j, y_j] : videos) total += margin_loss_pair(m_i, m_j, y_i, y_j, margin);
  return total;
}

// ---------------------------------------------------------------------------
// 3-layer classifier (ReLU hidden, sigmoid output) scoring one snippet.
// ---------------------------------------------------------------------------

template <class S>
struct ClassifierParams {
  Mat<S> w1;  // [C_v x H1]
  Vec<S> b1;
  Mat<S> w2;  // [H1 x H2]
  Vec<S> b2;
  Mat<S> w3;  // [H2 x 1]
  Vec<S> b3;  // [1]
};

template <class S>
struct ClassifierCache {
  Vec<S> x, z1, h1, z2, h2;
  S z3 = 0;
  S p_raw = 0;  // sigmoid(z3) before clamping
  S p = 0;
  bool clamped = false;
};

// Returns a probability clamped into [eps, 1-eps]; gradients are zero across
// the clamp boundary.
template <class S>
S classifier_forward(const Vec<S>& x, const ClassifierParams<S>& p, S eps, ClassifierCache<S>& cc) {
  if (x.size() != p.w1.rows())
    throw ShapeError("classifier: input dim " + std::to_string(x.size()) + " vs weights " +
                     std::to_string(p.w1.rows()));
  cc.x = x;
  cc.z1 = p.w1.transpose() * x + p.b1;
  cc.h1 = cc.z1.cwiseMax(S(0));
  cc.z2 = p.w2.transpose() * cc.h1 + p.b2;
  cc.h2 = cc.z2.cwiseMax(S(0));
  cc.z3 = (p.w3.transpose() * cc.h2)(0) + p.b3(0);
  cc.p_raw = sigmoid(cc.z3);
  // NaN passes through: masking it with the clamp would hide an upstream
  // blow-up from the trainer's non-finite-loss abort.
  cc.p = std::isnan(cc.p_raw) ? cc.p_raw : std::min(S(1) - eps, std::max(eps, cc.p_raw));
  cc.clamped = cc.p != cc.p_raw;
  return cc.p;
}

// dz3 is the loss gradient at the pre-sigmoid logit (callers fold in both the
// loss derivative and sigma'; for cross entropy on an unclamped score this is
// just p - y).
template <class S>
Vec<S> classifier_backward(const ClassifierParams<S>& p, const ClassifierCache<S>& cc, S dz3,
                           ClassifierParams<S>& g) {
  g.w3 += cc.h2 * dz3;
  g.b3(0) += dz3;
  Vec<S> dh2 = p.w3.col(0) * dz3;
  Vec<S> dz2 = (cc.z2.array() > S(0)).select(dh2, Vec<S>::Zero(dh2.size()));
  g.w2.noalias() += cc.h1 * dz2.transpose();
  g.b2 += dz2;
  Vec<S> dh1 = p.w2 * dz2;
  Vec<S> dz1 = (cc.z1.array() > S(0)).select(dh1, Vec<S>::Zero(dh1.size()));
  g.w1.noalias() += cc.x * dz1.transpose();
  g.b1 += dz1;
  return p.w1 * dz1;
}

// Sum (not mean) of binary cross entropy over the selected snippets against
// the video-level label.
template <class S>
S snippet_ce_loss(const Vec<S>& topk_scores, int label, S eps) {
  S total = S(0);
  for (Index i = 0; i < topk_scores.size(); ++i) {
    const S p = std::min(S(1) - eps, std::max(eps, topk_scores[i]));
    total += label == 1 ? -std::log(p) : -std::log(S(1) - p);
  }
  return total;
}

template <class S>
S total_loss(S l_v, S l_s, S alpha) {
  return alpha * l_v + l_s;
}

}  // namespace gmfv
