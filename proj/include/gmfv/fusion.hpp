#pragma once

#include "gmfv/tensor.hpp"

namespace gmfv {

// Pure concatenation along the feature axis; invertible by slicing.
template <class S>
FeatureTensor<S> concat_multimodal(const FeatureTensor<S>& f_gf,
                                   const FeatureTensor<S>& f_txt_tiled) {
  if (f_gf.n_crops() != f_txt_tiled.n_crops() || f_gf.snippets() != f_txt_tiled.snippets())
    throw ShapeError("concat_multimodal: crop/snippet axes do not match");
  FeatureTensor<S> out(f_gf.n_crops(), f_gf.snippets(), f_gf.dim() + f_txt_tiled.dim());
  for (Index c = 0; c < out.n_crops(); ++c) {
    out.crops[c].leftCols(f_gf.dim()) = f_gf.crops[c];
    out.crops[c].rightCols(f_txt_tiled.dim()) = f_txt_tiled.crops[c];
  }
  return out;
}

template <class S>
struct FusionParams {
  Mat<S> w;  // [C_gm x C_v]
  Vec<S> b;
};

// Position-wise affine map of the multi-modal stream plus the visual stream:
// y = x_gm * W + b + x_v.
template <class S>
FeatureTensor<S> fuse_forward(const FeatureTensor<S>& x_gm, const FeatureTensor<S>& x_v,
                              const FusionParams<S>& p) {
  if (x_gm.n_crops() != x_v.n_crops() || x_gm.snippets() != x_v.snippets())
    throw ShapeError("fuse: crop/snippet axes do not match");
  if (x_gm.dim() != p.w.rows() || x_v.dim() != p.w.cols())
    throw ShapeError("fuse: weight is [" + std::to_string(p.w.rows()) + " x " +
                     std::to_string(p.w.cols()) + "] but streams have " +
                     std::to_string(x_gm.dim()) + " and " + std::to_string(x_v.dim()) +
                     " channels");
  FeatureTensor<S> out;
  out.crops.resize(x_gm.crops.size());
  for (std::size_t c = 0; c < x_gm.crops.size(); ++c) {
    out.crops[c].noalias() = x_gm.crops[c] * p.w;
    out.crops[c].rowwise() += p.b.transpose();
    out.crops[c] += x_v.crops[c];
  }
  return out;
}

// dx_v is dy itself (residual identity), so only dx_gm is materialized.
template <class S>
FeatureTensor<S> fuse_backward(const FeatureTensor<S>& x_gm, const FusionParams<S>& p,
                               const FeatureTensor<S>& dy, FusionParams<S>& g) {
  FeatureTensor<S> dx_gm;
  dx_gm.crops.resize(x_gm.crops.size());
  for (std::size_t c = 0; c < x_gm.crops.size(); ++c) {
    g.w.noalias() += x_gm.crops[c].transpose() * dy.crops[c];
    g.b += dy.crops[c].colwise().sum().transpose();
    dx_gm.crops[c].noalias() = dy.crops[c] * p.w.transpose();
  }
  return dx_gm;
}

}  // namespace gmfv
