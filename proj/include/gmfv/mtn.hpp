#pragma once

#include <array>

#include "gmfv/nn.hpp"

// Multi-scale temporal network: three dilated temporal convolutions plus a
// non-local self-attention branch, each producing C/4 channels, concatenated
// back to C. No residual inside.

namespace gmfv {

template <class S>
struct MtnParams {
  std::array<ConvKernel<S>, 3> pyramid;  // C -> C/4, width 3
  std::array<Index, 3> dilations{1, 2, 4};
  Mat<S> nl_wq, nl_wk, nl_wv;  // [C x C/4]
  Vec<S> nl_bias;              // [C/4]
};

template <class S>
struct MtnCache {
  Mat<S> x;
  AttnCache<S> attn;
};

template <class S>
Mat<S> mtn_forward(const Mat<S>& x, const MtnParams<S>& p, MtnCache<S>& cc) {
  const Index channels = x.cols();
  if (channels % 4 != 0)
    throw ShapeError("mtn: channel count " + std::to_string(channels) + " not divisible by 4");
  if (channels != p.pyramid[0].in_dim())
    throw ShapeError("mtn: input has " + std::to_string(channels) + " channels, params expect " +
                     std::to_string(p.pyramid[0].in_dim()));
  const Index quarter = channels / 4;
  cc.x = x;
  Mat<S> y(x.rows(), channels);
  for (int b = 0; b < 3; ++b)
    y.middleCols(b * quarter, quarter) =
        conv1d_forward(x, p.pyramid[static_cast<std::size_t>(b)], p.dilations[static_cast<std::size_t>(b)]);
  const Index full = x.rows();
  Mat<S> nl = attention_forward(x, p.nl_wq, p.nl_wk, p.nl_wv, full, cc.attn);
  nl.rowwise() += p.nl_bias.transpose();
  y.middleCols(3 * quarter, quarter) = nl;
  return y;
}

// Convenience wrapper over the crop axis.
template <class S>
FeatureTensor<S> mtn_forward(const FeatureTensor<S>& x, const MtnParams<S>& p,
                             std::vector<MtnCache<S>>& cc) {
  cc.resize(x.crops.size());
  FeatureTensor<S> out;
  out.crops.resize(x.crops.size());
  for (std::size_t c = 0; c < x.crops.size(); ++c)
    out.crops[c] = mtn_forward(x.crops[c], p, cc[c]);
  return out;
}

template <class S>
Mat<S> mtn_backward(const MtnParams<S>& p, const MtnCache<S>& cc, const Mat<S>& dy,
                    MtnParams<S>& g) {
  const Index quarter = dy.cols() / 4;
  Mat<S> dx = Mat<S>::Zero(cc.x.rows(), cc.x.cols());
  for (int b = 0; b < 3; ++b) {
    const Mat<S> dslice = dy.middleCols(b * quarter, quarter);
    dx += conv1d_backward(cc.x, p.pyramid[static_cast<std::size_t>(b)],
                          p.dilations[static_cast<std::size_t>(b)], dslice,
                          g.pyramid[static_cast<std::size_t>(b)]);
  }
  const Mat<S> dnl = dy.middleCols(3 * quarter, quarter);
  g.nl_bias += dnl.colwise().sum().transpose();
  dx += attention_backward(cc.x, p.nl_wq, p.nl_wk, p.nl_wv, cc.attn, dnl, g.nl_wq, g.nl_wk,
                           g.nl_wv);
  return dx;
}

}  // namespace gmfv
