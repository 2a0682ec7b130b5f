#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "gmfv/tensor.hpp"

// Forward/backward primitives shared by the temporal blocks. Everything is a
// free function over [T x C] matrices (rows = snippets); backward functions
// accumulate parameter gradients in place and return the input gradient.

namespace gmfv {

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
}

template <class S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
  const S pdf = std::exp(S(-0.5) * x * x) *
                (std::numbers::inv_sqrtpi_v<S> / std::numbers::sqrt2_v<S>);
  return cdf + x * pdf;
}

template <class S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

// ---------------------------------------------------------------------------
// Temporal convolution, same padding, optional dilation.
// taps[j] is the [C_in x C_out] map applied at time offset (j - w/2) * dilation.
// ---------------------------------------------------------------------------

template <class S>
struct ConvKernel {
  std::vector<Mat<S>> taps;
  Vec<S> bias;

  Index width() const { return static_cast<Index>(taps.size()); }
  Index in_dim() const { return taps.empty() ? 0 : taps.front().rows(); }
  Index out_dim() const { return taps.empty() ? 0 : taps.front().cols(); }

  static ConvKernel zeros(Index width, Index in_dim, Index out_dim) {
    ConvKernel k;
    k.taps.assign(static_cast<std::size_t>(width), Mat<S>::Zero(in_dim, out_dim));
    k.bias = Vec<S>::Zero(out_dim);
    return k;
  }
};

template <class S>
Mat<S> conv1d_forward(const Mat<S>& x, const ConvKernel<S>& k, Index dilation = 1) {
  if (x.cols() != k.in_dim())
    throw ShapeError("conv1d: input has " + std::to_string(x.cols()) + " channels, kernel expects " +
                     std::to_string(k.in_dim()));
  const Index t_len = x.rows();
  const Index half = k.width() / 2;
  Mat<S> y = Mat<S>::Zero(t_len, k.out_dim());
  y.rowwise() += k.bias.transpose();
  for (Index j = 0; j < k.width(); ++j) {
    const Index off = (j - half) * dilation;
    const Index len = t_len - std::abs(off);
    if (len <= 0) continue;
    y.middleRows(std::max<Index>(0, -off), len).noalias() +=
        x.middleRows(std::max<Index>(0, off), len) * k.taps[static_cast<std::size_t>(j)];
  }
  return y;
}

template <class S>
Mat<S> conv1d_backward(const Mat<S>& x, const ConvKernel<S>& k, Index dilation, const Mat<S>& dy,
                       ConvKernel<S>& dk) {
  const Index t_len = x.rows();
  const Index half = k.width() / 2;
  Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
  dk.bias += dy.colwise().sum().transpose();
  for (Index j = 0; j < k.width(); ++j) {
    const Index off = (j - half) * dilation;
    const Index len = t_len - std::abs(off);
    if (len <= 0) continue;
    const Index lo_out = std::max<Index>(0, -off);
    const Index lo_in = std::max<Index>(0, off);
    dk.taps[static_cast<std::size_t>(j)].noalias() +=
        x.middleRows(lo_in, len).transpose() * dy.middleRows(lo_out, len);
    dx.middleRows(lo_in, len).noalias() +=
        dy.middleRows(lo_out, len) * k.taps[static_cast<std::size_t>(j)].transpose();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Scaled dot-product self-attention over rows of x, restricted to a temporal
// window |i - j| <= radius (radius >= T-1 is full attention). Softmax is
// max-subtracted per row. Returns A*V; output projections stay with the
// caller.
// ---------------------------------------------------------------------------

template <class S>
struct AttnCache {
  Mat<S> q, k, v;
  Mat<S> a;  // [T x T], zero outside the window
};

template <class S>
Mat<S> attention_forward(const Mat<S>& x, const Mat<S>& wq, const Mat<S>& wk, const Mat<S>& wv,
                         Index radius, AttnCache<S>& cc) {
  cc.q.noalias() = x * wq;
  cc.k.noalias() = x * wk;
  cc.v.noalias() = x * wv;
  const Index t_len = x.rows();
  const S scale = S(1) / std::sqrt(static_cast<S>(cc.q.cols()));
  Mat<S> scores = (cc.q * cc.k.transpose()) * scale;
  cc.a = Mat<S>::Zero(t_len, t_len);
  for (Index i = 0; i < t_len; ++i) {
    const Index lo = std::max<Index>(0, i - radius);
    const Index hi = std::min<Index>(t_len - 1, i + radius);
    const Index w = hi - lo + 1;
    auto row = scores.row(i).segment(lo, w);
    auto arow = cc.a.row(i).segment(lo, w);
    arow = (row.array() - row.maxCoeff()).exp().matrix();
    arow /= arow.sum();
  }
  return cc.a * cc.v;
}

template <class S>
Mat<S> attention_backward(const Mat<S>& x, const Mat<S>& wq, const Mat<S>& wk, const Mat<S>& wv,
                          const AttnCache<S>& cc, const Mat<S>& dctx, Mat<S>& dwq, Mat<S>& dwk,
                          Mat<S>& dwv) {
  const S scale = S(1) / std::sqrt(static_cast<S>(cc.q.cols()));
  Mat<S> da = dctx * cc.v.transpose();
  Mat<S> dv = cc.a.transpose() * dctx;
  // Softmax backward per row; masked entries have a == 0, so ds vanishes
  // there without special casing.
  Vec<S> row_dot = (da.array() * cc.a.array()).rowwise().sum();
  Mat<S> ds = (cc.a.array() * (da.array().colwise() - row_dot.array())).matrix() * scale;
  Mat<S> dq = ds * cc.k;
  Mat<S> dk = ds.transpose() * cc.q;
  dwq.noalias() += x.transpose() * dq;
  dwk.noalias() += x.transpose() * dk;
  dwv.noalias() += x.transpose() * dv;
  return dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
}

// ---------------------------------------------------------------------------
// Two-layer GeLU feed-forward. The residual stays with the caller.
// ---------------------------------------------------------------------------

template <class S>
struct FfnCache {
  Mat<S> z;  // pre-activation
  Mat<S> h;  // gelu(z)
};

template <class S>
Mat<S> ffn_forward(const Mat<S>& x, const Mat<S>& w1, const Vec<S>& b1, const Mat<S>& w2,
                   const Vec<S>& b2, FfnCache<S>& cc) {
  cc.z.noalias() = x * w1;
  cc.z.rowwise() += b1.transpose();
  cc.h = cc.z.unaryExpr([](S v) { return gelu(v); });
  Mat<S> y = cc.h * w2;
  y.rowwise() += b2.transpose();
  return y;
}

template <class S>
Mat<S> ffn_backward(const Mat<S>& x, const Mat<S>& w1, const Mat<S>& w2, const FfnCache<S>& cc,
                    const Mat<S>& dy, Mat<S>& dw1, Vec<S>& db1, Mat<S>& dw2, Vec<S>& db2) {
  dw2.noalias() += cc.h.transpose() * dy;
  db2 += dy.colwise().sum().transpose();
  Mat<S> dz = (dy * w2.transpose()).array() *
              cc.z.unaryExpr([](S v) { return gelu_grad(v); }).array();
  dw1.noalias() += x.transpose() * dz;
  db1 += dz.colwise().sum().transpose();
  return dz * w1.transpose();
}

}  // namespace gmfv
