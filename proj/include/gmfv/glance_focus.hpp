#pragma once

#include "gmfv/nn.hpp"

// Glance-focus feature refinement. The glance block mixes all snippets with a
// clip-level transformer; the focus block expands channels and mixes only
// nearby snippets through windowed self-attention. Both wrap the mixing step
// with a short-cut convolution and a GeLU feed-forward, each with residual
// additions.

namespace gmfv {

template <class S>
struct AttnProj {
  Mat<S> wq, wk, wv, wo;
};

template <class S>
struct GlanceFocusParams {
  ConvKernel<S> glance_scc;  // D -> D, width 3
  AttnProj<S> glance_attn;   // [D x D] each
  Mat<S> glance_ffn_w1;      // [D x 4D]
  Vec<S> glance_ffn_b1;
  Mat<S> glance_ffn_w2;      // [4D x D]
  Vec<S> glance_ffn_b2;

  Mat<S> focus_expand_w;     // 1x1 conv, [D x D_f]
  Vec<S> focus_expand_b;
  ConvKernel<S> focus_scc;   // D_f -> D_f, width 3
  AttnProj<S> focus_attn;    // [D_f x D_f] each, windowed
  Mat<S> focus_ffn_w1;       // [D_f x 4D_f]
  Vec<S> focus_ffn_b1;
  Mat<S> focus_ffn_w2;
  Vec<S> focus_ffn_b2;

  Index focus_radius = 2;
};

// Residual temporal convolution: x + conv(x). Kernel must map C -> C.
template <class S>
Mat<S> scc_forward(const Mat<S>& x, const ConvKernel<S>& k) {
  if (k.in_dim() != k.out_dim()) throw ShapeError("scc: kernel must preserve the channel count");
  return x + conv1d_forward(x, k);
}

template <class S>
struct GlanceCache {
  Mat<S> x, s, ctx, u;
  AttnCache<S> attn;
  FfnCache<S> ffn;
};

template <class S>
Mat<S> glance_block_forward(const Mat<S>& x, const GlanceFocusParams<S>& p, GlanceCache<S>& cc) {
  cc.x = x;
  cc.s = scc_forward(x, p.glance_scc);
  const Index full = cc.s.rows();  // radius >= T-1: every clip attends to every clip
  cc.ctx = attention_forward(cc.s, p.glance_attn.wq, p.glance_attn.wk, p.glance_attn.wv, full,
                             cc.attn);
  cc.u = cc.s + cc.ctx * p.glance_attn.wo;
  return cc.u + ffn_forward(cc.u, p.glance_ffn_w1, p.glance_ffn_b1, p.glance_ffn_w2,
                            p.glance_ffn_b2, cc.ffn);
}

template <class S>
Mat<S> glance_block_backward(const GlanceFocusParams<S>& p, const GlanceCache<S>& cc,
                             const Mat<S>& dy, GlanceFocusParams<S>& g) {
  Mat<S> du = dy + ffn_backward(cc.u, p.glance_ffn_w1, p.glance_ffn_w2, cc.ffn, dy,
                                g.glance_ffn_w1, g.glance_ffn_b1, g.glance_ffn_w2,
                                g.glance_ffn_b2);
  g.glance_attn.wo.noalias() += cc.ctx.transpose() * du;
  Mat<S> dctx = du * p.glance_attn.wo.transpose();
  Mat<S> ds = du + attention_backward(cc.s, p.glance_attn.wq, p.glance_attn.wk, p.glance_attn.wv,
                                      cc.attn, dctx, g.glance_attn.wq, g.glance_attn.wk,
                                      g.glance_attn.wv);
  return ds + conv1d_backward(cc.x, p.glance_scc, Index(1), ds, g.glance_scc);
}

template <class S>
struct FocusCache {
  Mat<S> x, e, s, ctx, u;
  AttnCache<S> attn;
  FfnCache<S> ffn;
};

template <class S>
Mat<S> focus_block_forward(const Mat<S>& x, const GlanceFocusParams<S>& p, FocusCache<S>& cc) {
  cc.x = x;
  cc.e.noalias() = x * p.focus_expand_w;
  cc.e.rowwise() += p.focus_expand_b.transpose();
  cc.s = scc_forward(cc.e, p.focus_scc);
  cc.ctx = attention_forward(cc.s, p.focus_attn.wq, p.focus_attn.wk, p.focus_attn.wv,
                             p.focus_radius, cc.attn);
  cc.u = cc.s + cc.ctx * p.focus_attn.wo;
  return cc.u + ffn_forward(cc.u, p.focus_ffn_w1, p.focus_ffn_b1, p.focus_ffn_w2, p.focus_ffn_b2,
                            cc.ffn);
}

template <class S>
Mat<S> focus_block_backward(const GlanceFocusParams<S>& p, const FocusCache<S>& cc,
                            const Mat<S>& dy, GlanceFocusParams<S>& g) {
  Mat<S> du = dy + ffn_backward(cc.u, p.focus_ffn_w1, p.focus_ffn_w2, cc.ffn, dy, g.focus_ffn_w1,
                                g.focus_ffn_b1, g.focus_ffn_w2, g.focus_ffn_b2);
  g.focus_attn.wo.noalias() += cc.ctx.transpose() * du;
  Mat<S> dctx = du * p.focus_attn.wo.transpose();
  Mat<S> ds = du + attention_backward(cc.s, p.focus_attn.wq, p.focus_attn.wk, p.focus_attn.wv,
                                      cc.attn, dctx, g.focus_attn.wq, g.focus_attn.wk,
                                      g.focus_attn.wv);
  Mat<S> de = ds + conv1d_backward(cc.e, p.focus_scc, Index(1), ds, g.focus_scc);
  g.focus_expand_w.noalias() += cc.x.transpose() * de;
  g.focus_expand_b += de.colwise().sum().transpose();
  return de * p.focus_expand_w.transpose();
}

template <class S>
struct GlanceFocusCache {
  std::vector<GlanceCache<S>> glance;  // one per crop
  std::vector<FocusCache<S>> focus;
};

// Crops are processed independently; output is [n_crops, T, D_f].
template <class S>
FeatureTensor<S> glance_focus_forward(const FeatureTensor<S>& f, const GlanceFocusParams<S>& p,
                                      GlanceFocusCache<S>& cc) {
  if (f.dim() != p.glance_scc.in_dim())
    throw ShapeError("glance_focus: input dim " + std::to_string(f.dim()) +
                     " does not match params dim " + std::to_string(p.glance_scc.in_dim()));
  const std::size_t n = f.crops.size();
  cc.glance.resize(n);
  cc.focus.resize(n);
  FeatureTensor<S> out;
  out.crops.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    Mat<S> g = glance_block_forward(f.crops[c], p, cc.glance[c]);
    out.crops[c] = focus_block_forward(g, p, cc.focus[c]);
  }
  return out;
}

template <class S>
void glance_focus_backward(const GlanceFocusParams<S>& p, const GlanceFocusCache<S>& cc,
                           const FeatureTensor<S>& dy, GlanceFocusParams<S>& g) {
  for (std::size_t c = 0; c < dy.crops.size(); ++c) {
    Mat<S> dglance = focus_block_backward(p, cc.focus[c], dy.crops[c], g);
    glance_block_backward(p, cc.glance[c], dglance, g);  // input gradient unused
  }
}

}  // namespace gmfv
