#pragma once

#include <string>
#include <vector>

#include "gmfv/fusion.hpp"
#include "gmfv/glance_focus.hpp"
#include "gmfv/mtn.hpp"
#include "gmfv/rng.hpp"
#include "gmfv/scoring.hpp"

namespace gmfv {

// Architecture sizes. The fused space always has visual_dim channels because
// the visual MTN preserves its channel count and Eq-style fusion adds onto
// that stream.
struct ModelDims {
  Index visual_dim = 2048;  // D; real I3D-ResNet50 features
  Index text_dim = 768;     // D_t; sentence embeddings, 0 disables text
  Index grained_dim = 0;    // D_f; 0 means "same as visual_dim"
  Index hidden1 = 512;      // classifier
  Index hidden2 = 32;
  Index focus_radius = 2;
  std::array<Index, 3> dilations{1, 2, 4};

  Index grained() const { return grained_dim > 0 ? grained_dim : visual_dim; }
  Index multimodal() const { return grained() + text_dim; }
  Index fused() const { return visual_dim; }

  void validate() const {
    if (visual_dim < 1) throw ShapeError("dims: visual_dim must be >= 1");
    if (text_dim < 0) throw ShapeError("dims: text_dim must be >= 0");
    if (visual_dim % 4 != 0)
      throw ShapeError("dims: visual_dim must be divisible by 4 for the MTN branches");
    if (multimodal() % 4 != 0)
      throw ShapeError("dims: grained_dim + text_dim must be divisible by 4");
    if (hidden1 < 1 || hidden2 < 1) throw ShapeError("dims: classifier hidden sizes must be >= 1");
    if (focus_radius < 0) throw ShapeError("dims: focus_radius must be >= 0");
    if (!(dilations[0] > 0 && dilations[0] < dilations[1] && dilations[1] < dilations[2]))
      throw ShapeError("dims: dilations must be positive and strictly increasing");
  }
};

struct LossConfig {
  Index topk = 3;
  double margin = 100.0;
  double alpha = 1e-4;
  double epsilon = 1e-8;
};

template <class S>
struct ModelParams {
  GlanceFocusParams<S> gf;
  MtnParams<S> mtn_v;
  MtnParams<S> mtn_gm;
  FusionParams<S> fusion;
  ClassifierParams<S> classifier;
};

// ---------------------------------------------------------------------------
// Uniform parameter traversal: one registration order used by init, the
// optimizer, serialization and the gradient checker. Matrices are weights
// (fan_in > 0), vectors are biases.
// ---------------------------------------------------------------------------

template <class S>
struct ParamRef {
  std::string name;
  Mat<S>* mat = nullptr;
  Vec<S>* vec = nullptr;
  Index fan_in = 0;
};

template <class S>
std::vector<ParamRef<S>> param_refs(ModelParams<S>& p) {
  std::vector<ParamRef<S>> refs;
  const auto mat = [&](std::string name, Mat<S>& m, Index fan) {
    refs.push_back({std::move(name), &m, nullptr, fan});
  };
  const auto vec = [&](std::string name, Vec<S>& v) {
    refs.push_back({std::move(name), nullptr, &v, 0});
  };
  const auto conv = [&](const std::string& name, ConvKernel<S>& k) {
    const Index fan = k.in_dim() * k.width();
    for (std::size_t j = 0; j < k.taps.size(); ++j)
      mat(name + ".tap" + std::to_string(j), k.taps[j], fan);
    vec(name + ".bias", k.bias);
  };
  const auto attn = [&](const std::string& name, AttnProj<S>& a) {
    mat(name + ".wq", a.wq, a.wq.rows());
    mat(name + ".wk", a.wk, a.wk.rows());
    mat(name + ".wv", a.wv, a.wv.rows());
    mat(name + ".wo", a.wo, a.wo.rows());
  };
  const auto mtn = [&](const std::string& name, MtnParams<S>& m) {
    for (int b = 0; b < 3; ++b) conv(name + ".pyramid" + std::to_string(b), m.pyramid[b]);
    mat(name + ".nl_wq", m.nl_wq, m.nl_wq.rows());
    mat(name + ".nl_wk", m.nl_wk, m.nl_wk.rows());
    mat(name + ".nl_wv", m.nl_wv, m.nl_wv.rows());
    vec(name + ".nl_bias", m.nl_bias);
  };

  conv("gf.glance_scc", p.gf.glance_scc);
  attn("gf.glance_attn", p.gf.glance_attn);
  mat("gf.glance_ffn.w1", p.gf.glance_ffn_w1, p.gf.glance_ffn_w1.rows());
  vec("gf.glance_ffn.b1", p.gf.glance_ffn_b1);
  mat("gf.glance_ffn.w2", p.gf.glance_ffn_w2, p.gf.glance_ffn_w2.rows());
  vec("gf.glance_ffn.b2", p.gf.glance_ffn_b2);
  mat("gf.focus_expand.w", p.gf.focus_expand_w, p.gf.focus_expand_w.rows());
  vec("gf.focus_expand.b", p.gf.focus_expand_b);
  conv("gf.focus_scc", p.gf.focus_scc);
  attn("gf.focus_attn", p.gf.focus_attn);
  mat("gf.focus_ffn.w1", p.gf.focus_ffn_w1, p.gf.focus_ffn_w1.rows());
  vec("gf.focus_ffn.b1", p.gf.focus_ffn_b1);
  mat("gf.focus_ffn.w2", p.gf.focus_ffn_w2, p.gf.focus_ffn_w2.rows());
  vec("gf.focus_ffn.b2", p.gf.focus_ffn_b2);
  mtn("mtn_v", p.mtn_v);
  mtn("mtn_gm", p.mtn_gm);
  mat("fusion.w", p.fusion.w, p.fusion.w.rows());
  vec("fusion.b", p.fusion.b);
  mat("classifier.w1", p.classifier.w1, p.classifier.w1.rows());
  vec("classifier.b1", p.classifier.b1);
  mat("classifier.w2", p.classifier.w2, p.classifier.w2.rows());
  vec("classifier.b2", p.classifier.b2);
  mat("classifier.w3", p.classifier.w3, p.classifier.w3.rows());
  vec("classifier.b3", p.classifier.b3);
  return refs;
}

// All-zero parameter set with the shapes implied by dims; doubles as the
// gradient accumulator.
template <class S>
ModelParams<S> make_params(const ModelDims& dims) {
  dims.validate();
  const Index d = dims.visual_dim;
  const Index df = dims.grained();
  const Index dgm = dims.multimodal();
  ModelParams<S> p;

  p.gf.glance_scc = ConvKernel<S>::zeros(3, d, d);
  p.gf.glance_attn = {Mat<S>::Zero(d, d), Mat<S>::Zero(d, d), Mat<S>::Zero(d, d),
                      Mat<S>::Zero(d, d)};
  p.gf.glance_ffn_w1 = Mat<S>::Zero(d, 4 * d);
  p.gf.glance_ffn_b1 = Vec<S>::Zero(4 * d);
  p.gf.glance_ffn_w2 = Mat<S>::Zero(4 * d, d);
  p.gf.glance_ffn_b2 = Vec<S>::Zero(d);
  p.gf.focus_expand_w = Mat<S>::Zero(d, df);
  p.gf.focus_expand_b = Vec<S>::Zero(df);
  p.gf.focus_scc = ConvKernel<S>::zeros(3, df, df);
  p.gf.focus_attn = {Mat<S>::Zero(df, df), Mat<S>::Zero(df, df), Mat<S>::Zero(df, df),
                     Mat<S>::Zero(df, df)};
  p.gf.focus_ffn_w1 = Mat<S>::Zero(df, 4 * df);
  p.gf.focus_ffn_b1 = Vec<S>::Zero(4 * df);
  p.gf.focus_ffn_w2 = Mat<S>::Zero(4 * df, df);
  p.gf.focus_ffn_b2 = Vec<S>::Zero(df);
  p.gf.focus_radius = dims.focus_radius;

  const auto make_mtn = [&](Index c) {
    MtnParams<S> m;
    for (auto& k : m.pyramid) k = ConvKernel<S>::zeros(3, c, c / 4);
    m.dilations = dims.dilations;
    m.nl_wq = Mat<S>::Zero(c, c / 4);
    m.nl_wk = Mat<S>::Zero(c, c / 4);
    m.nl_wv = Mat<S>::Zero(c, c / 4);
    m.nl_bias = Vec<S>::Zero(c / 4);
    return m;
  };
  p.mtn_v = make_mtn(d);
  p.mtn_gm = make_mtn(dgm);

  p.fusion.w = Mat<S>::Zero(dgm, dims.fused());
  p.fusion.b = Vec<S>::Zero(dims.fused());

  p.classifier.w1 = Mat<S>::Zero(dims.fused(), dims.hidden1);
  p.classifier.b1 = Vec<S>::Zero(dims.hidden1);
  p.classifier.w2 = Mat<S>::Zero(dims.hidden1, dims.hidden2);
  p.classifier.b2 = Vec<S>::Zero(dims.hidden2);
  p.classifier.w3 = Mat<S>::Zero(dims.hidden2, 1);
  p.classifier.b3 = Vec<S>::Zero(1);
  return p;
}

// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero,
// deterministic in seed.
template <class S>
ModelParams<S> init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams<S> p = make_params<S>(dims);
  Rng rng(seed);
  for (auto& ref : param_refs(p)) {
    if (!ref.mat) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(ref.fan_in));
    for (Index i = 0; i < ref.mat->rows(); ++i)
      for (Index j = 0; j < ref.mat->cols(); ++j)
        (*ref.mat)(i, j) = static_cast<S>(rng.uniform(-bound, bound));
  }
  return p;
}

template <class S>
void scale_params(ModelParams<S>& p, S factor) {
  for (auto& ref : param_refs(p)) {
    if (ref.mat) *ref.mat *= factor;
    if (ref.vec) *ref.vec *= factor;
  }
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

template <class S>
struct PipelineCache {
  GlanceFocusCache<S> gf;
  FeatureTensor<S> f_gf, f_gm, x_v, x_gm, fused;
  std::vector<MtnCache<S>> mtn_v, mtn_gm;
  Mat<S> mean;       // crop-averaged fused feature, [T x C_v]
  Vec<S> magnitudes; // [T]
};

// Everything the loss needs from one video.
template <class S>
struct VideoForward {
  PipelineCache<S> pipe;
  std::vector<Index> topk;
  S m_k = 0;
  Vec<S> snippet_scores;  // over topk, same order
  std::vector<ClassifierCache<S>> cls;
};

template <class S>
void pipeline_forward(const ModelParams<S>& params, const ModelDims& dims,
                      const FeatureTensor<S>& f, const Mat<S>& f_txt, PipelineCache<S>& cc) {
  if (f.n_crops() < 1 || f.snippets() < 1)
    throw ShapeError("pipeline: feature tensor must have n_crops >= 1 and T >= 1");
  if (f.dim() != dims.visual_dim)
    throw ShapeError("pipeline: visual feature dim " + std::to_string(f.dim()) +
                     " does not match configured dim " + std::to_string(dims.visual_dim));
  if (f_txt.cols() != dims.text_dim)
    throw ShapeError("pipeline: text feature dim " + std::to_string(f_txt.cols()) +
                     " does not match configured dim " + std::to_string(dims.text_dim));
  if (dims.text_dim > 0 && f_txt.rows() != f.snippets())
    throw ShapeError("pipeline: text has " + std::to_string(f_txt.rows()) +
                     " snippets, visual has " + std::to_string(f.snippets()));

  cc.f_gf = glance_focus_forward(f, params.gf, cc.gf);
  Mat<S> txt = f_txt;
  if (dims.text_dim == 0) txt = Mat<S>::Zero(f.snippets(), 0);
  cc.f_gm = concat_multimodal(cc.f_gf, tile_text_features(txt, f.n_crops()));

  const std::size_t n = f.crops.size();
  cc.mtn_v.resize(n);
  cc.mtn_gm.resize(n);
  cc.x_v.crops.resize(n);
  cc.x_gm.crops.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    cc.x_v.crops[c] = mtn_forward(f.crops[c], params.mtn_v, cc.mtn_v[c]);
    cc.x_gm.crops[c] = mtn_forward(cc.f_gm.crops[c], params.mtn_gm, cc.mtn_gm[c]);
  }
  cc.fused = fuse_forward(cc.x_gm, cc.x_v, params.fusion);
  cc.mean = cc.fused.crop_mean();
  cc.magnitudes = snippet_magnitudes(cc.fused);
}

template <class S>
VideoForward<S> forward_video(const ModelParams<S>& params, const ModelDims& dims,
                              const FeatureTensor<S>& f, const Mat<S>& f_txt,
                              const LossConfig& loss) {
  VideoForward<S> out;
  pipeline_forward(params, dims, f, f_txt, out.pipe);
  out.topk = select_topk(out.pipe.magnitudes, std::min<Index>(loss.topk, f.snippets()));
  S sum = S(0);
  for (Index t : out.topk) sum += out.pipe.magnitudes[t];
  out.m_k = sum / static_cast<S>(out.topk.size());
  out.snippet_scores.resize(static_cast<Index>(out.topk.size()));
  out.cls.resize(out.topk.size());
  for (std::size_t i = 0; i < out.topk.size(); ++i) {
    const Vec<S> row = out.pipe.mean.row(out.topk[i]).transpose();
    out.snippet_scores[static_cast<Index>(i)] =
        classifier_forward(row, params.classifier, static_cast<S>(loss.epsilon), out.cls[i]);
  }
  return out;
}

// Backward through the whole pipeline given gradients on the top-k snippet
// logits (dz3, one per selected snippet) and on m_k. Input gradients are
// discarded; parameter gradients accumulate into g.
template <class S>
void backward_video(const ModelParams<S>& params, const ModelDims& dims,
                    const FeatureTensor<S>& f, const VideoForward<S>& fwd,
                    const std::vector<S>& dz3, S dm_k, ModelParams<S>& g) {
  const Index t_len = f.snippets();
  const Index c_v = dims.fused();
  const S n_crops = static_cast<S>(f.n_crops());

  // Gradients w.r.t. the crop-averaged fused feature.
  Mat<S> dmean = Mat<S>::Zero(t_len, c_v);
  for (std::size_t i = 0; i < fwd.topk.size(); ++i) {
    const Vec<S> dx = classifier_backward(params.classifier, fwd.cls[i], dz3[i], g.classifier);
    dmean.row(fwd.topk[i]) += dx.transpose();
  }
  // m_k = mean over topk of ||mean_t||^2.
  const S dmag = dm_k / static_cast<S>(fwd.topk.size());
  for (Index t : fwd.topk) dmean.row(t) += S(2) * dmag * fwd.pipe.mean.row(t);

  // Crop mean spreads gradient uniformly over crops.
  FeatureTensor<S> dfused;
  dfused.crops.assign(f.crops.size(), dmean / n_crops);

  FeatureTensor<S> dx_gm = fuse_backward(fwd.pipe.x_gm, params.fusion, dfused, g.fusion);
  const FeatureTensor<S>& dx_v = dfused;  // residual identity

  FeatureTensor<S> df_gf;
  df_gf.crops.resize(f.crops.size());
  const Index df_dim = dims.grained();
  for (std::size_t c = 0; c < f.crops.size(); ++c) {
    mtn_backward(params.mtn_v, fwd.pipe.mtn_v[c], dx_v.crops[c], g.mtn_v);  // input grad unused
    Mat<S> df_gm = mtn_backward(params.mtn_gm, fwd.pipe.mtn_gm[c], dx_gm.crops[c], g.mtn_gm);
    df_gf.crops[c] = df_gm.leftCols(df_dim);  // text slice is data, not learned
  }
  glance_focus_backward(params.gf, fwd.pipe.gf, df_gf, g.gf);
}

// ---------------------------------------------------------------------------
// Batch objective: L = alpha * L_v + L_s over a mixed normal/abnormal batch.
// ---------------------------------------------------------------------------

template <class S>
struct BatchVideoRef {
  const FeatureTensor<S>* features = nullptr;
  const Mat<S>* text = nullptr;
  int label = 0;
};

template <class S>
struct BatchLoss {
  S total = 0, l_v = 0, l_s = 0;
  std::vector<S> m_k;                           // per video
  std::vector<std::vector<Index>> topk;         // per video
  std::vector<std::pair<int, int>> active_pairs;  // hinge-active (abnormal, normal)
  // ReLU sign masks and clamp flags of the scored snippets; together with
  // topk and active_pairs this is the full piecewise-smoothness signature of
  // the objective, which the gradient checker uses to reject kink-straddling
  // finite-difference probes.
  std::vector<std::uint8_t> kink_signature;
};

template <class S>
BatchLoss<S> batch_loss_impl(const ModelParams<S>& params, const ModelDims& dims,
                             const LossConfig& loss, const std::vector<BatchVideoRef<S>>& videos,
                             ModelParams<S>* grads) {
  if (videos.empty()) throw ShapeError("batch_loss: empty batch");
  const S eps = static_cast<S>(loss.epsilon);
  const S margin = static_cast<S>(loss.margin);
  const S alpha = static_cast<S>(loss.alpha);

  std::vector<VideoForward<S>> fwd;
  fwd.reserve(videos.size());
  BatchLoss<S> out;
  for (const auto& v : videos) {
    fwd.push_back(forward_video(params, dims, *v.features, *v.text, loss));
    out.m_k.push_back(fwd.back().m_k);
    out.topk.push_back(fwd.back().topk);
    out.l_s += snippet_ce_loss(fwd.back().snippet_scores, v.label, eps);
    for (const auto& cls : fwd.back().cls) {
      for (Index i = 0; i < cls.z1.size(); ++i)
        out.kink_signature.push_back(cls.z1[i] > S(0) ? 1 : 0);
      for (Index i = 0; i < cls.z2.size(); ++i)
        out.kink_signature.push_back(cls.z2[i] > S(0) ? 1 : 0);
      out.kink_signature.push_back(cls.clamped ? 1 : 0);
    }
  }
  for (std::size_t i = 0; i < videos.size(); ++i)
    for (std::size_t j = 0; j < videos.size(); ++j) {
      if (videos[i].label != 1 || videos[j].label != 0) continue;
      const S l = margin - (out.m_k[i] - out.m_k[j]);
      if (l > S(0)) {
        out.l_v += l;
        out.active_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  out.total = total_loss(out.l_v, out.l_s, alpha);

  if (grads) {
    std::vector<S> dm(videos.size(), S(0));
    for (const auto& [i, j] : out.active_pairs) {
      dm[static_cast<std::size_t>(i)] -= alpha;
      dm[static_cast<std::size_t>(j)] += alpha;
    }
    for (std::size_t i = 0; i < videos.size(); ++i) {
      const auto& fv = fwd[i];
      std::vector<S> dz3(fv.topk.size(), S(0));
      for (std::size_t s = 0; s < fv.topk.size(); ++s) {
        const auto& cls = fv.cls[s];
        // d BCE / d z3 = p - y when the score is not clamped, else 0.
        dz3[s] = cls.clamped ? S(0) : cls.p - static_cast<S>(videos[i].label);
      }
      backward_video(params, dims, *videos[i].features, fv, dz3, dm[i], *grads);
    }
  }
  return out;
}

template <class S>
BatchLoss<S> batch_loss(const ModelParams<S>& params, const ModelDims& dims,
                        const LossConfig& loss, const std::vector<BatchVideoRef<S>>& videos) {
  return batch_loss_impl<S>(params, dims, loss, videos, nullptr);
}

template <class S>
BatchLoss<S> batch_loss_grad(const ModelParams<S>& params, const ModelDims& dims,
                             const LossConfig& loss, const std::vector<BatchVideoRef<S>>& videos,
                             ModelParams<S>& grads) {
  return batch_loss_impl<S>(params, dims, loss, videos, &grads);
}

}  // namespace gmfv
