#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gmfv/glance_focus.hpp"
#include "gmfv/model.hpp"
#include "gmfv/rng.hpp"

using namespace gmfv;

namespace {

Mat<double> random_mat(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

ModelDims tiny_dims(Index d = 8, Index df = 8, Index dt = 4) {
  ModelDims dims;
  dims.visual_dim = d;
  dims.grained_dim = df;
  dims.text_dim = dt;
  dims.hidden1 = 8;
  dims.hidden2 = 4;
  return dims;
}

// Independent full-attention oracle: per-row softmax over all positions.
Mat<double> naive_attention(const Mat<double>& x, const Mat<double>& wq, const Mat<double>& wk,
                            const Mat<double>& wv) {
  const Mat<double> q = x * wq, k = x * wk, v = x * wv;
  const double scale = 1.0 / std::sqrt(double(q.cols()));
  Mat<double> out = Mat<double>::Zero(x.rows(), v.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<double> s(x.rows());
    double mx = -1e300;
    for (Index j = 0; j < x.rows(); ++j) {
      s[j] = q.row(i).dot(k.row(j)) * scale;
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (Index j = 0; j < x.rows(); ++j) {
      s[j] = std::exp(s[j] - mx);
      z += s[j];
    }
    for (Index j = 0; j < x.rows(); ++j) out.row(i) += (s[j] / z) * v.row(j);
  }
  return out;
}

}  // namespace

TEST_CASE("scc_forward: zero kernel is the identity") {
  const auto x = random_mat(5, 3, 1);
  const auto k = ConvKernel<double>::zeros(3, 3, 3);
  CHECK(scc_forward(x, k) == x);
}

TEST_CASE("scc_forward: identity tap doubles the input") {
  Mat<double> x(3, 1);
  x << 1, 2, 3;
  auto k = ConvKernel<double>::zeros(3, 1, 1);
  k.taps[1](0, 0) = 1.0;  // center tap
  const Mat<double> y = scc_forward(x, k);
  CHECK(y(0, 0) == doctest::Approx(2.0));
  CHECK(y(1, 0) == doctest::Approx(4.0));
  CHECK(y(2, 0) == doctest::Approx(6.0));
}

TEST_CASE("scc_forward: the convolution part is linear") {
  auto k = ConvKernel<double>::zeros(3, 4, 4);
  for (auto& tap : k.taps) tap = random_mat(4, 4, 17, 0.5);
  k.bias.setZero();  // bias breaks additivity; linearity is about the conv
  const auto a = random_mat(6, 4, 2);
  const auto b = random_mat(6, 4, 3);
  const Mat<double> lhs = scc_forward<double>(a + b, k) - (a + b);
  const Mat<double> rhs = (scc_forward(a, k) - a) + (scc_forward(b, k) - b);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scc_forward: channel mismatch is rejected") {
  const auto x = random_mat(4, 3, 5);
  const auto k = ConvKernel<double>::zeros(3, 4, 4);
  CHECK_THROWS_AS(scc_forward(x, k), ShapeError);
}

TEST_CASE("conv1d: dilation widens the receptive field exactly") {
  const Index t_len = 15, c = 4;
  const auto x = random_mat(t_len, c, 7);
  auto k = ConvKernel<double>::zeros(3, c, c);
  for (auto& tap : k.taps) tap = random_mat(c, c, 23, 0.3);
  for (Index dil : {1, 2, 4}) {
    const Mat<double> base = conv1d_forward(x, k, dil);
    for (Index t : {Index(0), t_len / 2, t_len - 1}) {
      Mat<double> xp = x;
      for (Index tp = 0; tp < t_len; ++tp)
        if (std::abs(tp - t) > dil) xp.row(tp).array() += 5.0;
      const Mat<double> pert = conv1d_forward(xp, k, dil);
      CHECK(pert.row(t) == base.row(t));  // outside {t-d, t, t+d} nothing changes
    }
  }
}

TEST_CASE("glance_block: single snippet is handled and deterministic") {
  const auto dims = tiny_dims();
  auto params = init_params<double>(dims, 42);
  const auto x = random_mat(1, dims.visual_dim, 9);
  GlanceCache<double> cc;
  const Mat<double> y1 = glance_block_forward(x, params.gf, cc);
  const Mat<double> y2 = glance_block_forward(x, params.gf, cc);
  CHECK(y1.rows() == 1);
  CHECK(y1.cols() == dims.visual_dim);
  CHECK(y1 == y2);
  // Attention over a single token has weight exactly 1.
  CHECK(cc.attn.a(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("glance_block: permutation equivariant with zeroed SCC") {
  const auto dims = tiny_dims();
  auto params = init_params<double>(dims, 5);
  for (auto& tap : params.gf.glance_scc.taps) tap.setZero();
  params.gf.glance_scc.bias.setZero();

  const Index t_len = 7;
  const auto x = random_mat(t_len, dims.visual_dim, 13);
  std::vector<Index> perm{3, 0, 6, 2, 5, 1, 4};
  Mat<double> xp(t_len, dims.visual_dim);
  for (Index i = 0; i < t_len; ++i) xp.row(i) = x.row(perm[i]);

  GlanceCache<double> cc;
  const Mat<double> y = glance_block_forward(x, params.gf, cc);
  const Mat<double> yp = glance_block_forward(xp, params.gf, cc);
  for (Index i = 0; i < t_len; ++i)
    CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("glance_block: zero value/output and FFN weights reduce to scc") {
  const auto dims = tiny_dims();
  auto params = init_params<double>(dims, 21);
  params.gf.glance_attn.wv.setZero();
  params.gf.glance_attn.wo.setZero();
  params.gf.glance_ffn_w1.setZero();
  params.gf.glance_ffn_b1.setZero();
  params.gf.glance_ffn_w2.setZero();
  params.gf.glance_ffn_b2.setZero();
  const auto x = random_mat(6, dims.visual_dim, 31);
  GlanceCache<double> cc;
  CHECK(glance_block_forward(x, params.gf, cc) == scc_forward(x, params.gf.glance_scc));
}

TEST_CASE("focus_block: radius 0 with zero SCC taps acts per clip") {
  auto dims = tiny_dims();
  dims.focus_radius = 0;
  auto params = init_params<double>(dims, 3);
  for (auto& tap : params.gf.focus_scc.taps) tap.setZero();
  params.gf.focus_scc.bias.setZero();

  const auto x = random_mat(5, dims.visual_dim, 8);
  FocusCache<double> cc;
  const Mat<double> base = focus_block_forward(x, params.gf, cc);
  CHECK(cc.attn.a.isApprox(Mat<double>::Identity(5, 5)));

  Mat<double> xp = x;
  xp.row(3).array() += 2.0;  // only row 3 may move
  const Mat<double> pert = focus_block_forward(xp, params.gf, cc);
  for (Index t = 0; t < 5; ++t) {
    if (t == 3)
      CHECK(pert.row(t) != base.row(t));
    else
      CHECK(pert.row(t) == base.row(t));
  }
}

TEST_CASE("focus_block: locality is radius + SCC half-width") {
  auto dims = tiny_dims();
  dims.focus_radius = 1;
  auto params = init_params<double>(dims, 77);
  const Index t_len = 9;
  const auto x = random_mat(t_len, dims.visual_dim, 12);

  FocusCache<double> cc;
  const Mat<double> base = focus_block_forward(x, params.gf, cc);
  const Index t = 4;

  // SCC width 3 adds one step on each side of the attention window.
  Mat<double> xp = x;
  for (Index tp = 0; tp < t_len; ++tp)
    if (std::abs(tp - t) > 2) xp.row(tp).array() += 3.0;
  CHECK(focus_block_forward(xp, params.gf, cc).row(t) == base.row(t));

  // With the SCC taps zeroed the receptive field is exactly the radius.
  for (auto& tap : params.gf.focus_scc.taps) tap.setZero();
  params.gf.focus_scc.bias.setZero();
  const Mat<double> base0 = focus_block_forward(x, params.gf, cc);
  Mat<double> xq = x;
  for (Index tp = 0; tp < t_len; ++tp)
    if (std::abs(tp - t) > 1) xq.row(tp).array() += 3.0;
  CHECK(focus_block_forward(xq, params.gf, cc).row(t) == base0.row(t));
}

TEST_CASE("focus_block: radius >= T-1 matches the full-attention oracle") {
  auto dims = tiny_dims();
  const Index t_len = 6;
  dims.focus_radius = t_len;  // window covers everything
  auto params = init_params<double>(dims, 55);
  const auto x = random_mat(t_len, dims.visual_dim, 4);

  FocusCache<double> cc;
  const Mat<double> got = focus_block_forward(x, params.gf, cc);

  // Rebuild the block with the independent dense-attention oracle.
  Mat<double> e = x * params.gf.focus_expand_w;
  e.rowwise() += params.gf.focus_expand_b.transpose();
  const Mat<double> s = scc_forward(e, params.gf.focus_scc);
  const Mat<double> ctx =
      naive_attention(s, params.gf.focus_attn.wq, params.gf.focus_attn.wk, params.gf.focus_attn.wv);
  const Mat<double> u = s + ctx * params.gf.focus_attn.wo;
  FfnCache<double> ffn;
  const Mat<double> want = u + ffn_forward(u, params.gf.focus_ffn_w1, params.gf.focus_ffn_b1,
                                           params.gf.focus_ffn_w2, params.gf.focus_ffn_b2, ffn);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("glance_focus_forward: identical crops give identical outputs") {
  const auto dims = tiny_dims();
  auto params = init_params<double>(dims, 1);
  const auto crop = random_mat(10, dims.visual_dim, 2);
  FeatureTensor<double> f;
  f.crops = {crop, crop};
  GlanceFocusCache<double> cc;
  const auto out = glance_focus_forward(f, params.gf, cc);
  CHECK(out.crops[0] == out.crops[1]);
}

TEST_CASE("glance_focus_forward: [10,32,64] in gives [10,32,64] out") {
  ModelDims dims;
  dims.visual_dim = 64;
  dims.grained_dim = 64;
  dims.text_dim = 0;
  auto params = init_params<float>(dims, 6);
  FeatureTensor<float> f(10, 32, 64);
  Rng rng(40);
  for (auto& c : f.crops)
    for (Index i = 0; i < 32; ++i)
      for (Index j = 0; j < 64; ++j) c(i, j) = static_cast<float>(rng.normal());
  GlanceFocusCache<float> cc;
  const auto out = glance_focus_forward(f, params.gf, cc);
  CHECK(out.n_crops() == 10);
  CHECK(out.snippets() == 32);
  CHECK(out.dim() == 64);
  CHECK(out.all_finite());
}

TEST_CASE("glance_focus_forward: stays finite for inputs up to +-1e3") {
  const auto dims = tiny_dims();
  auto params = init_params<float>(dims, 19);
  FeatureTensor<float> f(2, 12, dims.visual_dim);
  Rng rng(20);
  for (auto& c : f.crops)
    for (Index i = 0; i < 12; ++i)
      for (Index j = 0; j < dims.visual_dim; ++j)
        c(i, j) = static_cast<float>(rng.uniform(-1e3, 1e3));
  GlanceFocusCache<float> cc;
  CHECK(glance_focus_forward(f, params.gf, cc).all_finite());
}

TEST_CASE("glance_focus_forward: dimension mismatch names the stage") {
  const auto dims = tiny_dims();
  auto params = init_params<double>(dims, 1);
  FeatureTensor<double> f(1, 4, dims.visual_dim + 1);
  GlanceFocusCache<double> cc;
  try {
    glance_focus_forward(f, params.gf, cc);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("glance_focus") != std::string::npos);
  }
}
