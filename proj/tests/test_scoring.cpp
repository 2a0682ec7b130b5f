#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "gmfv/rng.hpp"
#include "gmfv/scoring.hpp"

using namespace gmfv;

namespace {

Vec<double> random_vec(Index n, Rng& rng, double scale = 1.0) {
  Vec<double> v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// Sort-based oracle: indices ordered by (magnitude desc, index asc).
std::vector<Index> topk_oracle(const Vec<double>& m, Index k) {
  std::vector<std::pair<double, Index>> v;
  for (Index i = 0; i < m.size(); ++i) v.emplace_back(m[i], i);
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  std::vector<Index> out;
  for (Index i = 0; i < k; ++i) out.push_back(v[static_cast<std::size_t>(i)].second);
  return out;
}

}  // namespace

TEST_CASE("snippet_magnitudes: hand cases") {
  FeatureTensor<double> single(1, 1, 2);
  single.crops[0] << 3, 4;
  CHECK(snippet_magnitudes(single)[0] == doctest::Approx(25.0));

  FeatureTensor<double> two(2, 1, 2);
  two.crops[0] << 1, 0;
  two.crops[1] << -1, 0;
  CHECK(snippet_magnitudes(two)[0] == doctest::Approx(0.0));  // crops cancel under averaging
}

TEST_CASE("snippet_magnitudes: matches a loop-based oracle on [10,32,64]") {
  Rng rng(7);
  FeatureTensor<double> x(10, 32, 64);
  for (auto& c : x.crops)
    for (Index i = 0; i < 32; ++i)
      for (Index j = 0; j < 64; ++j) c(i, j) = rng.normal();

  const Vec<double> got = snippet_magnitudes(x);
  for (Index t = 0; t < 32; ++t) {
    double norm2 = 0;
    for (Index d = 0; d < 64; ++d) {
      double mean = 0;
      for (const auto& c : x.crops) mean += c(t, d);
      mean /= 10.0;
      norm2 += mean * mean;
    }
    CHECK(got[t] == doctest::Approx(norm2).epsilon(1e-12));
  }
}

TEST_CASE("select_topk: hand cases and tie break") {
  Vec<double> m(3);
  m << 5, 1, 9;
  CHECK(select_topk(m, 2) == std::vector<Index>{2, 0});

  Vec<double> ties(3);
  ties << 7, 7, 7;
  CHECK(select_topk(ties, 2) == std::vector<Index>{0, 1});

  CHECK_THROWS_AS(select_topk(m, 4), ShapeError);
  CHECK_THROWS_AS(select_topk(m, 0), ShapeError);
}

TEST_CASE("select_topk and topk_magnitude: 1000 random cases vs sort oracle") {
  Rng rng(123);
  for (int iter = 0; iter < 1000; ++iter) {
    const Index t_len = 1 + static_cast<Index>(rng.below(40));
    const Index k = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t_len)));
    Vec<double> m(t_len);
    for (Index i = 0; i < t_len; ++i)
      m[i] = rng.below(4) == 0 ? static_cast<double>(rng.below(5))  // force ties
                               : std::abs(rng.normal()) * 10;

    const auto got = select_topk(m, k);
    const auto want = topk_oracle(m, k);
    CHECK(got == want);

    double sum = 0;
    for (Index i : want) sum += m[i];
    CHECK(topk_magnitude(m, k) == sum / static_cast<double>(k));  // exact: same order
  }
}

TEST_CASE("topk_magnitude: k=T is the mean, k=1 is the max") {
  Vec<double> m(3);
  m << 25, 0, 0;
  CHECK(topk_magnitude(m, 1) == 25.0);
  Vec<double> all(3);
  all << 4, 2, 6;
  CHECK(topk_magnitude(all, 3) == doctest::Approx(4.0));

  Rng rng(5);
  const Vec<double> r = random_vec(17, rng).cwiseAbs();
  CHECK(topk_magnitude(r, 17) == doctest::Approx(r.mean()).epsilon(1e-15));
  CHECK(topk_magnitude(r, 1) == r.maxCoeff());
}

TEST_CASE("margin_loss_pair: hinge cases") {
  CHECK(margin_loss_pair(150.0, 10.0, 1, 0, 100.0) == 0.0);
  CHECK(margin_loss_pair(42.0, 42.0, 1, 0, 100.0) == 100.0);
  CHECK(margin_loss_pair(5.0, 500.0, 0, 0, 100.0) == 0.0);
  CHECK(margin_loss_pair(5.0, 500.0, 0, 1, 100.0) == 0.0);
  CHECK(margin_loss_pair(5.0, 500.0, 1, 1, 100.0) == 0.0);

  // Non-negative, piecewise linear in the gap, zero iff gap >= margin.
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const double gap = rng.uniform(-300, 300);
    const double l = margin_loss_pair(gap, 0.0, 1, 0, 100.0);
    CHECK(l >= 0.0);
    CHECK(l == std::max(0.0, 100.0 - gap));
    CHECK((l == 0.0) == (gap >= 100.0));
  }
}

TEST_CASE("batch_margin_loss: hand cases and the O(B^2) oracle") {
  CHECK(batch_margin_loss<double>({{10.0, 0}, {20.0, 0}}, 100.0) == 0.0);
  CHECK(batch_margin_loss<double>({{50.0, 1}, {10.0, 0}}, 100.0) == doctest::Approx(60.0));

  Rng rng(31);
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<std::pair<double, int>> batch;
    for (std::size_t i = 0; i < n; ++i)
      batch.emplace_back(std::abs(rng.normal()) * 120, static_cast<int>(rng.below(2)));

    double want = 0;
    for (const auto& [mi, yi] : batch)
      for (const auto& [mj, yj] : batch)
        if (yi == 1 && yj == 0) want += std::max(0.0, 100.0 - (mi - mj));
    CHECK(batch_margin_loss(batch, 100.0) == want);

    // Order invariance.
    auto shuffled = batch;
    rng.shuffle(shuffled.begin(), shuffled.end());
    CHECK(batch_margin_loss(shuffled, 100.0) == doctest::Approx(want).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

namespace {

ClassifierParams<double> zero_classifier(Index in, Index h1, Index h2) {
  ClassifierParams<double> p;
  p.w1 = Mat<double>::Zero(in, h1);
  p.b1 = Vec<double>::Zero(h1);
  p.w2 = Mat<double>::Zero(h1, h2);
  p.b2 = Vec<double>::Zero(h2);
  p.w3 = Mat<double>::Zero(h2, 1);
  p.b3 = Vec<double>::Zero(1);
  return p;
}

}  // namespace

TEST_CASE("classifier: zero parameters give 0.5") {
  const auto p = zero_classifier(4, 8, 3);
  ClassifierCache<double> cc;
  Vec<double> x(4);
  x << 1, -2, 3, 4;
  CHECK(classifier_forward(x, p, 1e-8, cc) == doctest::Approx(0.5));
}

TEST_CASE("classifier: positive 1-dim stack is monotone") {
  auto p = zero_classifier(1, 1, 1);
  p.w1(0, 0) = 0.9;
  p.w2(0, 0) = 1.3;
  p.w3(0, 0) = 0.7;
  ClassifierCache<double> cc;
  double prev = -1;
  for (double v = -3; v <= 3; v += 0.25) {
    Vec<double> x(1);
    x << v;
    const double s = classifier_forward(x, p, 1e-8, cc);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("classifier: analytic gradient matches finite differences") {
  Rng rng(77);
  ClassifierParams<double> p = zero_classifier(5, 7, 3);
  for (Mat<double>* w : {&p.w1, &p.w2, &p.w3})
    for (Index i = 0; i < w->size(); ++i) w->data()[i] = rng.normal() * 0.4;
  for (Vec<double>* b : {&p.b1, &p.b2, &p.b3})
    for (Index i = 0; i < b->size(); ++i) (*b)[i] = rng.normal() * 0.1;
  Vec<double> x = random_vec(5, rng);

  ClassifierCache<double> cc;
  classifier_forward(x, p, 1e-8, cc);
  auto g = zero_classifier(5, 7, 3);
  // d p / d z3 for an unclamped sigmoid output.
  const Vec<double> dx = classifier_backward(p, cc, cc.p_raw * (1 - cc.p_raw), g);

  const double h = 1e-6;
  double max_rel = 0;
  const auto probe = [&](double* w, double analytic) {
    const double saved = *w;
    *w = saved + h;
    const double up = classifier_forward(x, p, 1e-8, cc);
    *w = saved - h;
    const double dn = classifier_forward(x, p, 1e-8, cc);
    *w = saved;
    const double num = (up - dn) / (2 * h);
    max_rel = std::max(max_rel,
                       std::abs(num - analytic) / std::max({1.0, std::abs(num), std::abs(analytic)}));
  };
  for (Index i = 0; i < p.w1.size(); ++i) probe(p.w1.data() + i, g.w1.data()[i]);
  for (Index i = 0; i < p.b2.size(); ++i) probe(p.b2.data() + i, g.b2[i]);
  probe(p.b3.data(), g.b3[0]);
  for (Index i = 0; i < x.size(); ++i) probe(x.data() + i, dx[i]);
  CHECK(max_rel < 1e-4);
}

// ---------------------------------------------------------------------------
// Cross entropy and total loss
// ---------------------------------------------------------------------------

TEST_CASE("snippet_ce_loss: analytic values") {
  const double eps = 1e-8;
  Vec<double> confident(5);
  confident.setConstant(1.0 - eps);
  CHECK(snippet_ce_loss(confident, 1, eps) == doctest::Approx(5 * eps).epsilon(1e-3));

  Vec<double> half(1);
  half << 0.5;
  CHECK(snippet_ce_loss(half, 0, eps) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("snippet_ce_loss: 1000 random cases vs elementwise BCE oracle") {
  Rng rng(55);
  const double eps = 1e-8;
  for (int iter = 0; iter < 1000; ++iter) {
    const Index k = 1 + static_cast<Index>(rng.below(8));
    const int y = static_cast<int>(rng.below(2));
    Vec<double> scores(k);
    for (Index i = 0; i < k; ++i) scores[i] = rng.uniform(1e-12, 1.0 - 1e-12);

    double want = 0;
    for (Index i = 0; i < k; ++i) {
      const double p = std::clamp(scores[i], eps, 1.0 - eps);
      want += -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
    }
    CHECK(snippet_ce_loss(scores, y, eps) == want);
    CHECK(snippet_ce_loss(scores, y, eps) >= 0.0);
  }
}

TEST_CASE("total_loss: composition") {
  CHECK(total_loss(123.0, 0.75, 0.0) == 0.75);
  CHECK(total_loss(1000.0, 0.5, 1e-4) == doctest::Approx(0.6));
  // Linear in L_v at fixed L_s.
  CHECK(total_loss(10.0, 2.0, 0.5) + total_loss(6.0, 0.0, 0.5) ==
        doctest::Approx(total_loss(16.0, 2.0, 0.5)));
}
