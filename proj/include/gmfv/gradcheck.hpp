#pragma once

#include "gmfv/model.hpp"

// Central finite differences against the analytic gradients of the full
// objective. Meant to run at double precision on tiny dims.

namespace gmfv {

struct GradCheckResult {
  double max_rel_err = 0;
  Index coords_checked = 0;
  Index coords_skipped = 0;  // top-k set or hinge activity moved under +-eps
};

namespace detail {

inline bool same_selection(const BatchLoss<double>& a, const BatchLoss<double>& b) {
  return a.topk == b.topk && a.active_pairs == b.active_pairs &&
         a.kink_signature == b.kink_signature;
}

}  // namespace detail

// Relative error uses a unit floor in the denominator: |a - n| / max(1, |a|, |n|).
// Coordinates whose perturbation flips any non-smooth decision (top-k
// selection, hinge activity, a ReLU sign or a clamp) are reported as skipped,
// not failed: a central difference straddling such a point does not estimate
// the one-sided derivative the analytic pass computes.
inline GradCheckResult gradient_check(ModelParams<double>& params, const ModelDims& dims,
                                      const LossConfig& loss,
                                      const std::vector<BatchVideoRef<double>>& videos,
                                      double eps = 1e-5, Index n_coords = 200,
                                      std::uint64_t seed = 0) {
  ModelParams<double> grads = make_params<double>(dims);
  const BatchLoss<double> base = batch_loss_grad(params, dims, loss, videos, grads);

  // Flatten coordinate pointers in traversal order.
  std::vector<double*> coords, grad_coords;
  {
    auto pr = param_refs(params);
    auto gr = param_refs(grads);
    for (std::size_t i = 0; i < pr.size(); ++i) {
      const auto push = [&](auto* w, auto* g) {
        for (Index k = 0; k < w->size(); ++k) {
          coords.push_back(w->data() + k);
          grad_coords.push_back(g->data() + k);
        }
      };
      if (pr[i].mat)
        push(pr[i].mat, gr[i].mat);
      else
        push(pr[i].vec, gr[i].vec);
    }
  }

  const Index total = static_cast<Index>(coords.size());
  const Index want = std::min<Index>(n_coords, total);
  Rng rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index(0));
  rng.shuffle(order.begin(), order.end());

  GradCheckResult res;
  for (Index pick = 0; pick < total && res.coords_checked < want; ++pick) {
    const Index c = order[static_cast<std::size_t>(pick)];
    double* w = coords[static_cast<std::size_t>(c)];
    const double saved = *w;
    const double h = eps * std::max(1.0, std::abs(saved));

    *w = saved + h;
    const BatchLoss<double> plus = batch_loss(params, dims, loss, videos);
    *w = saved - h;
    const BatchLoss<double> minus = batch_loss(params, dims, loss, videos);
    *w = saved;

    if (!detail::same_selection(base, plus) || !detail::same_selection(base, minus)) {
      ++res.coords_skipped;
      continue;
    }
    const double numeric = (plus.total - minus.total) / (2 * h);
    const double analytic = *grad_coords[static_cast<std::size_t>(c)];
    const double rel = std::abs(analytic - numeric) /
                       std::max({1.0, std::abs(analytic), std::abs(numeric)});
    res.max_rel_err = std::max(res.max_rel_err, rel);
    ++res.coords_checked;
  }
  return res;
}

}  // namespace gmfv
