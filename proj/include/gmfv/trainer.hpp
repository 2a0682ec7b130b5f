#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "json.hpp"

#include "gmfv/checkpoint_io.hpp"
#include "gmfv/io.hpp"
#include "gmfv/model.hpp"

namespace gmfv {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 5e-3;
  Index batch_size = 64;  // videos per step, half normal half abnormal
  Index epochs = 50;
  std::uint64_t seed = 42;
  std::string optimizer = "adam";
  LossConfig loss;
  ModelDims dims;

  void validate() const {
    if (learning_rate < 0) throw TrainError("config: learning_rate must be >= 0");
    if (batch_size < 2 || batch_size % 2 != 0)
      throw TrainError("config: batch_size must be even and >= 2");
    if (epochs < 0) throw TrainError("config: epochs must be >= 0");
    if (optimizer != "adam") throw TrainError("config: unknown optimizer '" + optimizer + "'");
    if (loss.topk < 1) throw TrainError("config: k must be >= 1");
    if (loss.margin <= 0) throw TrainError("config: margin must be > 0");
    if (loss.alpha < 0 || !std::isfinite(loss.alpha))
      throw TrainError("config: alpha must be finite and >= 0");
    dims.validate();
  }
};

// ---------------------------------------------------------------------------
// Dataset loading (manifest paths resolve relative to the manifest directory)
// ---------------------------------------------------------------------------

template <class S>
struct LoadedVideo {
  FeatureTensor<S> features;
  Mat<S> text;
  VideoRecord record;
};

template <class S>
LoadedVideo<S> load_video(const VideoRecord& rec, const std::filesystem::path& base_dir,
                          const ModelDims& dims) {
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
  };
  LoadedVideo<S> v;
  v.record = rec;
  v.features = read_feature_file(resolve(rec.feature_path)).as_tensor().template cast<S>();
  if (!v.features.all_finite())
    throw ShapeError("video '" + rec.video_id + "': non-finite visual features");
  if (v.features.dim() != dims.visual_dim)
    throw ShapeError("video '" + rec.video_id + "': visual dim " +
                     std::to_string(v.features.dim()) + " does not match configured dim " +
                     std::to_string(dims.visual_dim));
  const Index t_len = v.features.snippets();
  if (rec.num_frames <= kFramesPerSnippet * (t_len - 1) ||
      rec.num_frames > kFramesPerSnippet * t_len)
    throw ShapeError("video '" + rec.video_id + "': num_frames " +
                     std::to_string(rec.num_frames) + " inconsistent with T=" +
                     std::to_string(t_len));
  if (dims.text_dim > 0) {
    v.text = read_feature_file(resolve(rec.text_path)).as_matrix().template cast<S>();
    if (!v.text.allFinite())
      throw ShapeError("video '" + rec.video_id + "': non-finite text features");
    if (v.text.cols() != dims.text_dim || v.text.rows() != t_len)
      throw ShapeError("video '" + rec.video_id + "': text shape [" +
                       std::to_string(v.text.rows()) + " x " + std::to_string(v.text.cols()) +
                       "] does not match T=" + std::to_string(t_len) + ", D_t=" +
                       std::to_string(dims.text_dim));
  } else {
    v.text = Mat<S>(t_len, 0);
  }
  return v;
}

template <class S>
std::vector<LoadedVideo<S>> load_dataset(const Manifest& manifest,
                                         const std::filesystem::path& base_dir,
                                         const ModelDims& dims) {
  std::vector<LoadedVideo<S>> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) out.push_back(load_video<S>(rec, base_dir, dims));
  return out;
}

// ---------------------------------------------------------------------------
// Adam with coupled weight decay (decay added to the gradient).
// ---------------------------------------------------------------------------

template <class S>
struct AdamState {
  ModelParams<S> m, v;
  std::int64_t step = 0;

  static AdamState zeros(const ModelDims& dims) {
    return {make_params<S>(dims), make_params<S>(dims), 0};
  }
};

template <class S>
void adam_update(ModelParams<S>& params, ModelParams<S>& grads, AdamState<S>& state, S lr,
                 S weight_decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  state.step += 1;
  const S c1 = S(1) - static_cast<S>(std::pow(kBeta1, static_cast<double>(state.step)));
  const S c2 = S(1) - static_cast<S>(std::pow(kBeta2, static_cast<double>(state.step)));

  auto pr = param_refs(params);
  auto gr = param_refs(grads);
  auto mr = param_refs(state.m);
  auto vr = param_refs(state.v);
  const auto update = [&](auto& w, auto& g, auto& m, auto& v) {
    g += weight_decay * w;
    m = S(kBeta1) * m + (S(1) - S(kBeta1)) * g;
    v = (S(kBeta2) * v.array() + (S(1) - S(kBeta2)) * g.array().square()).matrix();
    w -= (lr * (m.array() / c1) / ((v.array() / c2).sqrt() + S(kEps))).matrix();
  };
  for (std::size_t i = 0; i < pr.size(); ++i) {
    if (pr[i].mat)
      update(*pr[i].mat, *gr[i].mat, *mr[i].mat, *vr[i].mat);
    else
      update(*pr[i].vec, *gr[i].vec, *mr[i].vec, *vr[i].vec);
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

template <class S>
struct StepRecord {
  S total = 0, l_v = 0, l_s = 0;
};

template <class S>
StepRecord<S> train_step(ModelParams<S>& params, AdamState<S>& state,
                         const std::vector<const LoadedVideo<S>*>& batch_normal,
                         const std::vector<const LoadedVideo<S>*>& batch_abnormal,
                         const TrainConfig& cfg) {
  if (batch_normal.size() != batch_abnormal.size() || batch_normal.empty())
    throw TrainError("train_step: sub-batches must be equal-sized and non-empty");

  std::vector<BatchVideoRef<S>> videos;
  videos.reserve(batch_normal.size() + batch_abnormal.size());
  for (const auto* v : batch_abnormal) videos.push_back({&v->features, &v->text, 1});
  for (const auto* v : batch_normal) videos.push_back({&v->features, &v->text, 0});

  ModelParams<S> grads = make_params<S>(cfg.dims);
  const BatchLoss<S> loss = batch_loss_grad(params, cfg.dims, cfg.loss, videos, grads);

  bool finite = std::isfinite(static_cast<double>(loss.total)) &&
                std::isfinite(static_cast<double>(loss.l_v)) &&
                std::isfinite(static_cast<double>(loss.l_s));
  for (const S m : loss.m_k) finite = finite && std::isfinite(static_cast<double>(m));
  if (!finite) {
    S max_w = 0, max_g = 0;
    for (auto& r : param_refs(params))
      max_w = std::max(max_w, r.mat ? r.mat->cwiseAbs().maxCoeff() : r.vec->cwiseAbs().maxCoeff());
    for (auto& r : param_refs(grads))
      max_g = std::max(max_g, r.mat ? r.mat->cwiseAbs().maxCoeff() : r.vec->cwiseAbs().maxCoeff());
    throw TrainError("non-finite loss (max |weight| = " + std::to_string(double(max_w)) +
                     ", max |grad| = " + std::to_string(double(max_g)) + ")");
  }

  adam_update(params, grads, state, static_cast<S>(cfg.learning_rate),
              static_cast<S>(cfg.weight_decay));
  return {loss.total, loss.l_v, loss.l_s};
}

template <class S>
struct Checkpoint {
  ModelParams<S> params;
  AdamState<S> opt;
  TrainConfig config;
  Index epoch = 0;       // completed epochs
  std::string rng_state;
};

struct EpochLog {
  Index epoch;
  double loss, loss_v, loss_s;  // means over the epoch's steps
};

namespace detail {

// Deterministic class-balanced sampler: a seeded shuffle per epoch, falling
// back to with-replacement draws once a class is exhausted within the epoch.
class ClassSampler {
 public:
  ClassSampler(std::vector<std::size_t> indices, Rng& rng) : indices_(std::move(indices)), rng_(rng) {
    order_ = indices_;
  }
  void reshuffle() {
    order_ = indices_;
    rng_.shuffle(order_.begin(), order_.end());
    next_ = 0;
  }
  std::size_t draw() {
    if (next_ < order_.size()) return order_[next_++];
    return indices_[rng_.below(indices_.size())];
  }

 private:
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
  std::size_t next_ = 0;
  Rng& rng_;
};

}  // namespace detail

// Runs `cfg.epochs` total epochs (resuming checkpoints continue where they
// stopped). One epoch is one pass over the abnormal videos; normals are
// sampled to match.
template <class S>
Checkpoint<S> train(const TrainConfig& cfg, const std::vector<LoadedVideo<S>>& dataset,
                    std::vector<EpochLog>* log = nullptr,
                    const Checkpoint<S>* resume_from = nullptr) {
  cfg.validate();
  std::vector<std::size_t> normal_idx, abnormal_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    (dataset[i].record.label == 1 ? abnormal_idx : normal_idx).push_back(i);
  if (normal_idx.empty() || abnormal_idx.empty())
    throw TrainError("training manifest needs at least one normal and one abnormal video");

  Checkpoint<S> ck;
  Rng rng(derive_seed(cfg.seed, /*stream=*/1));  // distinct from the init stream
  if (resume_from) {
    ck = *resume_from;
    ck.config = cfg;
    rng.restore(resume_from->rng_state);
  } else {
    ck.params = init_params<S>(cfg.dims, cfg.seed);
    ck.opt = AdamState<S>::zeros(cfg.dims);
    ck.config = cfg;
    ck.epoch = 0;
  }

  const Index half = cfg.batch_size / 2;
  detail::ClassSampler normals(normal_idx, rng);
  detail::ClassSampler abnormals(abnormal_idx, rng);
  const Index steps_per_epoch = static_cast<Index>(
      (abnormal_idx.size() + static_cast<std::size_t>(half) - 1) / static_cast<std::size_t>(half));

  for (Index epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    abnormals.reshuffle();
    normals.reshuffle();
    double sum_l = 0, sum_v = 0, sum_s = 0;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      std::vector<const LoadedVideo<S>*> bn, ba;
      for (Index i = 0; i < half; ++i) ba.push_back(&dataset[abnormals.draw()]);
      for (Index i = 0; i < half; ++i) bn.push_back(&dataset[normals.draw()]);
      const StepRecord<S> r = train_step(ck.params, ck.opt, bn, ba, cfg);
      sum_l += static_cast<double>(r.total);
      sum_v += static_cast<double>(r.l_v);
      sum_s += static_cast<double>(r.l_s);
    }
    ck.epoch = epoch + 1;
    if (log)
      log->push_back({ck.epoch, sum_l / steps_per_epoch, sum_v / steps_per_epoch,
                      sum_s / steps_per_epoch});
  }
  ck.rng_state = rng.state();
  return ck;
}

// ---------------------------------------------------------------------------
// Checkpoint persistence: GMFC tensor container + JSON sidecar ("<path>.json")
// holding config, epoch and RNG state.
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
std::vector<NamedTensor> params_to_tensors(ModelParams<S>& p, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (auto& ref : param_refs(p)) {
    NamedTensor t;
    t.name = prefix + ref.name;
    if (ref.mat) {
      t.rank = 2;
      t.dims = {static_cast<std::uint32_t>(ref.mat->rows()),
                static_cast<std::uint32_t>(ref.mat->cols()), 0};
      t.data.resize(static_cast<std::size_t>(ref.mat->size()));
      for (Index i = 0; i < ref.mat->rows(); ++i)
        for (Index j = 0; j < ref.mat->cols(); ++j)
          t.data[static_cast<std::size_t>(i * ref.mat->cols() + j)] =
              static_cast<float>((*ref.mat)(i, j));
    } else {
      t.rank = 1;
      t.dims = {static_cast<std::uint32_t>(ref.vec->size()), 0, 0};
      t.data.resize(static_cast<std::size_t>(ref.vec->size()));
      for (Index i = 0; i < ref.vec->size(); ++i)
        t.data[static_cast<std::size_t>(i)] = static_cast<float>((*ref.vec)(i));
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <class S>
void tensors_to_params(const std::vector<NamedTensor>& tensors, const std::string& prefix,
                       ModelParams<S>& p) {
  std::size_t cursor = 0;
  for (auto& ref : param_refs(p)) {
    const std::string want = prefix + ref.name;
    if (cursor >= tensors.size() || tensors[cursor].name != want)
      throw CheckpointError("checkpoint missing tensor '" + want + "'");
    const NamedTensor& t = tensors[cursor++];
    const std::size_t expect =
        ref.mat ? static_cast<std::size_t>(ref.mat->size()) : static_cast<std::size_t>(ref.vec->size());
    if (t.data.size() != expect)
      throw CheckpointError("checkpoint tensor '" + want + "' has wrong size");
    if (ref.mat) {
      for (Index i = 0; i < ref.mat->rows(); ++i)
        for (Index j = 0; j < ref.mat->cols(); ++j)
          (*ref.mat)(i, j) =
              static_cast<S>(t.data[static_cast<std::size_t>(i * ref.mat->cols() + j)]);
    } else {
      for (Index i = 0; i < ref.vec->size(); ++i)
        (*ref.vec)(i) = static_cast<S>(t.data[static_cast<std::size_t>(i)]);
    }
  }
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"learning_rate", c.learning_rate},
      {"weight_decay", c.weight_decay},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"optimizer", c.optimizer},
      {"k", c.loss.topk},
      {"margin", c.loss.margin},
      {"alpha", c.loss.alpha},
      {"epsilon", c.loss.epsilon},
      {"visual_dim", c.dims.visual_dim},
      {"text_dim", c.dims.text_dim},
      {"grained_dim", c.dims.grained_dim},
      {"hidden1", c.dims.hidden1},
      {"hidden2", c.dims.hidden2},
      {"focus_radius", c.dims.focus_radius},
      {"dilations", c.dims.dilations},
  };
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.batch_size = j.at("batch_size").get<Index>();
  c.epochs = j.at("epochs").get<Index>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.optimizer = j.at("optimizer").get<std::string>();
  c.loss.topk = j.at("k").get<Index>();
  c.loss.margin = j.at("margin").get<double>();
  c.loss.alpha = j.at("alpha").get<double>();
  c.loss.epsilon = j.at("epsilon").get<double>();
  c.dims.visual_dim = j.at("visual_dim").get<Index>();
  c.dims.text_dim = j.at("text_dim").get<Index>();
  c.dims.grained_dim = j.at("grained_dim").get<Index>();
  c.dims.hidden1 = j.at("hidden1").get<Index>();
  c.dims.hidden2 = j.at("hidden2").get<Index>();
  c.dims.focus_radius = j.at("focus_radius").get<Index>();
  const auto d = j.at("dilations").get<std::vector<Index>>();
  if (d.size() != 3) throw CheckpointError("checkpoint config: dilations must have 3 entries");
  c.dims.dilations = {d[0], d[1], d[2]};
  return c;
}

}  // namespace detail

template <class S>
void save_checkpoint(Checkpoint<S>& ck, const std::filesystem::path& path) {
  auto tensors = detail::params_to_tensors(ck.params, "param/");
  auto m = detail::params_to_tensors(ck.opt.m, "opt.m/");
  auto v = detail::params_to_tensors(ck.opt.v, "opt.v/");
  tensors.insert(tensors.end(), m.begin(), m.end());
  tensors.insert(tensors.end(), v.begin(), v.end());
  write_tensor_container(tensors, path);

  nlohmann::json j;
  j["config"] = detail::config_to_json(ck.config);
  j["epoch"] = ck.epoch;
  j["opt_step"] = ck.opt.step;
  j["rng_state"] = ck.rng_state;
  std::ofstream os(path.string() + ".json", std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint sidecar for " + path.string());
  os << j.dump(2) << "\n";
}

template <class S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".json");
  if (!is) throw CheckpointError("cannot read checkpoint sidecar for " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint sidecar: ") + e.what());
  }

  Checkpoint<S> ck;
  ck.config = detail::config_from_json(j.at("config"));
  ck.epoch = j.at("epoch").get<Index>();
  ck.rng_state = j.at("rng_state").get<std::string>();
  ck.params = make_params<S>(ck.config.dims);
  ck.opt = AdamState<S>::zeros(ck.config.dims);
  ck.opt.step = j.at("opt_step").get<std::int64_t>();

  const auto tensors = read_tensor_container(path);
  const std::size_t n = tensors.size() / 3;
  detail::tensors_to_params(std::vector<NamedTensor>(tensors.begin(), tensors.begin() + n),
                            "param/", ck.params);
  detail::tensors_to_params(
      std::vector<NamedTensor>(tensors.begin() + n, tensors.begin() + 2 * n), "opt.m/", ck.opt.m);
  detail::tensors_to_params(std::vector<NamedTensor>(tensors.begin() + 2 * n, tensors.end()),
                            "opt.v/", ck.opt.v);
  return ck;
}

}  // namespace gmfv
