#include "gmfv/synthetic.hpp"

#include <cstdio>

#include "gmfv/rng.hpp"

namespace gmfv {

namespace {

void validate(const SyntheticSpec& s) {
  if (s.n_normal < 0 || s.n_abnormal < 0) throw ShapeError("synthetic: negative video count");
  if (s.snippets < 1 || s.visual_dim < 1 || s.n_crops < 1)
    throw ShapeError("synthetic: snippets, visual_dim and n_crops must be >= 1");
  if (s.text_dim < 0) throw ShapeError("synthetic: text_dim must be >= 0");
  if (!(0 <= s.window_start && s.window_start < s.window_end && s.window_end <= s.snippets))
    throw ShapeError("synthetic: anomaly window must satisfy 0 <= start < end <= T");
  if (s.shift_magnitude < 0) throw ShapeError("synthetic: shift_magnitude must be >= 0");
}

std::string video_name(Split split, int label, Index i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%s_%03lld", split == Split::Train ? "train" : "test",
                label ? "abn" : "nrm", static_cast<long long>(i));
  return buf;
}

VideoRecord make_video(const SyntheticSpec& s, Split split, int label, Index i,
                       const std::filesystem::path& out_dir) {
  const std::uint64_t vid_seed =
      derive_seed(s.seed, split == Split::Train ? 1 : 2, static_cast<std::uint64_t>(label),
                  static_cast<std::uint64_t>(i));
  Rng rng(vid_seed);

  FeatureTensor<float> visual(s.n_crops, s.snippets, s.visual_dim);
  for (auto& crop : visual.crops)
    for (Index t = 0; t < s.snippets; ++t)
      for (Index d = 0; d < s.visual_dim; ++d) crop(t, d) = static_cast<float>(rng.normal());

  Mat<float> text(s.snippets, s.text_dim);
  for (Index t = 0; t < s.snippets; ++t)
    for (Index d = 0; d < s.text_dim; ++d) text(t, d) = static_cast<float>(rng.normal());

  if (label == 1) {
    const float shift = static_cast<float>(s.shift_magnitude);
    const bool hit_visual = s.channel != AnomalyChannel::Text;
    const bool hit_text = s.channel != AnomalyChannel::Visual;
    for (Index t = s.window_start; t < s.window_end; ++t) {
      if (hit_visual)
        for (auto& crop : visual.crops) crop.row(t).array() += shift;
      if (hit_text && s.text_dim > 0) text.row(t).array() += shift;
    }
  }

  VideoRecord r;
  r.video_id = video_name(split, label, i);
  r.label = label;
  r.feature_path = "features/" + r.video_id + ".vis.gmfv";
  r.text_path = "features/" + r.video_id + ".txt.gmfv";
  // Full 16-frame snippets on the train split; every other test video gets a
  // partial final snippet so the frame expansion path is exercised end to end.
  r.num_frames = kFramesPerSnippet * s.snippets;
  if (split == Split::Test && (i % 2) == 1) r.num_frames -= 5;

  if (split == Split::Test) {
    std::vector<std::uint8_t> fl(static_cast<std::size_t>(r.num_frames), 0);
    if (label == 1)
      for (std::int64_t f = 0; f < r.num_frames; ++f) {
        const Index t = static_cast<Index>(f / kFramesPerSnippet);
        fl[static_cast<std::size_t>(f)] = (s.window_start <= t && t < s.window_end) ? 1 : 0;
      }
    r.frame_labels = std::move(fl);
  }

  write_feature_file(FeatureArray::from_tensor(visual), out_dir / r.feature_path);
  write_feature_file(FeatureArray::from_matrix(text), out_dir / r.text_path);
  return r;
}

Manifest make_split(const SyntheticSpec& s, Split split, Index n_normal, Index n_abnormal,
                    const std::filesystem::path& out_dir) {
  Manifest m;
  m.split = split;
  for (Index i = 0; i < n_normal; ++i) m.records.push_back(make_video(s, split, 0, i, out_dir));
  for (Index i = 0; i < n_abnormal; ++i) m.records.push_back(make_video(s, split, 1, i, out_dir));
  return m;
}

}  // namespace

SyntheticResult generate_synthetic_dataset(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir) {
  validate(spec);
  std::filesystem::create_directories(out_dir / "features");

  const Index test_normal = spec.n_normal_test < 0 ? spec.n_normal : spec.n_normal_test;
  const Index test_abnormal = spec.n_abnormal_test < 0 ? spec.n_abnormal : spec.n_abnormal_test;

  SyntheticResult res;
  res.train = make_split(spec, Split::Train, spec.n_normal, spec.n_abnormal, out_dir);
  res.test = make_split(spec, Split::Test, test_normal, test_abnormal, out_dir);
  res.train_manifest_path = out_dir / "train.jsonl";
  res.test_manifest_path = out_dir / "test.jsonl";
  save_manifest(res.train, res.train_manifest_path);
  save_manifest(res.test, res.test_manifest_path);
  return res;
}

AnomalyChannel parse_anomaly_channel(const std::string& name) {
  if (name == "visual") return AnomalyChannel::Visual;
  if (name == "text") return AnomalyChannel::Text;
  if (name == "both") return AnomalyChannel::Both;
  throw ShapeError("unknown anomaly channel '" + name + "' (expected visual|text|both)");
}

}  // namespace gmfv
