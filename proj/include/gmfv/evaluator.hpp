#pragma once

#include "gmfv/metrics.hpp"
#include "gmfv/trainer.hpp"

namespace gmfv {

// Anomaly score for every snippet (inference scores all of them; top-k is a
// training-time device only).
template <class S>
Vec<S> infer_video(const ModelParams<S>& params, const ModelDims& dims,
                   const FeatureTensor<S>& f, const Mat<S>& f_txt,
                   double epsilon = 1e-8) {
  PipelineCache<S> pipe;
  pipeline_forward(params, dims, f, f_txt, pipe);
  Vec<S> scores(pipe.mean.rows());
  ClassifierCache<S> cls;
  for (Index t = 0; t < pipe.mean.rows(); ++t) {
    const Vec<S> row = pipe.mean.row(t).transpose();
    scores[t] = classifier_forward(row, params.classifier, static_cast<S>(epsilon), cls);
  }
  return scores;
}

template <class S>
struct EvalResult {
  MetricsReport report;
  std::vector<ScoreRecord> records;
};

// Scores every test video, expands snippets to frames and pools all frames of
// all videos for the metrics. Test records must carry frame labels.
template <class S>
EvalResult<S> evaluate_dataset(const ModelParams<S>& params, const ModelDims& dims,
                               const Manifest& manifest, const std::filesystem::path& base_dir,
                               double epsilon = 1e-8) {
  EvalResult<S> out;
  for (const auto& rec : manifest.records) {
    if (!rec.frame_labels)
      throw MetricError("video '" + rec.video_id + "': evaluation needs frame_labels");
    const LoadedVideo<S> v = load_video<S>(rec, base_dir, dims);
    const Vec<S> snippet_scores = infer_video(params, dims, v.features, v.text, epsilon);
    const Vec<S> frame_scores = snippet_to_frame_scores(snippet_scores, rec.num_frames);
    ScoreRecord sr;
    sr.video_id = rec.video_id;
    sr.frame_scores.resize(static_cast<std::size_t>(frame_scores.size()));
    for (Index i = 0; i < frame_scores.size(); ++i)
      sr.frame_scores[static_cast<std::size_t>(i)] = static_cast<float>(frame_scores[i]);
    sr.frame_labels = *rec.frame_labels;
    out.records.push_back(std::move(sr));
  }
  out.report = compute_metrics(out.records);
  return out;
}

}  // namespace gmfv
