// gmfv: synthetic data generation, training, evaluation and metric tooling
// for per-snippet video anomaly detection features.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gmfv/evaluator.hpp"
#include "gmfv/synthetic.hpp"
#include "gmfv/trainer.hpp"

namespace {

using namespace gmfv;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<Index, Index> parse_window(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
    throw UsageError("--window expects START:END, got '" + s + "'");
  try {
    return {std::stoll(s.substr(0, colon)), std::stoll(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("--window expects integer START:END, got '" + s + "'");
  }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SyntheticSpec spec;
  std::string window = "8:16";
  std::string channel = "both";
  bool force = false;
};

void run_synth(const SynthArgs& a) {
  SyntheticSpec spec = a.spec;
  std::tie(spec.window_start, spec.window_end) = parse_window(a.window);
  spec.channel = parse_anomaly_channel(a.channel);

  const std::filesystem::path out(a.out);
  if (std::filesystem::exists(out) && !std::filesystem::is_empty(out) && !a.force)
    throw Error("output directory " + a.out + " is not empty (use --force to overwrite)");

  const auto res = generate_synthetic_dataset(spec, out);
  if (res.train.records.empty() && res.test.records.empty())
    std::cerr << "warning: generated an empty dataset\n";
  std::cout << "train: " << res.train.records.size() << " videos -> "
            << res.train_manifest_path.string() << "\n"
            << "test:  " << res.test.records.size() << " videos -> "
            << res.test_manifest_path.string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string log;
  std::string resume;
  TrainConfig cfg;
  Index grained_dim = 0;  // 0: match the visual dim
  bool no_text = false;
};

ModelDims infer_dims(const Manifest& manifest, const std::filesystem::path& base_dir,
                     const TrainArgs& a) {
  if (manifest.records.empty()) throw TrainError("manifest has no records");
  const auto& rec = manifest.records.front();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
  };
  ModelDims dims = a.cfg.dims;
  dims.visual_dim = read_feature_file(resolve(rec.feature_path)).dims[2];
  dims.grained_dim = a.grained_dim;
  dims.text_dim = a.no_text ? 0 : read_feature_file(resolve(rec.text_path)).dims[1];
  return dims;
}

void run_train(const TrainArgs& a) {
  const std::filesystem::path manifest_path(a.manifest);
  const auto base_dir = manifest_path.parent_path();
  const Manifest manifest = load_manifest(manifest_path, Split::Train);

  TrainConfig cfg = a.cfg;
  Checkpoint<float> resume;
  const bool resuming = !a.resume.empty();
  if (resuming) {
    resume = load_checkpoint<float>(a.resume);
    cfg = resume.config;  // hyperparameters travel with the checkpoint
    cfg.epochs = a.cfg.epochs;
  } else {
    cfg.dims = infer_dims(manifest, base_dir, a);
  }
  cfg.validate();

  const auto dataset = load_dataset<float>(manifest, base_dir, cfg.dims);
  std::vector<EpochLog> log;
  auto ck = train(cfg, dataset, &log, resuming ? &resume : nullptr);
  save_checkpoint(ck, a.out);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!a.log.empty()) {
    file.open(a.log, std::ios::binary);
    if (!file) throw Error("cannot write log file " + a.log);
    os = &file;
  }
  char buf[160];
  *os << "epoch,loss,loss_v,loss_s\n";
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(e.epoch),
                  e.loss, e.loss_v, e.loss_s);
    *os << buf;
  }
  std::cerr << "checkpoint written to " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// eval / metrics / export-scores
// ---------------------------------------------------------------------------

void print_report(const MetricsReport& rep) {
  nlohmann::json j;
  j["auc"] = rep.auc;
  j["ap"] = rep.ap;
  j["n_frames"] = rep.n_frames;
  j["n_positive"] = rep.n_positive;
  std::cout << j.dump() << "\n";
}

void run_eval(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& scores_out) {
  const auto ck = load_checkpoint<float>(checkpoint);
  const std::filesystem::path mp(manifest_path);
  const Manifest manifest = load_manifest(mp, Split::Test);
  const auto result = evaluate_dataset(ck.params, ck.config.dims, manifest, mp.parent_path(),
                                       ck.config.loss.epsilon);
  write_scores_csv(result.records, scores_out);
  print_report(result.report);
}

void run_metrics(const std::string& scores_csv) {
  const auto records = read_scores_csv(scores_csv);
  print_report(compute_metrics(records));
}

void run_export(const std::string& scores_csv, const std::string& out,
                const std::string& video_id) {
  const auto records = read_scores_csv(scores_csv);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw Error("cannot write " + out);
  char buf[64];
  if (video_id.empty()) {
    os << "video_id,frame_index,score,label\n";
    for (const auto& r : records)
      for (std::size_t i = 0; i < r.frame_scores.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g", double(r.frame_scores[i]));
        os << r.video_id << ',' << i << ',' << buf << ',' << int(r.frame_labels[i]) << "\n";
      }
    return;
  }
  bool found = false;
  os << "frame_index,score,label\n";
  for (const auto& r : records) {
    if (r.video_id != video_id) continue;
    found = true;
    for (std::size_t i = 0; i < r.frame_scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", double(r.frame_scores[i]));
      os << i << ',' << buf << ',' << int(r.frame_labels[i]) << "\n";
    }
  }
  if (!found) throw Error("video_id '" + video_id + "' not present in " + scores_csv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grained multi-modal video anomaly detection on precomputed snippet features"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic feature dataset");
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--normal", synth.spec.n_normal, "Normal training videos")->required();
  cmd_synth->add_option("--abnormal", synth.spec.n_abnormal, "Abnormal training videos")
      ->required();
  cmd_synth->add_option("--test-normal", synth.spec.n_normal_test,
                        "Normal test videos (default: same as --normal)");
  cmd_synth->add_option("--test-abnormal", synth.spec.n_abnormal_test,
                        "Abnormal test videos (default: same as --abnormal)");
  cmd_synth->add_option("--T", synth.spec.snippets, "Snippets per video")->capture_default_str();
  cmd_synth->add_option("--D", synth.spec.visual_dim, "Visual feature dim")->capture_default_str();
  cmd_synth->add_option("--Dt", synth.spec.text_dim, "Text feature dim")->capture_default_str();
  cmd_synth->add_option("--crops", synth.spec.n_crops, "Crop count")->capture_default_str();
  cmd_synth->add_option("--window", synth.window, "Anomaly window START:END in snippets")->capture_default_str();
  cmd_synth->add_option("--channel", synth.channel, "Anomalous channel")->capture_default_str()
      ->check(CLI::IsMember({"visual", "text", "both"}));
  cmd_synth->add_option("--shift", synth.spec.shift_magnitude, "Mean shift inside the window")->capture_default_str();
  cmd_synth->add_option("--seed", synth.spec.seed, "RNG seed")->capture_default_str();
  cmd_synth->add_flag("--force", synth.force, "Write into a non-empty directory");
  cmd_synth->callback([&] { run_synth(synth); });

  // train ------------------------------------------------------------------
  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train on a manifest of labeled videos");
  cmd_train->add_option("--manifest", tr.manifest, "Training manifest (JSON lines)")->required();
  cmd_train->add_option("--out", tr.out, "Checkpoint output path")->required();
  cmd_train->add_option("--epochs", tr.cfg.epochs, "Total epochs")->capture_default_str();
  cmd_train->add_option("--lr", tr.cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd_train->add_option("--wd", tr.cfg.weight_decay, "Weight decay")->capture_default_str();
  cmd_train->add_option("--batch", tr.cfg.batch_size, "Videos per step (half normal/abnormal)")->capture_default_str();
  cmd_train->add_option("--alpha", tr.cfg.loss.alpha, "Magnitude-loss coefficient")->capture_default_str();
  cmd_train->add_option("--margin", tr.cfg.loss.margin, "Magnitude margin")->capture_default_str();
  cmd_train->add_option("--k", tr.cfg.loss.topk, "Top-k snippets per video")->capture_default_str();
  cmd_train->add_option("--seed", tr.cfg.seed, "RNG seed")->capture_default_str();
  cmd_train->add_option("--Df", tr.grained_dim, "Grained channel count (0 = visual dim)")->capture_default_str();
  cmd_train->add_option("--h1", tr.cfg.dims.hidden1, "Classifier hidden width 1")->capture_default_str();
  cmd_train->add_option("--h2", tr.cfg.dims.hidden2, "Classifier hidden width 2")->capture_default_str();
  cmd_train->add_option("--radius", tr.cfg.dims.focus_radius, "Focus attention radius")->capture_default_str();
  cmd_train->add_flag("--no-text", tr.no_text, "Ignore text features (visual-only ablation)");
  cmd_train->add_option("--log", tr.log, "Write the epoch CSV here instead of stdout");
  cmd_train->add_option("--resume", tr.resume,
                        "Continue from this checkpoint (hyperparameters come from it; "
                        "--epochs sets the new total)");
  cmd_train->callback([&] { run_train(tr); });

  // eval -------------------------------------------------------------------
  std::string eval_ckpt, eval_manifest, eval_scores;
  auto* cmd_eval = app.add_subcommand("eval", "Score a test manifest and print metrics JSON");
  cmd_eval->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
  cmd_eval->add_option("--manifest", eval_manifest, "Test manifest with frame labels")
      ->required();
  cmd_eval->add_option("--scores-out", eval_scores, "Per-frame score CSV output")->required();
  cmd_eval->callback([&] { run_eval(eval_ckpt, eval_manifest, eval_scores); });

  // metrics ----------------------------------------------------------------
  std::string metrics_csv;
  auto* cmd_metrics =
      app.add_subcommand("metrics", "Recompute AUC/AP from a score CSV alone");
  cmd_metrics->add_option("--scores", metrics_csv, "Score CSV from eval")->required();
  cmd_metrics->callback([&] { run_metrics(metrics_csv); });

  // export-scores ----------------------------------------------------------
  std::string exp_csv, exp_out, exp_video;
  auto* cmd_export = app.add_subcommand(
      "export-scores", "Re-emit plot-ready frame/score/label rows from a score CSV");
  cmd_export->add_option("--scores", exp_csv, "Score CSV from eval")->required();
  cmd_export->add_option("--out", exp_out, "Output CSV")->required();
  cmd_export->add_option("--video", exp_video, "Export only this video (drops the id column)");
  cmd_export->callback([&] { run_export(exp_csv, exp_out, exp_video); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
