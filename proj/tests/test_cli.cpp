#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

// GMFV_BIN is injected by CMake as the absolute path of the gmfv tool.

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(GMFV_BIN) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("gmfv_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string synth_args(const fs::path& out, const std::string& extra = "") {
  return "synth --out " + out.string() +
         " --normal 6 --abnormal 6 --test-normal 4 --test-abnormal 4"
         " --T 16 --D 8 --Dt 4 --crops 2 --window 4:10 --channel both --shift 2.0 --seed 3 " +
         extra;
}

}  // namespace

TEST_CASE("help exits 0 everywhere and documents the flags") {
  CHECK(run("--help").exit_code == 0);
  for (const std::string sub : {"synth", "train", "eval", "metrics", "export-scores"}) {
    const auto r = run(sub + " --help");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  CHECK(run("synth --help").out.find("--window") != std::string::npos);
  CHECK(run("train --help").out.find("--alpha") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run("").exit_code == 1);                    // missing subcommand
  CHECK(run("bogus").exit_code == 1);               // unknown subcommand
  CHECK(run("metrics").exit_code == 1);             // missing required flag
  CHECK(run("metrics --scores x --what").exit_code == 1);  // unknown flag
  const auto dir = temp_dir("usage");
  CHECK(run(synth_args(dir, "--window nonsense")).exit_code == 1);
}

TEST_CASE("synth: deterministic trees, empty dataset warning, --force") {
  const auto a = temp_dir("synth_a");
  const auto b = temp_dir("synth_b");
  REQUIRE(run(synth_args(a)).exit_code == 0);
  REQUIRE(run(synth_args(b)).exit_code == 0);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
  }

  CHECK(run(synth_args(a)).exit_code == 2);             // non-empty, no --force
  CHECK(run(synth_args(a, "--force")).exit_code == 0);  // explicit overwrite

  const auto empty = temp_dir("synth_empty");
  const auto r = run("synth --out " + empty.string() + " --normal 0 --abnormal 0 --window 1:2");
  CHECK(r.exit_code == 0);
  CHECK(slurp(empty / "train.jsonl").empty());
}

TEST_CASE("train/eval/metrics: end-to-end consistency and determinism") {
  const auto dir = temp_dir("flow");
  REQUIRE(run(synth_args(dir)).exit_code == 0);
  const std::string train_args = "train --manifest " + (dir / "train.jsonl").string() +
                                 " --out " + (dir / "m.ckpt").string() +
                                 " --epochs 4 --batch 4 --k 2 --h1 16 --h2 8 --seed 1";

  const auto t1 = run(train_args);
  REQUIRE(t1.exit_code == 0);
  CHECK(t1.out.rfind("epoch,loss,loss_v,loss_s", 0) == 0);  // CSV log on stdout

  // Identical seed/config/data -> byte-identical checkpoint.
  const auto ckpt_bytes = slurp(dir / "m.ckpt");
  REQUIRE(run("train --manifest " + (dir / "train.jsonl").string() + " --out " +
              (dir / "m2.ckpt").string() + " --epochs 4 --batch 4 --k 2 --h1 16 --h2 8 --seed 1")
              .exit_code == 0);
  CHECK(slurp(dir / "m2.ckpt") == ckpt_bytes);
  CHECK(slurp(dir / "m2.ckpt.json") == slurp(dir / "m.ckpt.json"));

  const std::string eval_args = "eval --checkpoint " + (dir / "m.ckpt").string() +
                                " --manifest " + (dir / "test.jsonl").string();
  const auto e1 = run(eval_args + " --scores-out " + (dir / "s1.csv").string());
  const auto e2 = run(eval_args + " --scores-out " + (dir / "s2.csv").string());
  REQUIRE(e1.exit_code == 0);
  CHECK(slurp(dir / "s1.csv") == slurp(dir / "s2.csv"));
  CHECK(e1.out == e2.out);

  const auto j = nlohmann::json::parse(e1.out);
  CHECK(j.contains("auc"));
  CHECK(j.contains("ap"));
  CHECK(j.contains("n_frames"));
  CHECK(j.contains("n_positive"));

  // metrics reproduces eval's JSON exactly from the CSV alone.
  const auto m = run("metrics --scores " + (dir / "s1.csv").string());
  REQUIRE(m.exit_code == 0);
  CHECK(m.out == e1.out);

  // export-scores: full copy keeps the schema; filtered drops the id column.
  REQUIRE(run("export-scores --scores " + (dir / "s1.csv").string() + " --out " +
              (dir / "all.csv").string())
              .exit_code == 0);
  CHECK(slurp(dir / "all.csv") == slurp(dir / "s1.csv"));
  const auto one = run("export-scores --scores " + (dir / "s1.csv").string() + " --out " +
                       (dir / "one.csv").string() + " --video test_abn_001");
  CHECK(one.exit_code == 0);
  CHECK(slurp(dir / "one.csv").rfind("frame_index,score,label", 0) == 0);
  CHECK(run("export-scores --scores " + (dir / "s1.csv").string() + " --out " +
            (dir / "x.csv").string() + " --video nope")
            .exit_code == 2);
}

TEST_CASE("train: --epochs 0 stores the initialization, resume continues it") {
  const auto dir = temp_dir("epoch0");
  REQUIRE(run(synth_args(dir)).exit_code == 0);
  const std::string base = "train --manifest " + (dir / "train.jsonl").string() +
                           " --batch 4 --k 2 --h1 16 --h2 8 --seed 9";
  REQUIRE(run(base + " --epochs 0 --out " + (dir / "init.ckpt").string()).exit_code == 0);
  REQUIRE(run(base + " --epochs 0 --out " + (dir / "init2.ckpt").string()).exit_code == 0);
  CHECK(slurp(dir / "init.ckpt") == slurp(dir / "init2.ckpt"));

  // Resume from the initialization and match a straight 2-epoch run.
  REQUIRE(run(base + " --epochs 2 --out " + (dir / "direct.ckpt").string()).exit_code == 0);
  REQUIRE(run("train --manifest " + (dir / "train.jsonl").string() + " --epochs 2 --out " +
              (dir / "resumed.ckpt").string() + " --resume " + (dir / "init.ckpt").string())
              .exit_code == 0);
  CHECK(slurp(dir / "resumed.ckpt") == slurp(dir / "direct.ckpt"));
}

TEST_CASE("data errors exit 2") {
  const auto dir = temp_dir("data_err");
  REQUIRE(run(synth_args(dir)).exit_code == 0);

  // Single-class manifest.
  const auto one_class = temp_dir("one_class");
  REQUIRE(run("synth --out " + one_class.string() +
              " --normal 4 --abnormal 0 --T 8 --D 8 --Dt 4 --window 2:6")
              .exit_code == 0);
  CHECK(run("train --manifest " + (one_class / "train.jsonl").string() + " --out " +
            (one_class / "x.ckpt").string() + " --epochs 1 --batch 4")
            .exit_code == 2);

  // Checkpoint dims do not match the evaluated dataset.
  REQUIRE(run("train --manifest " + (dir / "train.jsonl").string() + " --out " +
              (dir / "m.ckpt").string() + " --epochs 1 --batch 4 --k 2 --h1 8 --h2 4")
              .exit_code == 0);
  const auto wide = temp_dir("wide");
  REQUIRE(run("synth --out " + wide.string() +
              " --normal 2 --abnormal 2 --T 16 --D 16 --Dt 4 --window 4:10")
              .exit_code == 0);
  CHECK(run("eval --checkpoint " + (dir / "m.ckpt").string() + " --manifest " +
            (wide / "test.jsonl").string() + " --scores-out " + (wide / "s.csv").string())
            .exit_code == 2);

  // Single-class score CSV.
  {
    std::ofstream os(dir / "flat.csv", std::ios::binary);
    os << "video_id,frame_index,score,label\n";
    os << "v,0,0.5,0\nv,1,0.25,0\n";
  }
  CHECK(run("metrics --scores " + (dir / "flat.csv").string()).exit_code == 2);
}

TEST_CASE("metrics: hand-written CSV reproduces the step-interpolated AP") {
  const auto dir = temp_dir("hand_ap");
  {
    std::ofstream os(dir / "h.csv", std::ios::binary);
    os << "video_id,frame_index,score,label\n";
    os << "v,0,0.9,1\nv,1,0.8,0\nv,2,0.7,1\n";
  }
  const auto r = run("metrics --scores " + (dir / "h.csv").string());
  REQUIRE(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(std::abs(j["ap"].get<double>() - 5.0 / 6.0) < 1e-9);
}
