#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path so = dir / "stdout.txt", se = dir / "stderr.txt";
  const std::string cmd =
      std::string(FREQDIFF_CLI_PATH) + " " + args + " > " + so.string() + " 2> " + se.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

const char* kTinyConfig = R"(
[run]
seed = 4242
N = 8
M = 1
epochs = 2
warmup_epochs = 1
batch_size = 16
hidden_sizes = 16
n_projections = 64

[synth]
kind = freq_localized
n_samples = 80

[sample]
n_samples = 24
steps = 40

[crossover]
epochs = 2
n_samples = 20
steps = 30
)";

}  // namespace

TEST(Cli, SynthIsDeterministic) {
  const fs::path dir = fresh_dir("cli_synth");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const fs::path out1 = dir / "a", out2 = dir / "b";
  auto r1 = run_cli("synth --config " + cfg.string() + " --out " + out1.string(), dir);
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  auto r2 = run_cli("synth --config " + cfg.string() + " --out " + out2.string(), dir);
  ASSERT_EQ(r2.exit_code, 0) << r2.err;
  EXPECT_TRUE(fs::exists(out1 / "data.csv"));
  EXPECT_TRUE(fs::exists(out1 / "run_metadata.json"));
  EXPECT_EQ(slurp(out1 / "data.csv"), slurp(out2 / "data.csv"));
  const json meta = json::parse(slurp(out1 / "run_metadata.json"));
  EXPECT_EQ(meta.at("command"), "synth");
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 4242u);
  EXPECT_TRUE(meta.contains("config_hash"));
  EXPECT_TRUE(meta.contains("wall_time_seconds"));
}

TEST(Cli, TrainSampleEvaluateAnalyzePipeline) {
  const fs::path dir = fresh_dir("cli_pipeline");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const fs::path data = dir / "data";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string(), dir).exit_code,
            0);

  for (const std::string domain : {"frequency", "time"}) {
    const fs::path tr = dir / ("train_" + domain);
    auto rt = run_cli("train --domain " + domain + " --config " + cfg.string() + " --data " +
                          (data / "data.csv").string() + " --out " + tr.string(),
                      dir);
    ASSERT_EQ(rt.exit_code, 0) << rt.err;
    EXPECT_TRUE(fs::exists(tr / "checkpoint.bin"));
    const json report = json::parse(slurp(tr / "train_report.json"));
    EXPECT_EQ(report.at("train_loss").size(), 2u);
    EXPECT_EQ(report.at("val_loss").size(), 2u);
    EXPECT_GE(report.at("selected_epoch").get<int>(), 0);

    const fs::path sm = dir / ("sample_" + domain);
    auto rs = run_cli("sample --checkpoint " + (tr / "checkpoint.bin").string() + " --config " +
                          cfg.string() + " --out " + sm.string(),
                      dir);
    ASSERT_EQ(rs.exit_code, 0) << rs.err;
    EXPECT_TRUE(fs::exists(sm / "samples.csv"));
    if (domain == "frequency") EXPECT_TRUE(fs::exists(sm / "phi_end_state.csv"));

    const fs::path ev = dir / ("eval_" + domain);
    auto re = run_cli("evaluate --train " + (data / "data.csv").string() + " --samples " +
                          (sm / "samples.csv").string() +
                          " --metric sliced --domain both --n-projections 32 --out " +
                          ev.string(),
                      dir);
    ASSERT_EQ(re.exit_code, 0) << re.err;
    const json eval = json::parse(slurp(ev / "evaluation.json"));
    ASSERT_EQ(eval.size(), 2u);  // one row per metric domain
    for (const auto& row : eval) {
      EXPECT_EQ(row.at("metric"), "sliced");
      EXPECT_GE(row.at("mean").get<double>(), 0.0);
      EXPECT_TRUE(row.contains("two_standard_errors"));
      EXPECT_EQ(row.at("n_projections").get<int>(), 32);
    }
  }

  const fs::path an = dir / "analysis";
  auto ra = run_cli("analyze --data " + (data / "data.csv").string() + " --out " + an.string(),
                    dir);
  ASSERT_EQ(ra.exit_code, 0) << ra.err;
  EXPECT_TRUE(fs::exists(an / "delocalization.csv"));
  const json summary = json::parse(slurp(an / "analysis.json"));
  // freq_localized data: much more localized in the frequency domain
  EXPECT_LT(summary.at("delta_freq").at("mean").get<double>(),
            summary.at("delta_time").at("mean").get<double>());
}

TEST(Cli, EvaluateBaselines) {
  const fs::path dir = fresh_dir("cli_baselines");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const fs::path data = dir / "data";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string(), dir).exit_code,
            0);
  const fs::path ev = dir / "eval";
  auto re = run_cli("evaluate --train " + (data / "data.csv").string() +
                        " --metric baselines --domain time --n-projections 32 --out " +
                        ev.string(),
                    dir);
  ASSERT_EQ(re.exit_code, 0) << re.err;
  const json eval = json::parse(slurp(ev / "evaluation.json"));
  ASSERT_EQ(eval.size(), 1u);
  EXPECT_GT(eval[0].at("mean_baseline").at("mean").get<double>(),
            eval[0].at("self_baseline").at("mean").get<double>());
}

TEST(Cli, InterveneWritesKernelSums) {
  const fs::path dir = fresh_dir("cli_intervene");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const fs::path data = dir / "data";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string(), dir).exit_code,
            0);
  const fs::path iv = dir / "smooth";
  auto ri = run_cli("intervene --data " + (data / "data.csv").string() +
                        " --sigma-list 0,5 --out " + iv.string(),
                    dir);
  ASSERT_EQ(ri.exit_code, 0) << ri.err;
  EXPECT_TRUE(fs::exists(iv / "smoothed_sigma0.csv"));
  EXPECT_TRUE(fs::exists(iv / "smoothed_sigma5.csv"));
  const json meta = json::parse(slurp(iv / "run_metadata.json"));
  EXPECT_EQ(meta.at("kernel_norm"), "literal");
  EXPECT_TRUE(meta.at("kernel_sums").contains("5.000000"));
}

TEST(Cli, CrossoverTableAndResume) {
  const fs::path dir = fresh_dir("cli_crossover");
  const fs::path cfg = write_config(dir, kTinyConfig);
  const fs::path data = dir / "data";
  ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --out " + data.string(), dir).exit_code,
            0);
  const fs::path cr = dir / "crossover";
  const std::string cmd = "crossover --data " + (data / "data.csv").string() + " --config " +
                          cfg.string() + " --sigma-list 0,3 --out " + cr.string();
  auto r1 = run_cli(cmd, dir);
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  const std::string table1 = slurp(cr / "crossover.csv");
  int lines = 0;
  for (char c : table1) lines += c == '\n';
  EXPECT_EQ(lines, 1 + 2 * 2 * 2);  // header + |sigma| x domain x metric rows
  // cells are cached; the rerun reloads them and reproduces the table
  auto r2 = run_cli(cmd, dir);
  ASSERT_EQ(r2.exit_code, 0) << r2.err;
  EXPECT_EQ(slurp(cr / "crossover.csv"), table1);
}

TEST(Cli, VerifyMirroredBm) {
  const fs::path dir = fresh_dir("cli_verify");
  const fs::path cfg = write_config(dir, "[run]\nN = 6\nM = 1\n");
  const fs::path vr = dir / "v";
  auto r = run_cli("verify --suite mirrored-bm --seed 7 --n-paths 20000 --config " +
                       cfg.string() + " --out " + vr.string(),
                   dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const json rep = json::parse(slurp(vr / "verify_mirrored-bm.json"));
  EXPECT_EQ(rep.at("suite"), "mirrored-bm");
  EXPECT_TRUE(rep.at("passed").get<bool>());
  EXPECT_EQ(rep.at("mirror_max_deviation").get<double>(), 0.0);

  auto rc = run_cli("verify --suite commutation --seed 3 --config " + cfg.string() + " --out " +
                        (dir / "c").string(),
                    dir);
  EXPECT_EQ(rc.exit_code, 0) << rc.err;
  auto re = run_cli("verify --suite equivalence --seed 3 --config " + cfg.string() + " --out " +
                        (dir / "e").string(),
                    dir);
  EXPECT_EQ(re.exit_code, 0) << re.err;
}

TEST(Cli, ErrorsAreMachineParsable) {
  const fs::path dir = fresh_dir("cli_errors");
  auto r = run_cli("evaluate --train /nonexistent.csv --samples /nope.csv --out " +
                       (dir / "x").string(),
                   dir);
  EXPECT_EQ(r.exit_code, 2);
  ASSERT_TRUE(r.err.rfind("error: {", 0) == 0) << r.err;
  const json err = json::parse(r.err.substr(7));
  EXPECT_EQ(err.at("category"), "data");

  auto r2 = run_cli("frobnicate", dir);
  EXPECT_NE(r2.exit_code, 0);

  const fs::path cfg = write_config(dir, "[run]\nbeta_min = 30\n");
  auto r3 = run_cli("synth --config " + cfg.string() + " --out " + (dir / "y").string(), dir);
  EXPECT_EQ(r3.exit_code, 2);
  const json err3 = json::parse(r3.err.substr(7));
  EXPECT_EQ(err3.at("category"), "config");
}
