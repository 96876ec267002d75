// Command-line surface: synth, train, sample, evaluate, analyze, intervene,
// crossover, verify. Every run writes a run_metadata.json (config hash,
// seeds, version, wall time) next to its outputs; all numeric artifacts are
// byte-identical across reruns with the same config and seeds.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "freqdiff/core.hpp"
#include "freqdiff/datio.hpp"
#include "freqdiff/diffusion.hpp"
#include "freqdiff/labkit.hpp"
#include "freqdiff/metrics.hpp"
#include "freqdiff/scoring.hpp"
#include "freqdiff/spectral.hpp"
#include "freqdiff/stochastic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace freqdiff;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (INI sections)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
    args.seed_given = true;
  });
  cmd->add_option("--threads", args.threads, "cap on worker threads");
}

struct Context {
  ConfigFile config;
  RunConfig run;
  std::string hash;
  CommonArgs common;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

Context make_context(const CommonArgs& args) {
  Context ctx;
  ctx.common = args;
  if (!args.config_path.empty()) ctx.config = ConfigFile::parse_file(args.config_path);
  ctx.run = run_config_from(ctx.config);
  if (args.seed_given) ctx.run.seed = args.seed;
  ctx.hash = config_hash(ctx.config);
  fs::create_directories(args.out_dir);
  return ctx;
}

void write_metadata(const Context& ctx, const std::string& command, json extra = json::object()) {
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
  json meta = {{"command", command},
               {"version", kVersion},
               {"config_hash", ctx.hash},
               {"seed", ctx.run.seed},
               {"threads", ctx.common.threads},
               {"wall_time_seconds", wall}};
  for (auto& [k, v] : extra.items()) meta[k] = v;
  std::ofstream out(fs::path(ctx.common.out_dir) / "run_metadata.json");
  out << meta.dump(2) << "\n";
}

SynthSpec synth_spec_from(const Context& ctx) {
  SynthSpec spec;
  spec.kind = synth_kind_from_string(ctx.config.get_string("synth", "kind", "freq_localized"));
  spec.n_samples = static_cast<int>(ctx.config.get_int("synth", "n_samples", 2000));
  spec.n = ctx.run.n;
  spec.m = ctx.run.m;
  spec.harmonics = static_cast<int>(ctx.config.get_int("synth", "harmonics", 2));
  spec.bump_width = ctx.config.get_double("synth", "bump_width", 1.5);
  spec.noise_amp = ctx.config.get_double("synth", "noise_amp", 0.1);
  spec.seed = ctx.run.seed;
  return spec;
}

KernelNorm kernel_norm_from(const Context& ctx) {
  const std::string s = ctx.config.get_string("smooth", "kernel_norm", "literal");
  if (s == "literal") return KernelNorm::literal;
  if (s == "sum_to_one") return KernelNorm::sum_to_one;
  throw ConfigError("smooth.kernel_norm must be literal or sum_to_one, got '" + s + "'");
}

json sw_json(const SlicedWassersteinResult& r, const std::string& metric,
             const std::string& domain, int n_proj, std::uint64_t seed) {
  return r.to_json(metric, domain, n_proj, seed);
}

int run_synth(const CommonArgs& args, const std::string& kind_flag, int n_samples_flag) {
  Context ctx = make_context(args);
  SynthSpec spec = synth_spec_from(ctx);
  if (!kind_flag.empty()) spec.kind = synth_kind_from_string(kind_flag);
  if (n_samples_flag > 0) spec.n_samples = n_samples_flag;
  const SampleSet set = synth_generate(spec);
  const fs::path out = fs::path(args.out_dir) / "data.csv";
  save_csv(out.string(), set, to_string(spec.kind));
  write_metadata(ctx, "synth",
                 {{"outputs", {out.string()}},
                  {"kind", to_string(spec.kind)},
                  {"n_samples", spec.n_samples},
                  {"N", spec.n},
                  {"M", spec.m}});
  std::cout << "wrote " << out.string() << " (" << spec.n_samples << " samples)\n";
  return 0;
}

int run_train(const CommonArgs& args, const std::string& domain_flag,
              const std::string& data_path) {
  Context ctx = make_context(args);
  if (!domain_flag.empty()) ctx.run.domain = domain_from_string(domain_flag);

  const Dataset raw = load_csv(data_path);
  auto [train_raw, val_raw] = split(raw, ctx.run.val_fraction, detail::mix2(ctx.run.seed, 1));
  const FeatureStats stats = compute_stats(train_raw.set);
  const SampleSet train_set = apply_standardize(train_raw.set, stats);
  const SampleSet val_set = apply_standardize(val_raw.set, stats);
  ctx.run.n = train_set.n();
  ctx.run.m = train_set.m();

  auto [model, report] = train(train_set.samples, val_set.samples, ctx.run.domain, ctx.run);

  const fs::path ckpt = fs::path(args.out_dir) / "checkpoint.bin";
  save_checkpoint(model, ckpt.string(), ctx.hash, stats.mean, stats.sd);
  const fs::path rep = fs::path(args.out_dir) / "train_report.json";
  std::ofstream(rep) << report.to_json().dump(2) << "\n";
  write_metadata(ctx, "train",
                 {{"outputs", {ckpt.string(), rep.string()}},
                  {"domain", to_string(ctx.run.domain)},
                  {"data", data_path},
                  {"selected_epoch", report.selected_epoch}});
  std::cout << "wrote " << ckpt.string() << " (selected epoch " << report.selected_epoch
            << ")\n";
  return 0;
}

int run_sample(const CommonArgs& args, const std::string& ckpt_path, int n_samples, int steps) {
  Context ctx = make_context(args);
  Vec mean, sd;
  std::string ckpt_hash;
  const ScoreModel model = load_checkpoint(ckpt_path, &ckpt_hash, &mean, &sd);
  const Index n = model.arch().n, m = model.arch().m;
  if (n_samples <= 0) n_samples = static_cast<int>(ctx.config.get_int("sample", "n_samples", 1000));
  if (steps <= 0) steps = static_cast<int>(ctx.config.get_int("sample", "steps", 1000));

  const VpSchedule sched{ctx.run.beta_min, ctx.run.beta_max};
  const Rng rng(ctx.run.seed, 0x5a5a);
  std::vector<PhiVector> phi_ends;
  std::vector<TimeSeries> generated =
      model.arch().domain == Domain::time
          ? reverse_sample_time(model.score_fn(), n_samples, steps, n, m, sched, rng)
          : reverse_sample_freq(model.score_fn(), n_samples, steps, n, m, sched, rng, &phi_ends);

  SampleSet set;
  set.label = "generated-" + to_string(model.arch().domain);
  for (auto& ts : generated) set.samples.push_back(std::move(ts.values));
  if (mean.size() == m && sd.size() == m) set = destandardize(set, FeatureStats{mean, sd});

  const fs::path out = fs::path(args.out_dir) / "samples.csv";
  save_csv(out.string(), set, set.label);
  json outputs = {out.string()};
  if (!phi_ends.empty()) {
    SampleSet phis;
    for (auto& pv : phi_ends) phis.samples.push_back(std::move(pv.values));
    const fs::path pout = fs::path(args.out_dir) / "phi_end_state.csv";
    save_csv(pout.string(), phis, "phi-end-state");
    outputs.push_back(pout.string());
  }
  write_metadata(ctx, "sample",
                 {{"outputs", outputs},
                  {"checkpoint", ckpt_path},
                  {"checkpoint_config_hash", ckpt_hash},
                  {"n_samples", n_samples},
                  {"steps", steps},
                  {"domain", to_string(model.arch().domain)}});
  std::cout << "wrote " << out.string() << " (" << n_samples << " samples, " << steps
            << " steps)\n";
  return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& train_path,
                 const std::string& samples_path, const std::string& metric,
                 const std::string& domain_flag, int n_proj_flag) {
  Context ctx = make_context(args);
  const int n_proj = n_proj_flag > 0 ? n_proj_flag : ctx.run.n_projections;
  const Dataset train_ds = load_csv(train_path);

  std::vector<Domain> domains;
  if (domain_flag == "both" || domain_flag.empty())
    domains = {Domain::frequency, Domain::time};
  else
    domains = {domain_from_string(domain_flag)};

  json result = json::array();
  if (metric == "baselines") {
    for (Domain d : domains) {
      const SampleSet a = d == Domain::time ? train_ds.set : to_phi_domain(train_ds.set);
      const BaselineResult b = baselines(a, n_proj, ctx.run.seed);
      json entry = {{"metric", "baselines"},
                    {"domain", to_string(d)},
                    {"mean_baseline", sw_json(b.mean_baseline, "sliced", to_string(d), n_proj,
                                              ctx.run.seed)},
                    {"self_baseline", sw_json(b.self_baseline, "sliced", to_string(d), n_proj,
                                              ctx.run.seed)}};
      result.push_back(entry);
    }
  } else {
    const Dataset samples_ds = load_csv(samples_path);
    for (Domain d : domains) {
      const SampleSet a = d == Domain::time ? train_ds.set : to_phi_domain(train_ds.set);
      const SampleSet b = d == Domain::time ? samples_ds.set : to_phi_domain(samples_ds.set);
      if (metric == "sliced") {
        const SlicedWassersteinResult r = sliced_wasserstein(a, b, n_proj, ctx.run.seed);
        result.push_back(sw_json(r, "sliced", to_string(d), n_proj, ctx.run.seed));
      } else if (metric == "marginal") {
        const Vec mw = marginal_wasserstein(a, b);
        const double mean = mw.mean();
        double var = 0.0;
        for (Index i = 0; i < mw.size(); ++i) var += (mw(i) - mean) * (mw(i) - mean);
        var = mw.size() > 1 ? var / (mw.size() - 1) : 0.0;
        json entry = {{"metric", "marginal"},
                      {"domain", to_string(d)},
                      {"mean", mean},
                      {"two_standard_errors", 2.0 * std::sqrt(var / mw.size())},
                      {"n_projections", static_cast<int>(mw.size())},
                      {"seed", ctx.run.seed},
                      {"per_coordinate", std::vector<double>(mw.data(), mw.data() + mw.size())}};
        result.push_back(entry);
      } else {
        throw ConfigError("unknown metric '" + metric + "' (sliced|marginal|baselines)");
      }
    }
  }

  const fs::path out = fs::path(args.out_dir) / "evaluation.json";
  std::ofstream(out) << result.dump(2) << "\n";
  std::cout << result.dump(2) << "\n";
  write_metadata(ctx, "evaluate",
                 {{"outputs", {out.string()}},
                  {"metric", metric},
                  {"n_projections", n_proj},
                  {"train", train_path},
                  {"samples", samples_path}});
  return 0;
}

int run_analyze(const CommonArgs& args, const std::string& data_path) {
  Context ctx = make_context(args);
  const Dataset ds = load_csv(data_path);

  const fs::path pairs = fs::path(args.out_dir) / "delocalization.csv";
  std::ofstream out(pairs);
  out << "sample_id,delta_time,delta_freq\n";
  std::vector<double> dt, df;
  char buf[128];
  for (std::size_t i = 0; i < ds.set.samples.size(); ++i) {
    const TimeSeries ts(ds.set.samples[i]);
    const double a = delocalization(ts, Domain::time);
    const double b = delocalization(ts, Domain::frequency);
    dt.push_back(a);
    df.push_back(b);
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g", ds.sample_ids[i], a, b);
    out << buf << "\n";
  }
  auto summarize = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    const double half = 1.96 * std::sqrt(var / static_cast<double>(v.size()));
    return json{{"mean", mean}, {"ci95_half_width", half}};
  };
  json summary = {{"delta_time", summarize(dt)},
                  {"delta_freq", summarize(df)},
                  {"n_samples", ds.set.samples.size()}};
  const fs::path sj = fs::path(args.out_dir) / "analysis.json";
  std::ofstream(sj) << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";
  write_metadata(ctx, "analyze", {{"outputs", {pairs.string(), sj.string()}}, {"data", data_path}});
  return 0;
}

int run_intervene(const CommonArgs& args, const std::string& data_path,
                  std::vector<double> sigma_list) {
  Context ctx = make_context(args);
  if (sigma_list.empty())
    sigma_list = ctx.config.get_double_list("crossover", "sigma_list", {0, 5, 7, 10, 20});
  const KernelNorm norm = kernel_norm_from(ctx);
  const Dataset ds = load_csv(data_path);

  json outputs = json::array();
  json kernel_sums = json::object();
  for (double sigma : sigma_list) {
    SampleSet smoothed;
    smoothed.label = "sigma=" + std::to_string(sigma);
    for (const Mat& s : ds.set.samples)
      smoothed.samples.push_back(spectral_smooth(TimeSeries(s), sigma, norm).values);
    char name[64];
    std::snprintf(name, sizeof(name), "smoothed_sigma%g.csv", sigma);
    const fs::path out = fs::path(args.out_dir) / name;
    save_csv(out.string(), smoothed, smoothed.label);
    outputs.push_back(out.string());
    kernel_sums[std::to_string(sigma)] =
        sigma > 0 ? smoothing_kernel(ds.set.n(), sigma, norm).sum() : 1.0;
  }
  write_metadata(ctx, "intervene",
                 {{"outputs", outputs},
                  {"data", data_path},
                  {"kernel_norm", norm == KernelNorm::literal ? "literal" : "sum_to_one"},
                  {"kernel_sums", kernel_sums}});
  std::cout << "wrote " << outputs.size() << " smoothed dataset(s)\n";
  return 0;
}

int run_crossover(const CommonArgs& args, const std::string& data_path,
                  std::vector<double> sigma_list) {
  Context ctx = make_context(args);
  if (sigma_list.empty())
    sigma_list = ctx.config.get_double_list("crossover", "sigma_list", {0, 5, 7, 10, 20});

  RunConfig cfg = ctx.run;
  cfg.epochs = static_cast<int>(ctx.config.get_int("crossover", "epochs", 50));
  CrossoverOptions opts;
  opts.n_generate = static_cast<int>(ctx.config.get_int("crossover", "n_samples", 1000));
  opts.reverse_steps = static_cast<int>(ctx.config.get_int("crossover", "steps", 1000));
  opts.kernel_norm = kernel_norm_from(ctx);
  opts.cell_cache_dir = (fs::path(args.out_dir) / "cells").string();

  const Dataset ds = load_csv(data_path);
  const auto rows = crossover_run(ds.set, sigma_list, cfg, ctx.run.seed, opts);
  const fs::path out = fs::path(args.out_dir) / "crossover.csv";
  write_crossover_csv(out.string(), rows);

  json kernel_sums = json::object();
  for (double sigma : sigma_list)
    kernel_sums[std::to_string(sigma)] =
        sigma > 0 ? smoothing_kernel(ds.set.n(), sigma, opts.kernel_norm).sum() : 1.0;
  write_metadata(ctx, "crossover",
                 {{"outputs", {out.string()}},
                  {"data", data_path},
                  {"sigma_list", sigma_list},
                  {"epochs", cfg.epochs},
                  {"n_generate", opts.n_generate},
                  {"kernel_sums", kernel_sums}});
  std::cout << "wrote " << out.string() << " (" << rows.size() << " rows)\n";
  return 0;
}

int run_verify(const CommonArgs& args, const std::string& suite, int n_paths) {
  Context ctx = make_context(args);
  json report;
  bool passed = false;
  if (suite == "mirrored-bm") {
    const MirroredStatsReport rep = mirrored_stats_check(
        ctx.run.n, ctx.run.m, n_paths > 0 ? n_paths : 100000, {0.25, 0.5, 0.75, 1.0},
        ctx.run.seed);
    report = rep.to_json();
    passed = rep.passed;
  } else if (suite == "commutation") {
    Rng rng(ctx.run.seed);
    const TimeSeries x0(rng.normal_matrix(ctx.run.n, ctx.run.m));
    const double dev =
        forward_commutation_check(x0, 1000, ctx.run.seed, {ctx.run.beta_min, ctx.run.beta_max});
    passed = dev <= tol::sde;
    report = {{"suite", "commutation"}, {"N", ctx.run.n},   {"M", ctx.run.m},
              {"steps", 1000},          {"max_deviation", dev}, {"tolerance", tol::sde},
              {"passed", passed}};
  } else if (suite == "equivalence") {
    const VpSchedule sched{ctx.run.beta_min, ctx.run.beta_max};
    Rng rng(ctx.run.seed);
    double worst = 0.0;
    const int triples = 100;
    for (int i = 0; i < triples; ++i) {
      Rng r = rng.substream(i);
      const Index n = 1 + static_cast<Index>(r.uniform01() * 9);
      const Index m = 1 + static_cast<Index>(r.uniform01() * 2);
      ModelArchitecture arch;
      arch.n = n;
      arch.m = m;
      arch.domain = Domain::frequency;
      arch.hidden = {16, 16};
      arch.rff_features = 8;
      arch.embed_dim = 8;
      arch.rff_seed = r.next_u64();
      ScoreModel model(arch);
      model.init_params(r);
      for (Index p = 0; p < model.param_count(); ++p) model.params()(p) += 0.2 * r.normal();
      std::vector<Mat> batch;
      for (int b = 0; b < 8; ++b) batch.push_back(r.normal_matrix(n, m));
      const double t = r.uniform(0.05, 1.0);
      const EquivalenceResult res = equivalence_check(model, batch, t, sched, r);
      worst = std::max(worst, res.abs_diff / (1.0 + res.loss_time));
    }
    passed = worst <= tol::sde;
    report = {{"suite", "equivalence"},
              {"triples", triples},
              {"max_relative_difference", worst},
              {"tolerance", tol::sde},
              {"passed", passed}};
  } else {
    throw ConfigError("unknown verify suite '" + suite +
                      "' (mirrored-bm|commutation|equivalence)");
  }

  std::cout << report.dump(2) << "\n";
  const fs::path out = fs::path(args.out_dir) / ("verify_" + suite + ".json");
  std::ofstream(out) << report.dump(2) << "\n";
  write_metadata(ctx, "verify", {{"outputs", {out.string()}}, {"suite", suite}});
  return passed ? 0 : 1;
}

const char* error_category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const NumericsError*>(&e)) return "numerics";
  if (dynamic_cast<const TrainError*>(&e)) return "train";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "argument";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-based diffusion of time series in the time and frequency domains"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string kind_flag, domain_flag, data_path, ckpt_path, train_path, samples_path;
  std::string metric = "sliced", eval_domain = "both", suite = "mirrored-bm";
  int n_samples = 0, steps = 0, n_proj = 0, n_paths = 0;
  std::vector<double> sigma_list;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, args);
  synth->add_option("--kind", kind_flag, "freq_localized|time_localized|gaussian_iid");
  synth->add_option("--n-samples", n_samples, "sample count");

  CLI::App* train_cmd = app.add_subcommand("train", "train a score model");
  add_common(train_cmd, args);
  train_cmd->add_option("--domain", domain_flag, "time|frequency");
  train_cmd->add_option("--data", data_path, "training CSV")->required();

  CLI::App* sample = app.add_subcommand("sample", "generate series from a checkpoint");
  add_common(sample, args);
  sample->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  sample->add_option("--n-samples", n_samples, "number of series");
  sample->add_option("--steps", steps, "reverse integrator steps");

  CLI::App* evaluate = app.add_subcommand("evaluate", "distances between sample sets");
  add_common(evaluate, args);
  evaluate->add_option("--train", train_path, "reference CSV")->required();
  evaluate->add_option("--samples", samples_path, "generated CSV");
  evaluate->add_option("--metric", metric, "sliced|marginal|baselines");
  evaluate->add_option("--domain", eval_domain, "time|frequency|both");
  evaluate->add_option("--n-projections", n_proj, "slice count");

  CLI::App* analyze = app.add_subcommand("analyze", "per-sample delocalization metrics");
  add_common(analyze, args);
  analyze->add_option("--data", data_path, "dataset CSV")->required();

  CLI::App* intervene = app.add_subcommand("intervene", "spectral Gaussian smoothing");
  add_common(intervene, args);
  intervene->add_option("--data", data_path, "dataset CSV")->required();
  intervene->add_option("--sigma-list", sigma_list, "kernel widths")->delimiter(',');

  CLI::App* crossover = app.add_subcommand("crossover", "smoothing/retraining grid");
  add_common(crossover, args);
  crossover->add_option("--data", data_path, "base dataset CSV")->required();
  crossover->add_option("--sigma-list", sigma_list, "kernel widths")->delimiter(',');

  CLI::App* verify = app.add_subcommand("verify", "statistical self-checks");
  add_common(verify, args);
  verify->add_option("--suite", suite, "mirrored-bm|commutation|equivalence");
  verify->add_option("--n-paths", n_paths, "Monte-Carlo paths");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return run_synth(args, kind_flag, n_samples);
    if (train_cmd->parsed()) return run_train(args, domain_flag, data_path);
    if (sample->parsed()) return run_sample(args, ckpt_path, n_samples, steps);
    if (evaluate->parsed())
      return run_evaluate(args, train_path, samples_path, metric, eval_domain, n_proj);
    if (analyze->parsed()) return run_analyze(args, data_path);
    if (intervene->parsed()) return run_intervene(args, data_path, sigma_list);
    if (crossover->parsed()) return run_crossover(args, data_path, sigma_list);
    if (verify->parsed()) return run_verify(args, suite, n_paths);
  } catch (const std::exception& e) {
    json err = {{"category", error_category(e)}, {"message", e.what()}};
    std::cerr << "error: " << err.dump() << "\n";
    return 2;
  }
  return 0;
}
