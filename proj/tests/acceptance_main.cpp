// Acceptance suite: every release criterion in one binary, one pass/fail
// line per criterion. Exit code is the number of failed criteria.
//
// The two training-heavy criteria (7 and 8) cache per-cell results under
// ./acceptance_cache; the computations are deterministic, so cached cells
// are byte-equivalent to fresh ones. Delete the directory to force a rerun.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

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

const char* kCacheDir = "acceptance_cache";

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 == 1 ? v[v.size() / 2]
                           : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

// ---------------------------------------------------------------------------
// 1. DFT algebra.

bool criterion1(std::string& note) {
  Check c;
  for (Index n : {1, 4, 16, 17, 64, 257, 512}) {
    const double dev = unitarity_check(n);
    c.require(dev <= 1e-12, "unitarity N=" + std::to_string(n) + " dev=" + std::to_string(dev));
  }

  Rng rng(101);
  double worst_rt = 0.0, worst_parseval = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const TimeSeries x(rng.normal_matrix(17, 3));
    const SpectralSeries s = dft(x);
    worst_rt = std::max(worst_rt, (idft(s).values - x.values).cwiseAbs().maxCoeff());
    worst_parseval = std::max(
        worst_parseval,
        std::abs(x.values.squaredNorm() - s.values.squaredNorm()) / x.values.squaredNorm());
    const SpectralSeries s2 = phi_inv(phi(s));
    c.require((s2.values - s.values).cwiseAbs().maxCoeff() <= 1e-12, "phi bijection drift");
  }
  c.require(worst_rt <= 1e-10, "round trip " + std::to_string(worst_rt));
  c.require(worst_parseval <= 1e-10, "parseval " + std::to_string(worst_parseval));

  Mat x4(4, 1);
  x4 << 1, 2, 3, 4;
  const SpectralSeries s4 = dft(TimeSeries(x4));
  const std::complex<double> want[4] = {{5, 0}, {-1, 1}, {-1, 0}, {-1, -1}};
  for (Index k = 0; k < 4; ++k)
    c.require(std::abs(s4.values(k, 0) - want[k]) <= 1e-12, "worked DFT example");
  Mat phi_want(4, 1);
  phi_want << 5, -1, -1, 1;
  c.require((phi(s4).values - phi_want).cwiseAbs().maxCoeff() <= 1e-12, "worked phi example");

  note = "unitarity<=1e-12 (N up to 512), round trip " + std::to_string(worst_rt);
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 2. Mirrored Brownian motion statistics.

bool criterion2(std::string& note) {
  Check c;
  const MirroredStatsReport even = mirrored_stats_check(6, 1, 100000, {0.5, 1.0}, 7001);
  const MirroredStatsReport odd = mirrored_stats_check(5, 1, 100000, {0.5, 1.0}, 7002);
  for (const auto* rep : {&even, &odd}) {
    c.require(rep->max_variance_ratio_deviation <= 0.03,
              "variance ratio dev " + std::to_string(rep->max_variance_ratio_deviation));
    c.require(rep->max_abs_corr_within_block <= 0.02, "within-block corr");
    c.require(rep->max_abs_corr_cross_block <= 0.02, "cross-block corr");
    c.require(rep->max_abs_corr_disjoint_increments <= 0.02, "increment corr");
    c.require(rep->mirror_max_deviation == 0.0, "mirror deviation nonzero");
  }
  note = "var dev " + std::to_string(even.max_variance_ratio_deviation) + " (N=6), " +
         std::to_string(odd.max_variance_ratio_deviation) + " (N=5); corr <= " +
         std::to_string(std::max(even.max_abs_corr_cross_block, odd.max_abs_corr_cross_block));
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 3. Forward commutation.

bool criterion3(std::string& note) {
  Check c;
  Rng rng(301);
  const double d1 = forward_commutation_check(TimeSeries(rng.normal_matrix(16, 2)), 1000, 31);
  const double d2 = forward_commutation_check(TimeSeries(rng.normal_matrix(33, 1)), 1000, 32);
  c.require(d1 <= 1e-8, "N=16,M=2 dev " + std::to_string(d1));
  c.require(d2 <= 1e-8, "N=33,M=1 dev " + std::to_string(d2));
  note = "max deviations " + std::to_string(d1) + ", " + std::to_string(d2);
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 4. Score-matching equivalence.

bool criterion4(std::string& note) {
  Check c;
  const VpSchedule sched;
  Rng base(401);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Rng r = base.substream(i);
    ModelArchitecture arch;
    arch.n = 1 + static_cast<Index>(r.uniform01() * 9);
    arch.m = 1 + static_cast<Index>(r.uniform01() * 2);
    arch.domain = Domain::frequency;
    arch.hidden = {16, 16};
    arch.rff_features = 8;
    arch.embed_dim = 8;
    arch.rff_seed = r.next_u64();
    ScoreModel model(arch);
    model.init_params(r);
    for (Index p = 0; p < model.param_count(); ++p) model.params()(p) += 0.2 * r.normal();
    std::vector<Mat> batch;
    const int bsz = 4 + static_cast<int>(r.uniform01() * 12);
    for (int b = 0; b < bsz; ++b) batch.push_back(r.normal_matrix(arch.n, arch.m));
    const double t = r.uniform(0.05, 1.0);
    const EquivalenceResult res = equivalence_check(model, batch, t, sched, r);
    const double rel = res.abs_diff / (1.0 + res.loss_time);
    worst = std::max(worst, rel);
    c.require(rel <= 1e-8, "triple " + std::to_string(i));
  }
  note = "max relative difference " + std::to_string(worst) + " over 100 triples";
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 5. Gaussian-oracle end-to-end sampling.

bool criterion5(std::string& note) {
  Check c;
  const VpSchedule sched;
  const Index n = 4, m = 2;
  const Index d = n * m;
  const int count = 10000, steps = 1000;

  auto stats_ok = [&](const std::vector<TimeSeries>& out, const std::string& tag) {
    Mat flat(d, count);
    for (int i = 0; i < count; ++i)
      flat.col(i) = Eigen::Map<const Vec>(out[static_cast<std::size_t>(i)].values.data(), d);
    const Vec mean = flat.rowwise().mean();
    Mat centered = flat.colwise() - mean;
    const Mat cov = centered * centered.transpose() / double(count);
    c.require(mean.cwiseAbs().maxCoeff() <= 0.03,
              tag + " mean " + std::to_string(mean.cwiseAbs().maxCoeff()));
    for (Index i = 0; i < d; ++i)
      c.require(std::abs(cov(i, i) - 1.0) <= 0.05,
                tag + " var(" + std::to_string(i) + ")=" + std::to_string(cov(i, i)));
    double off = 0.0;
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j)
        if (i != j) off = std::max(off, std::abs(cov(i, j)));
    c.require(off <= 0.05, tag + " offdiag " + std::to_string(off));
    return std::make_pair(mean.cwiseAbs().maxCoeff(), off);
  };

  const auto time_out = reverse_sample_time(
      gaussian_oracle_fn(Mat::Zero(n, m), 1.0, Domain::time, n, m, sched), count, steps, n, m,
      sched, Rng(501));
  const auto ts = stats_ok(time_out, "time");

  const auto freq_out = reverse_sample_freq(
      gaussian_oracle_fn(Mat::Zero(n, m), 1.0, Domain::frequency, n, m, sched), count, steps, n,
      m, sched, Rng(502));
  const auto fs_ = stats_ok(freq_out, "freq");

  note = "max |mean| " + std::to_string(std::max(ts.first, fs_.first)) + ", max |offdiag| " +
         std::to_string(std::max(ts.second, fs_.second)) + " (n=10^4, 1000 steps)";
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 6. Gradient checks.

bool criterion6(std::string& note) {
  Check c;
  const VpSchedule sched;
  double worst = 0.0;
  Rng base(601);
  for (int rep = 0; rep < 3; ++rep) {
    Rng r = base.substream(rep);
    for (Domain domain : {Domain::time, Domain::frequency}) {
      ModelArchitecture arch;
      arch.n = 2 + static_cast<Index>(r.uniform01() * 3);
      arch.m = 1 + static_cast<Index>(r.uniform01() * 2);
      arch.domain = domain;
      arch.hidden = {10, 8};
      arch.rff_features = 8;
      arch.embed_dim = 6;
      arch.rff_seed = r.next_u64();
      ScoreModel model(arch);
      model.init_params(r);
      for (Index p = 0; p < model.param_count(); ++p) model.params()(p) += 0.05 * r.normal();
      std::vector<Mat> batch;
      for (int b = 0; b < 6; ++b) batch.push_back(r.normal_matrix(arch.n, arch.m));
      const LambdaScaling lam = lambda_scaling(arch.n);
      const Rng noise(base.substream(100 + rep).next_u64());
      auto eval = [&](bool grad) {
        return domain == Domain::time
                   ? dsm_loss_time(model, batch, sched, 1e-3, noise, grad)
                   : dsm_loss_freq(model, batch, sched, lam, 1e-3, noise, grad);
      };
      const LossGrad lg = eval(true);
      const double h = 1e-5;
      Vec fd(model.param_count());
      for (Index i = 0; i < model.param_count(); ++i) {
        const double keep = model.params()(i);
        model.params()(i) = keep + h;
        const double up = eval(false).loss;
        model.params()(i) = keep - h;
        const double dn = eval(false).loss;
        model.params()(i) = keep;
        fd(i) = (up - dn) / (2.0 * h);
      }
      const double rel =
          (lg.grad - fd).cwiseAbs().maxCoeff() / (fd.cwiseAbs().maxCoeff() + 1e-12);
      worst = std::max(worst, rel);
      c.require(rel <= 1e-5, to_string(domain) + " rep " + std::to_string(rep) + " rel " +
                                 std::to_string(rel));
    }
  }
  note = "max relative gradient error " + std::to_string(worst);
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 7/8 shared machinery: train one model on a sample set, generate, measure.

struct CellMetrics {
  double sw_time = 0.0, sw_freq = 0.0;
};

CellMetrics run_cell(const SampleSet& train_set, const SampleSet& val_set, Domain domain,
                     std::uint64_t seed, int epochs, int n_generate, int n_proj,
                     const std::string& cache_key) {
  const fs::path cache = fs::path(kCacheDir) / (cache_key + ".json");
  if (fs::exists(cache)) {
    json j;
    std::ifstream(cache) >> j;
    return {j.at("sw_time"), j.at("sw_freq")};
  }

  RunConfig cfg;
  cfg.seed = seed;
  cfg.n = train_set.n();
  cfg.m = train_set.m();
  cfg.epochs = epochs;
  cfg.warmup_epochs = 5;  // desk-scale schedule for short runs
  cfg.lr_max = 2e-3;
  auto [model, report] = train(train_set.samples, val_set.samples, domain, cfg);

  const VpSchedule sched{cfg.beta_min, cfg.beta_max};
  const Rng sample_rng(detail::mix2(seed, 55));
  std::vector<TimeSeries> generated =
      domain == Domain::time
          ? reverse_sample_time(model.score_fn(), n_generate, 1000, cfg.n, cfg.m, sched,
                                sample_rng)
          : reverse_sample_freq(model.score_fn(), n_generate, 1000, cfg.n, cfg.m, sched,
                                sample_rng);
  SampleSet gen;
  gen.label = "generated";
  for (auto& ts : generated) gen.samples.push_back(std::move(ts.values));

  CellMetrics out;
  out.sw_time = sliced_wasserstein(train_set, gen, n_proj, 9901).mean;
  out.sw_freq =
      sliced_wasserstein(to_phi_domain(train_set), to_phi_domain(gen), n_proj, 9902).mean;

  fs::create_directories(kCacheDir);
  std::ofstream(cache) << json{{"sw_time", out.sw_time},
                               {"sw_freq", out.sw_freq},
                               {"domain", to_string(domain)},
                               {"seed", seed},
                               {"epochs", epochs},
                               {"n_generate", n_generate}}
                              .dump(2)
                       << "\n";
  return out;
}

// 7. Desk-scale domain comparison on frequency-localized data.

bool criterion7(std::string& note) {
  Check c;
  SynthSpec spec;
  spec.kind = SynthKind::freq_localized;
  spec.n_samples = 2000;
  spec.n = 32;
  spec.m = 1;
  spec.noise_amp = 0.3;  // desk-scale noise floor keeps the conditioning sane
  spec.seed = 2025;
  Dataset ds;
  ds.set = synth_generate(spec);
  for (int i = 0; i < spec.n_samples; ++i) ds.sample_ids.push_back(i);
  const Dataset standardized = standardize(ds);
  auto [train_ds, val_ds] = split(standardized, 0.1, 7);

  const int n_proj = 2000, epochs = 50, n_generate = 4000;
  std::vector<double> ft, ff, tt, tf;  // per-seed SW values: freq/time model x time/freq metric
  for (std::uint64_t seed : {901, 902, 903}) {
    const CellMetrics fm =
        run_cell(train_ds.set, val_ds.set, Domain::frequency, seed, epochs, n_generate, n_proj,
                 "c7_freq_seed" + std::to_string(seed));
    const CellMetrics tm =
        run_cell(train_ds.set, val_ds.set, Domain::time, seed, epochs, n_generate, n_proj,
                 "c7_time_seed" + std::to_string(seed));
    ft.push_back(fm.sw_time);
    ff.push_back(fm.sw_freq);
    tt.push_back(tm.sw_time);
    tf.push_back(tm.sw_freq);
  }
  const double med_ft = median(ft), med_ff = median(ff);
  const double med_tt = median(tt), med_tf = median(tf);

  const BaselineResult bt = baselines(train_ds.set, n_proj, 9911);
  const BaselineResult bf = baselines(to_phi_domain(train_ds.set), n_proj, 9912);

  c.require(med_ft <= med_tt, "time-metric: freq model worse than time model");
  c.require(med_ff <= med_tf, "freq-metric: freq model worse than time model");
  for (auto [val, name] : {std::pair{med_ft, "freq model (time metric)"},
                           std::pair{med_tt, "time model (time metric)"}}) {
    c.require(val < bt.mean_baseline.mean, std::string(name) + " does not beat mean baseline");
    c.require(val <= 2.0 * bt.self_baseline.mean, std::string(name) + " beyond 2x self baseline");
  }
  for (auto [val, name] : {std::pair{med_ff, "freq model (freq metric)"},
                           std::pair{med_tf, "time model (freq metric)"}}) {
    c.require(val < bf.mean_baseline.mean, std::string(name) + " does not beat mean baseline");
    c.require(val <= 2.0 * bf.self_baseline.mean, std::string(name) + " beyond 2x self baseline");
  }

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "SW medians t-metric freq/time %.4f/%.4f, f-metric %.4f/%.4f; baselines mean "
                "%.4f/%.4f self %.4f/%.4f",
                med_ft, med_tt, med_ff, med_tf, bt.mean_baseline.mean, bf.mean_baseline.mean,
                bt.self_baseline.mean, bf.self_baseline.mean);
  note = buf;
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// 8. Crossover trends under spectral smoothing.

bool criterion8(std::string& note) {
  Check c;
  SynthSpec spec;
  spec.kind = SynthKind::freq_localized;
  spec.n_samples = 2000;
  spec.n = 64;  // sigma = 20 stays well below the Nyquist scale
  spec.m = 1;
  spec.harmonics = 3;
  spec.noise_amp = 0.3;
  spec.seed = 2025;
  const SampleSet base = synth_generate(spec);

  RunConfig cfg;
  cfg.n = spec.n;
  cfg.m = spec.m;
  cfg.epochs = 50;
  cfg.warmup_epochs = 5;  // desk-scale schedule for short runs
  cfg.n_projections = 1000;
  CrossoverOptions opts;
  opts.n_generate = 1500;
  opts.reverse_steps = 1000;
  opts.cell_cache_dir = (fs::path(kCacheDir) / "c8_cells").string();

  const std::vector<double> sigmas = {0, 5, 7, 10, 20};
  const std::vector<std::uint64_t> seeds = {201, 202, 203};
  std::vector<std::vector<CrossoverRow>> tables;
  for (std::uint64_t seed : seeds) tables.push_back(crossover_run(base, sigmas, cfg, seed, opts));

  auto lookup = [&](const std::vector<CrossoverRow>& rows, double sigma, Domain dd,
                    Domain md) -> const CrossoverRow& {
    for (const auto& r : rows)
      if (r.sigma == sigma && r.diffusion_domain == dd && r.metric_domain == md) return r;
    throw std::logic_error("missing crossover row");
  };

  // Delocalization medians of the smoothed datasets (median over seeds).
  std::vector<double> med_dt, med_df;
  for (double sigma : sigmas) {
    std::vector<double> dts, dfs;
    for (const auto& t : tables) {
      const CrossoverRow& r = lookup(t, sigma, Domain::time, Domain::time);
      dts.push_back(r.delta_time_median);
      dfs.push_back(r.delta_freq_median);
    }
    med_dt.push_back(median(dts));
    med_df.push_back(median(dfs));
  }
  for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
    c.require(med_df[i + 1] >= med_df[i] - 1e-12,
              "delta_freq not nondecreasing at sigma step " + std::to_string(i));
    c.require(med_dt[i + 1] <= med_dt[i] + 1e-12,
              "delta_time not nonincreasing at sigma step " + std::to_string(i));
  }
  c.require(med_df.back() > med_df.front(), "delta_freq not strictly larger at sigma=20");
  c.require(med_dt.back() < med_dt.front(), "delta_time not strictly smaller at sigma=20");

  // Frequency-advantage gap SW(time model) - SW(freq model), median over
  // seeds, nonincreasing in sigma for both metric domains.
  for (Domain md : {Domain::time, Domain::frequency}) {
    std::vector<double> gaps;
    for (double sigma : sigmas) {
      std::vector<double> g;
      for (const auto& t : tables)
        g.push_back(lookup(t, sigma, Domain::time, md).sw_mean -
                    lookup(t, sigma, Domain::frequency, md).sw_mean);
      gaps.push_back(median(g));
    }
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
      c.require(gaps[i + 1] <= gaps[i] + 1e-12, to_string(md) + "-metric gap rises at step " +
                                                    std::to_string(i) + " (" +
                                                    std::to_string(gaps[i]) + " -> " +
                                                    std::to_string(gaps[i + 1]) + ")");
    if (md == Domain::time) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "time-metric gap %.4f -> %.4f; delta_t %.2f -> %.2f, delta_f %.2f -> %.2f",
                    gaps.front(), gaps.back(), med_dt.front(), med_dt.back(), med_df.front(),
                    med_df.back());
      note = buf;
    }
  }
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

// ---------------------------------------------------------------------------
// 9. Metric sanity.

bool criterion9(std::string& note) {
  Check c;
  Rng rng(901);
  SampleSet a;
  for (int i = 0; i < 200; ++i) a.samples.push_back(rng.normal_matrix(4, 2));
  const SlicedWassersteinResult self = sliced_wasserstein(a, a, 256, 1);
  c.require(self.mean == 0.0, "SW(A,A) nonzero");

  const Mat shift = rng.normal_matrix(4, 2);
  SampleSet b;
  for (const Mat& s : a.samples) b.samples.push_back(s + shift);
  const SlicedWassersteinResult tr = sliced_wasserstein(a, b, 10000, 2);
  const double want = sphere_average_abs_projection(shift.norm(), 8);
  c.require(std::abs(tr.mean - want) <= 0.02 * want,
            "translation test " + std::to_string(tr.mean) + " vs " + std::to_string(want));

  Mat delta = Mat::Zero(8, 1);
  delta(5, 0) = 3.0;
  c.require(delocalization(TimeSeries(delta), Domain::time) == 0.0, "delta signal");
  c.require(delocalization(TimeSeries(Mat::Ones(4, 1)), Domain::time) == 1.0, "uniform N=4");

  note = "translation " + std::to_string(tr.mean) + " vs analytic " + std::to_string(want);
  if (!c.ok) note += " | " + c.detail.str();
  return c.ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    std::istringstream in(argv[i]);
    std::string tok;
    while (std::getline(in, tok, ',')) only.insert(std::stoi(tok));
  }

  struct Entry {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Entry> criteria = {
      {1, "DFT algebra", criterion1},
      {2, "mirrored Brownian statistics", criterion2},
      {3, "forward commutation", criterion3},
      {4, "score-matching equivalence", criterion4},
      {5, "Gaussian-oracle sampling", criterion5},
      {6, "gradient checks", criterion6},
      {7, "domain comparison on localized data", criterion7},
      {8, "smoothing crossover trends", criterion8},
      {9, "metric sanity", criterion9},
  };

  int failures = 0;
  for (const auto& e : criteria) {
    if (!only.empty() && !only.count(e.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    std::string note;
    bool ok = false;
    try {
      ok = e.fn(note);
    } catch (const std::exception& ex) {
      note = std::string("exception: ") + ex.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %d: %s (%.1fs) — %s\n", ok ? "PASS" : "FAIL", e.id, e.name, secs,
                note.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
  return failures;
}
