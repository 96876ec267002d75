// Score models and denoising score matching.
//
// The score network is an MLP over the flattened series concatenated with a
// diffusion-time embedding (random Fourier features through a learnable
// dense layer). Gradients are computed by hand; every loss below returns the
// exact parameter gradient of what it evaluates.
//
// Domain conventions:
//   * Time models fit the conditional score -eps/sigma(t); their net output
//     is the score estimate used by the reverse integrator directly.
//   * Frequency models consume phi coordinates and fit the Lambda^2-scaled
//     conditional score -Lambda eps/sigma(t). The sampler-facing estimate of
//     the raw phi-score is therefore Lambda^{-2} times the net output (the
//     reverse SDE then multiplies by Lambda^2 again, cancelling exactly).

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqdiff/core.hpp"
#include "freqdiff/diffusion.hpp"
#include "freqdiff/spectral.hpp"
#include "freqdiff/stochastic.hpp"

namespace freqdiff {

/// Fixed random Fourier features of the diffusion time. Half the features
/// are sines, half cosines, over seeded Gaussian frequencies.
struct TimeEmbedding {
  int n_features = 64;
  Vec frequencies;  // n_features / 2 draws ~ N(0, scale^2), fixed

  static TimeEmbedding make(int n_features, double scale, std::uint64_t seed) {
    if (n_features < 2 || n_features % 2 != 0)
      throw ConfigError("TimeEmbedding: n_features must be even and >= 2");
    TimeEmbedding emb;
    emb.n_features = n_features;
    Rng rng(seed);
    emb.frequencies = Vec(n_features / 2);
    for (Index j = 0; j < emb.frequencies.size(); ++j) emb.frequencies(j) = scale * rng.normal();
    return emb;
  }

  Mat features(const Vec& ts) const {
    const Index half = frequencies.size();
    Mat out(n_features, ts.size());
    for (Index b = 0; b < ts.size(); ++b) {
      for (Index j = 0; j < half; ++j) {
        const double arg = 2.0 * M_PI * frequencies(j) * ts(b);
        out(j, b) = std::sin(arg);
        out(half + j, b) = std::cos(arg);
      }
    }
    return out;
  }
};

struct ModelArchitecture {
  Index n = 0, m = 0;
  Domain domain = Domain::time;
  std::vector<int> hidden = {256, 256, 256};
  int rff_features = 64;
  double rff_scale = 16.0;
  int embed_dim = 64;
  std::uint64_t rff_seed = 0;

  Index flat_dim() const { return n * m; }

  nlohmann::json to_json() const {
    return {{"n", n},
            {"m", m},
            {"domain", to_string(domain)},
            {"hidden", hidden},
            {"rff_features", rff_features},
            {"rff_scale", rff_scale},
            {"embed_dim", embed_dim},
            {"rff_seed", rff_seed}};
  }

  static ModelArchitecture from_json(const nlohmann::json& j) {
    ModelArchitecture a;
    a.n = j.at("n").get<Index>();
    a.m = j.at("m").get<Index>();
    a.domain = domain_from_string(j.at("domain").get<std::string>());
    a.hidden = j.at("hidden").get<std::vector<int>>();
    a.rff_features = j.at("rff_features").get<int>();
    a.rff_scale = j.at("rff_scale").get<double>();
    a.embed_dim = j.at("embed_dim").get<int>();
    a.rff_seed = j.at("rff_seed").get<std::uint64_t>();
    return a;
  }
};

namespace detail {

inline double silu(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return x * s;
}

inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace detail

/// Parametric score map: flat parameter vector plus the fixed time embedding
/// frequencies. eval maps (flattened input, t) to an output of equal shape.
class ScoreModel {
 public:
  explicit ScoreModel(ModelArchitecture arch) : arch_(std::move(arch)) {
    if (arch_.n < 1 || arch_.m < 1) throw ConfigError("ScoreModel: N >= 1 and M >= 1 violated");
    if (arch_.hidden.empty()) throw ConfigError("ScoreModel: at least one hidden layer required");
    embedding_ = TimeEmbedding::make(arch_.rff_features, arch_.rff_scale, arch_.rff_seed);
    build_offsets();
    params_ = Vec::Zero(total_params_);
    if (arch_.domain == Domain::frequency) {
      const Vec lam = lambda_scaling(arch_.n).diag;
      lambda_flat_ = Vec(arch_.flat_dim());
      for (Index i = 0; i < lambda_flat_.size(); ++i) lambda_flat_(i) = lam(i % arch_.n);
    }
  }

  const ModelArchitecture& arch() const { return arch_; }
  Index param_count() const { return total_params_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  /// Xavier-uniform hidden layers, zero-initialized final layer so the
  /// untrained model outputs exactly zero.
  void init_params(Rng& rng) {
    params_.setZero();
    auto fill = [&](Index off, Index rows, Index cols) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (Index i = 0; i < rows * cols; ++i) params_(off + i) = rng.uniform(-a, a);
    };
    fill(we_off_, arch_.embed_dim, arch_.rff_features);
    for (std::size_t l = 0; l < layer_w_off_.size() - 1; ++l)
      fill(layer_w_off_[l], layer_rows_[l], layer_cols_[l]);
    // final layer (weights and bias) stays zero
  }

  struct Tape {
    Mat rff;              // rff_features x B
    Mat a0;               // (d + embed) x B
    std::vector<Mat> z;   // pre-activations per hidden layer
    std::vector<Mat> a;   // activations per hidden layer
  };

  Mat net_forward(const Mat& inputs, const Vec& ts, Tape* tape) const {
    const Index d = arch_.flat_dim();
    if (inputs.rows() != d)
      throw DataError("ScoreModel: input shape mismatch (expected " + std::to_string(d) +
                      " rows, got " + std::to_string(inputs.rows()) + ")");
    if (ts.size() != inputs.cols()) throw DataError("ScoreModel: one diffusion time per column required");
    const Index b = inputs.cols();

    Mat rff = embedding_.features(ts);
    Mat a0(d + arch_.embed_dim, b);
    a0.topRows(d) = inputs;
    a0.bottomRows(arch_.embed_dim) = w(we_off_, arch_.embed_dim, arch_.rff_features) * rff;
    a0.bottomRows(arch_.embed_dim).colwise() += v(be_off_, arch_.embed_dim);

    const std::size_t n_layers = layer_w_off_.size();
    std::vector<Mat> zs, as;
    Mat cur = a0;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      Mat z = w(layer_w_off_[l], layer_rows_[l], layer_cols_[l]) * cur;
      z.colwise() += v(layer_b_off_[l], layer_rows_[l]);
      Mat act = z.unaryExpr([](double x) { return detail::silu(x); });
      if (tape) {
        zs.push_back(std::move(z));
        as.push_back(act);
      }
      cur = std::move(act);
    }
    const std::size_t lo = n_layers - 1;
    Mat out = w(layer_w_off_[lo], layer_rows_[lo], layer_cols_[lo]) * cur;
    out.colwise() += v(layer_b_off_[lo], layer_rows_[lo]);

    if (tape) {
      tape->rff = std::move(rff);
      tape->a0 = std::move(a0);
      tape->z = std::move(zs);
      tape->a = std::move(as);
    }
    return out;
  }

  Mat net_output(const Mat& inputs, const Vec& ts) const { return net_forward(inputs, ts, nullptr); }

  Mat net_output(const Mat& inputs, double t) const {
    return net_output(inputs, Vec::Constant(inputs.cols(), t));
  }

  /// Parameter gradient for an upstream dL/dout of the last net_forward that
  /// filled `tape`.
  Vec net_backward(const Tape& tape, const Mat& dl_dout) const {
    const Index d = arch_.flat_dim();
    Vec grad = Vec::Zero(total_params_);
    const std::size_t n_layers = layer_w_off_.size();
    const std::size_t lo = n_layers - 1;

    Mat delta = dl_dout;  // gradient wrt the current layer's pre-activation
    for (std::size_t li = lo; li + 1 > 0; --li) {
      const Mat& below = (li == 0) ? tape.a0 : tape.a[li - 1];
      gw(grad, layer_w_off_[li], layer_rows_[li], layer_cols_[li]).noalias() +=
          delta * below.transpose();
      gv(grad, layer_b_off_[li], layer_rows_[li]) += delta.rowwise().sum();
      if (li == 0) {
        Mat d0 = w(layer_w_off_[0], layer_rows_[0], layer_cols_[0]).transpose() * delta;
        Mat de = d0.bottomRows(arch_.embed_dim);
        gw(grad, we_off_, arch_.embed_dim, arch_.rff_features).noalias() +=
            de * tape.rff.transpose();
        gv(grad, be_off_, arch_.embed_dim) += de.rowwise().sum();
        break;
      }
      Mat back = w(layer_w_off_[li], layer_rows_[li], layer_cols_[li]).transpose() * delta;
      delta = back.cwiseProduct(
          tape.z[li - 1].unaryExpr([](double x) { return detail::silu_grad(x); }));
    }
    return grad;
  }

  /// Batched score estimate for the reverse integrators (see header comment).
  ScoreFn score_fn() const {
    if (arch_.domain == Domain::time) {
      return [this](const Mat& x, double t) { return net_output(x, t); };
    }
    return [this](const Mat& x, double t) {
      Mat out = net_output(x, t);
      out.array().colwise() /= lambda_flat_.array().square();
      return out;
    };
  }

  const TimeEmbedding& embedding() const { return embedding_; }
  const Vec& lambda_flat() const { return lambda_flat_; }

 private:
  void build_offsets() {
    const Index d = arch_.flat_dim();
    Index off = 0;
    we_off_ = off;
    off += static_cast<Index>(arch_.embed_dim) * arch_.rff_features;
    be_off_ = off;
    off += arch_.embed_dim;
    Index prev = d + arch_.embed_dim;
    for (int h : arch_.hidden) {
      layer_w_off_.push_back(off);
      layer_rows_.push_back(h);
      layer_cols_.push_back(prev);
      off += static_cast<Index>(h) * prev;
      layer_b_off_.push_back(off);
      off += h;
      prev = h;
    }
    layer_w_off_.push_back(off);
    layer_rows_.push_back(d);
    layer_cols_.push_back(prev);
    off += d * prev;
    layer_b_off_.push_back(off);
    off += d;
    total_params_ = off;
  }

  Eigen::Map<const Mat> w(Index off, Index rows, Index cols) const {
    return Eigen::Map<const Mat>(params_.data() + off, rows, cols);
  }
  Eigen::Map<const Vec> v(Index off, Index rows) const {
    return Eigen::Map<const Vec>(params_.data() + off, rows);
  }
  static Eigen::Map<Mat> gw(Vec& g, Index off, Index rows, Index cols) {
    return Eigen::Map<Mat>(g.data() + off, rows, cols);
  }
  static Eigen::Map<Vec> gv(Vec& g, Index off, Index rows) {
    return Eigen::Map<Vec>(g.data() + off, rows);
  }

  ModelArchitecture arch_;
  TimeEmbedding embedding_;
  Vec params_;
  Vec lambda_flat_;  // frequency domain only
  Index we_off_ = 0, be_off_ = 0, total_params_ = 0;
  std::vector<Index> layer_w_off_, layer_b_off_, layer_rows_, layer_cols_;
};

/// Evaluate the raw network map on one N x M input. Errors on shape mismatch.
inline Mat mlp_score_eval(const ScoreModel& model, const Mat& input, double t) {
  if (input.rows() != model.arch().n || input.cols() != model.arch().m)
    throw DataError("mlp_score_eval: shape mismatch (expected " + std::to_string(model.arch().n) +
                    "x" + std::to_string(model.arch().m) + ")");
  if (!(t > 0.0 && t <= VpSchedule::T))
    throw std::invalid_argument("mlp_score_eval: t must lie in (0, T]");
  Eigen::Map<const Mat> flat(input.data(), input.size(), 1);
  Mat out = model.net_output(flat, t);
  return Eigen::Map<const Mat>(out.data(), model.arch().n, model.arch().m);
}

// ---------------------------------------------------------------------------
// Analytic Gaussian oracle.

/// Exact score of the marginal p_t when the data law is N(mu0, s0^2 I) in the
/// time domain. The marginal is N(alpha mu, (alpha^2 s0^2 + sigma^2) C) with
/// C = I in the time domain and C = Lambda^2 over phi coordinates in the
/// frequency domain (where mu is the chart image of mu0 and x is a phi
/// matrix). Returns the raw score -C^{-1}(x - alpha mu) / (alpha^2 s0^2 + sigma^2).
inline Mat gaussian_oracle_score(const Mat& mu0, double s0, const Mat& x, double t, Domain domain,
                                 const VpSchedule& sched = {}) {
  if (!(t > 0.0 && t <= VpSchedule::T))
    throw std::invalid_argument("gaussian_oracle_score: t must lie in (0, T]");
  const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
  const double denom = a * a * s0 * s0 + s * s;
  if (domain == Domain::time) return -(x - a * mu0) / denom;
  const Mat mu_phi = phi_of_series(TimeSeries(mu0)).values;
  const Vec lam = lambda_scaling(x.rows()).diag;
  Mat out = -(x - a * mu_phi) / denom;
  out.array().colwise() /= lam.array().square();
  return out;
}

/// Batched ScoreFn wrapper around the oracle, for the reverse integrators.
inline ScoreFn gaussian_oracle_fn(Mat mu0, double s0, Domain domain, Index n, Index m,
                                  VpSchedule sched = {}) {
  Vec mu_flat;
  if (domain == Domain::time) {
    mu_flat = Eigen::Map<const Vec>(mu0.data(), mu0.size());
  } else {
    Mat mu_phi = phi_of_series(TimeSeries(mu0)).values;
    mu_flat = Eigen::Map<const Vec>(mu_phi.data(), mu_phi.size());
  }
  Vec inv_lam_sq;
  if (domain == Domain::frequency) {
    const Vec lam = lambda_scaling(n).diag;
    inv_lam_sq = Vec(n * m);
    for (Index i = 0; i < inv_lam_sq.size(); ++i)
      inv_lam_sq(i) = 1.0 / (lam(i % n) * lam(i % n));
  }
  return [=](const Mat& x, double t) {
    const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
    const double denom = a * a * s0 * s0 + s * s;
    const Vec shifted = a * mu_flat;
    Mat out = -(x.colwise() - shifted) / denom;
    if (inv_lam_sq.size() > 0) out.array().colwise() *= inv_lam_sq.array();
    return out;
  };
}

// ---------------------------------------------------------------------------
// Denoising score matching losses.

struct LossGrad {
  double loss = 0.0;
  Vec grad;  // empty when the gradient was not requested
};

/// Per-sample weighting of the matching term. `uniform` is the plain
/// objective; `noise_scale_squared` multiplies each term by sigma(t)^2,
/// which leaves the minimizer unchanged but balances the gradient mass
/// across diffusion times (the 1/sigma^2 target blow-up near t_min would
/// otherwise dominate training and starve the mid/large-t score).
enum class LossWeighting { uniform, noise_scale_squared };

namespace detail {

// Shared by both domains so that the frequency loss with Lambda = I is
// bit-identical to the time loss under the same rng value. Draw order per
// batch element: t, then the N x M noise matrix column-major.
inline LossGrad dsm_loss_impl(const ScoreModel& model, const std::vector<Mat>& batch,
                              const VpSchedule& sched, const Vec* lambda_diag, double t_min,
                              Rng rng, bool want_grad, LossWeighting weighting) {
  if (batch.empty()) throw DataError("dsm loss: empty batch");
  const Index n = batch.front().rows(), m = batch.front().cols();
  const Index d = n * m;
  const Index b = static_cast<Index>(batch.size());
  if (!(t_min > 0.0 && t_min < VpSchedule::T))
    throw std::invalid_argument("dsm loss: t_min must lie in (0, T)");

  Mat inputs(d, b), targets(d, b);
  Vec ts(b), weights(b);
  for (Index i = 0; i < b; ++i) {
    const Mat& x0 = batch[static_cast<std::size_t>(i)];
    if (x0.rows() != n || x0.cols() != m) throw DataError("dsm loss: inhomogeneous batch shapes");
    const double t = rng.uniform(t_min, VpSchedule::T);
    ts(i) = t;
    const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
    weights(i) = weighting == LossWeighting::uniform ? 1.0 : s * s;
    Mat eps = rng.normal_matrix(n, m);
    Mat scaled = lambda_diag ? Mat(lambda_diag->asDiagonal() * eps) : std::move(eps);
    Mat xt = a * x0 + s * scaled;
    inputs.col(i) = Eigen::Map<const Vec>(xt.data(), d);
    targets.col(i) = Eigen::Map<const Vec>(scaled.data(), d) * (-1.0 / s);
  }

  ScoreModel::Tape tape;
  Mat out = model.net_forward(inputs, ts, want_grad ? &tape : nullptr);
  Mat diff = out - targets;
  LossGrad lg;
  const Vec col_sq = diff.colwise().squaredNorm().transpose();
  lg.loss = col_sq.dot(weights) / static_cast<double>(b);
  if (want_grad) {
    Mat dl = (2.0 / static_cast<double>(b)) * diff;
    dl.array().rowwise() *= weights.transpose().array();
    lg.grad = model.net_backward(tape, dl);
  }
  return lg;
}

}  // namespace detail

/// L = mean_b w(t) || net(x_t, t) + eps/sigma(t) ||^2 with t ~ U(t_min, T)
/// and w from the weighting (uniform by default).
inline LossGrad dsm_loss_time(const ScoreModel& model, const std::vector<Mat>& batch,
                              const VpSchedule& sched, double t_min, Rng rng,
                              bool want_grad = true,
                              LossWeighting weighting = LossWeighting::uniform) {
  return detail::dsm_loss_impl(model, batch, sched, nullptr, t_min, rng, want_grad, weighting);
}

/// Frequency-domain counterpart over phi-coordinate batches, with the
/// Lambda-scaled target: L = mean_b w(t) || net(phi_t, t) + Lambda eps/sigma(t) ||^2.
inline LossGrad dsm_loss_freq(const ScoreModel& model, const std::vector<Mat>& batch_phi,
                              const VpSchedule& sched, const LambdaScaling& lam, double t_min,
                              Rng rng, bool want_grad = true,
                              LossWeighting weighting = LossWeighting::uniform) {
  return detail::dsm_loss_impl(model, batch_phi, sched, &lam.diag, t_min, rng, want_grad,
                               weighting);
}

// ---------------------------------------------------------------------------
// Score-matching equivalence between the two domains.

struct EquivalenceResult {
  double loss_freq = 0.0;
  double loss_time = 0.0;
  double abs_diff = 0.0;
};

/// Evaluates the frequency-domain matching loss of a frequency score model
/// and the time-domain matching loss of its auxiliary time score (net output
/// pulled back through the inverse chart and inverse DFT) on one shared
/// noise realization. The two are equal up to roundoff.
inline EquivalenceResult equivalence_check(const ScoreModel& freq_model,
                                           const std::vector<Mat>& batch_time, double t,
                                           const VpSchedule& sched, Rng rng) {
  if (batch_time.empty()) throw DataError("equivalence_check: empty batch");
  if (freq_model.arch().domain != Domain::frequency)
    throw ConfigError("equivalence_check: model must be a frequency model");
  const Index n = batch_time.front().rows(), m = batch_time.front().cols();
  const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
  const LambdaScaling lam = lambda_scaling(n);

  double lf = 0.0, lt = 0.0;
  for (const Mat& x0 : batch_time) {
    const PhiVector phi0 = phi_of_series(TimeSeries(x0));
    const Mat eps = rng.normal_matrix(n, m);
    const Mat scaled = lam.diag.asDiagonal() * eps;
    const Mat phi_t = a * phi0.values + s * scaled;

    Eigen::Map<const Mat> flat(phi_t.data(), n * m, 1);
    Mat net = freq_model.net_output(flat, t);
    Mat net_nm = Eigen::Map<const Mat>(net.data(), n, m);

    // Frequency loss on the full complex spectra (modulus-squared norm).
    const CMat score_c = phi_inv(PhiVector(net_nm)).values;
    const CMat target_c = phi_inv(PhiVector(Mat(scaled * (-1.0 / s)))).values;
    lf += (score_c - target_c).squaredNorm();

    // Auxiliary time score: pull the net output back to the time domain and
    // match the time-domain conditional score of the same draw.
    const Mat s_time = series_of_phi(PhiVector(net_nm)).values;
    const Mat eps_time = series_of_phi(PhiVector(Mat(scaled))).values;
    lt += (s_time + eps_time / s).squaredNorm();
  }
  EquivalenceResult r;
  r.loss_freq = lf / static_cast<double>(batch_time.size());
  r.loss_time = lt / static_cast<double>(batch_time.size());
  r.abs_diff = std::abs(r.loss_freq - r.loss_time);
  return r;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainReport {
  std::vector<double> train_loss, val_loss, learning_rate;
  int selected_epoch = -1;

  nlohmann::json to_json() const {
    return {{"train_loss", train_loss},
            {"val_loss", val_loss},
            {"learning_rate", learning_rate},
            {"selected_epoch", selected_epoch}};
  }
};

/// Linear warmup to lr_max over warmup_epochs, then cosine decay to zero at
/// the final epoch.
inline double lr_at_epoch(int epoch, int epochs, int warmup_epochs, double lr_max) {
  if (warmup_epochs > 0 && epoch < warmup_epochs)
    return lr_max * static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs);
  if (epochs - 1 <= warmup_epochs) return lr_max;
  const double p =
      static_cast<double>(epoch - warmup_epochs) / static_cast<double>(epochs - 1 - warmup_epochs);
  return lr_max * 0.5 * (1.0 + std::cos(M_PI * p));
}

namespace detail {

struct AdamW {
  Vec m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.01;
  long long step = 0;

  explicit AdamW(Index n_params, double wd) : m(Vec::Zero(n_params)), v(Vec::Zero(n_params)) {
    weight_decay = wd;
  }

  void update(Vec& params, const Vec& grad, double lr) {
    ++step;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const Vec denom = (v / bc2).cwiseSqrt() + Vec::Constant(params.size(), eps);
    params -= lr * ((m / bc1).cwiseQuotient(denom) + weight_decay * params);
  }
};

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
}

}  // namespace detail

/// Trains a score model with AdamW and the warmup+cosine schedule; the
/// returned parameters are those of the epoch with the lowest validation
/// loss. Validation draws reuse one fixed stream every epoch so the curves
/// are comparable. Inputs are time-domain series; frequency models see their
/// chart coordinates internally.
inline std::pair<ScoreModel, TrainReport> train(const std::vector<Mat>& train_series,
                                                const std::vector<Mat>& val_series, Domain domain,
                                                const RunConfig& cfg_in) {
  const RunConfig cfg = validate_config(cfg_in);
  if (train_series.empty() || val_series.empty()) throw DataError("train: empty split");
  if (static_cast<std::size_t>(cfg.batch_size) > train_series.size())
    throw ConfigError("batch_size <= dataset size violated");
  const Index n = train_series.front().rows(), m = train_series.front().cols();

  ModelArchitecture arch;
  arch.n = n;
  arch.m = m;
  arch.domain = domain;
  arch.hidden = cfg.hidden_sizes;
  arch.rff_features = cfg.time_embed_features;
  arch.rff_scale = cfg.time_embed_scale;
  arch.embed_dim = cfg.time_embed_dim;
  arch.rff_seed = detail::mix2(cfg.seed, 0x7ffe);

  ScoreModel model(arch);
  Rng master(cfg.seed);
  {
    Rng init_rng = master.substream(1);
    model.init_params(init_rng);
  }

  auto to_domain = [&](const std::vector<Mat>& xs) {
    if (domain == Domain::time) return xs;
    std::vector<Mat> out;
    out.reserve(xs.size());
    for (const Mat& x : xs) out.push_back(phi_of_series(TimeSeries(x)).values);
    return out;
  };
  const std::vector<Mat> train_data = to_domain(train_series);
  const std::vector<Mat> val_data = to_domain(val_series);
  const LambdaScaling lam = lambda_scaling(n);
  const VpSchedule sched{cfg.beta_min, cfg.beta_max};
  const double t_min = VpSchedule::T / cfg.diffusion_steps;

  // Training minimizes the sigma^2-weighted objective (same minimizer as the
  // uniform loss; see LossWeighting). Reported losses are the trained one.
  const LossWeighting weighting = LossWeighting::noise_scale_squared;
  auto loss_of = [&](const std::vector<Mat>& batch, Rng r, bool grad) {
    return domain == Domain::time
               ? dsm_loss_time(model, batch, sched, t_min, r, grad, weighting)
               : dsm_loss_freq(model, batch, sched, lam, t_min, r, grad, weighting);
  };

  auto eval_split_loss = [&](const std::vector<Mat>& data, Rng r) {
    double total = 0.0;
    std::size_t done = 0;
    while (done < data.size()) {
      const std::size_t take = std::min<std::size_t>(cfg.batch_size, data.size() - done);
      std::vector<Mat> chunk(data.begin() + done, data.begin() + done + take);
      total += loss_of(chunk, r.substream(done), false).loss * static_cast<double>(take);
      done += take;
    }
    return total / static_cast<double>(data.size());
  };

  detail::AdamW opt(model.param_count(), cfg.weight_decay);
  TrainReport report;
  Vec best_params = model.params();
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg.epochs, cfg.warmup_epochs, cfg.lr_max);
    Rng shuffle_rng = master.substream(2).substream(static_cast<std::uint64_t>(epoch));
    detail::shuffle_indices(order, shuffle_rng);

    double epoch_loss = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start + cfg.batch_size <= order.size();
         start += cfg.batch_size) {
      std::vector<Mat> batch;
      batch.reserve(cfg.batch_size);
      for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(train_data[order[start + i]]);
      Rng batch_rng = master.substream(3).substream(static_cast<std::uint64_t>(global_step));
      LossGrad lg = loss_of(batch, batch_rng, true);
      if (!std::isfinite(lg.loss))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(n_batches));
      opt.update(model.params(), lg.grad, lr);
      epoch_loss += lg.loss;
      ++n_batches;
      ++global_step;
    }

    const double val_loss = eval_split_loss(val_data, master.substream(4));
    report.train_loss.push_back(n_batches > 0 ? epoch_loss / n_batches : 0.0);
    report.val_loss.push_back(val_loss);
    report.learning_rate.push_back(lr);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = model.params();
      report.selected_epoch = epoch;
    }
  }

  model.params() = best_params;
  return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------
// Checkpoints: magic string, JSON header, flat little-endian f64 block.

inline constexpr const char* kCheckpointMagic = "FREQDIFF-CKPT-v1\n";

inline void save_checkpoint(const ScoreModel& model, const std::string& path,
                            const std::string& config_hash_str, const Vec& feature_mean = {},
                            const Vec& feature_sd = {}) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  nlohmann::json header;
  header["architecture"] = model.arch().to_json();
  header["config_hash"] = config_hash_str;
  header["param_count"] = model.param_count();
  header["feature_mean"] = std::vector<double>(feature_mean.data(),
                                               feature_mean.data() + feature_mean.size());
  header["feature_sd"] =
      std::vector<double>(feature_sd.data(), feature_sd.data() + feature_sd.size());
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open '" + path + "'");
  out.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  const std::uint64_t pcount = static_cast<std::uint64_t>(model.param_count());
  out.write(reinterpret_cast<const char*>(&pcount), sizeof(pcount));
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(pcount * sizeof(double)));
  if (!out) throw DataError("save_checkpoint: write failed for '" + path + "'");
}

inline ScoreModel load_checkpoint(const std::string& path, std::string* config_hash_out = nullptr,
                                  Vec* feature_mean_out = nullptr, Vec* feature_sd_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open '" + path + "'");
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kCheckpointMagic)
    throw DataError("load_checkpoint: bad magic in '" + path + "'");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("load_checkpoint: truncated header in '" + path + "'");
  nlohmann::json header = nlohmann::json::parse(hs);

  ScoreModel model(ModelArchitecture::from_json(header.at("architecture")));
  std::uint64_t pcount = 0;
  in.read(reinterpret_cast<char*>(&pcount), sizeof(pcount));
  if (pcount != static_cast<std::uint64_t>(model.param_count()))
    throw DataError("load_checkpoint: parameter count mismatch in '" + path + "'");
  in.read(reinterpret_cast<char*>(model.params().data()),
          static_cast<std::streamsize>(pcount * sizeof(double)));
  if (!in) throw DataError("load_checkpoint: truncated parameter block in '" + path + "'");

  if (config_hash_out) *config_hash_out = header.value("config_hash", "");
  auto to_vec = [](const nlohmann::json& j) {
    std::vector<double> v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size())).eval();
  };
  if (feature_mean_out && header.contains("feature_mean"))
    *feature_mean_out = to_vec(header["feature_mean"]);
  if (feature_sd_out && header.contains("feature_sd"))
    *feature_sd_out = to_vec(header["feature_sd"]);
  return model;
}

}  // namespace freqdiff
