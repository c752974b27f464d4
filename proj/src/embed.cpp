#include "wayside/embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wayside::embed {

// ---------------------------------------------------------------------------
// SignalWindow
// ---------------------------------------------------------------------------

SignalWindow SignalWindow::from_signal(const dsp::ArrayXd& signal, int length) {
  if (signal.size() == 0) throw DomainError("SignalWindow: empty signal");
  if (length < 2) throw DomainError("SignalWindow: window length must be >= 2");
  // Rectified envelope, lightly smoothed before decimation: passage durations
  // vary by an order of magnitude, and resampling the raw trace would alias
  // the defect band away on slow passages.
  const dsp::ArrayXd mag = signal.abs();
  const int half = std::max<int>(1, static_cast<int>(signal.size() / 1024));
  dsp::ArrayXd envelope(signal.size());
  double acc = 0.0;
  int lo = 0, hi = -1;
  for (int i = 0; i < signal.size(); ++i) {
    const int want_lo = std::max(0, i - half);
    const int want_hi = std::min<int>(static_cast<int>(signal.size()) - 1, i + half);
    while (hi < want_hi) acc += mag[++hi];
    while (lo < want_lo) acc -= mag[lo++];
    envelope[i] = acc / static_cast<double>(want_hi - want_lo + 1);
  }
  const dsp::ArrayXd resampled = dsp::resample_linear(envelope, length);
  SignalWindow w;
  w.norm_mean = resampled.mean();
  const double var = (resampled - w.norm_mean).square().mean();
  w.norm_std = std::sqrt(var);
  if (w.norm_std > 0.0) {
    w.values = ((resampled - w.norm_mean) / w.norm_std).matrix();
  } else {
    w.values = VectorXd::Zero(length);  // constant window stays at zero
    w.norm_std = 0.0;
  }
  return w;
}

// ---------------------------------------------------------------------------
// VAE
// ---------------------------------------------------------------------------

std::vector<int> VaeConfig::hidden_dims() const {
  switch (depth) {
    case 0: return {};
    case 1: return {256};
    case 2: return {256, 64};
    default: throw ConfigError("VaeConfig: depth must be 0, 1, or 2");
  }
}

namespace {

DenseLayer init_layer(int out_dim, int in_dim, Rng& rng) {
  // He-style uniform fan-in init
  const double limit = std::sqrt(6.0 / in_dim);
  DenseLayer layer;
  layer.weights = MatrixXd::NullaryExpr(out_dim, in_dim,
                                        [&]() { return rng.uniform(-limit, limit); });
  layer.bias = VectorXd::Zero(out_dim);
  return layer;
}

MatrixXd relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

MatrixXd relu_mask(const MatrixXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

struct ForwardState {
  std::vector<MatrixXd> enc_pre;   // pre-activation per encoder layer
  std::vector<MatrixXd> enc_act;   // inputs to each encoder layer (act[0] = batch)
  std::vector<MatrixXd> dec_pre;
  std::vector<MatrixXd> dec_act;
  MatrixXd mu, logvar, sigma, z, xhat;
};

void forward(const MatrixXd& batch, const VaeParams& p, const MatrixXd& eps, ForwardState& fs) {
  const int latent = p.latent_dim;
  fs.enc_act.clear();
  fs.enc_pre.clear();
  fs.dec_act.clear();
  fs.dec_pre.clear();

  fs.enc_act.push_back(batch);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    MatrixXd z = (p.encoder[l].weights * fs.enc_act.back()).colwise() + p.encoder[l].bias;
    fs.enc_pre.push_back(z);
    fs.enc_act.push_back(l + 1 < p.encoder.size() ? relu(z) : z);
  }
  const MatrixXd& out = fs.enc_act.back();
  fs.mu = out.topRows(latent);
  fs.logvar = out.bottomRows(latent);
  fs.sigma = (0.5 * fs.logvar).array().exp().matrix();
  fs.z = fs.mu + fs.sigma.cwiseProduct(eps);

  fs.dec_act.push_back(fs.z);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    MatrixXd z = (p.decoder[l].weights * fs.dec_act.back()).colwise() + p.decoder[l].bias;
    fs.dec_pre.push_back(z);
    fs.dec_act.push_back(l + 1 < p.decoder.size() ? relu(z) : z);
  }
  fs.xhat = fs.dec_act.back();
}

// recon: squared reconstruction error summed over window samples (unit-variance
// Gaussian likelihood up to constants); kl: closed form summed over latent
// dims. Both averaged over the batch.
ElboTerms terms_from(const MatrixXd& batch, const ForwardState& fs, double beta) {
  const auto b = static_cast<double>(batch.cols());
  ElboTerms t;
  t.recon = (fs.xhat - batch).squaredNorm() / b;
  t.kl = -0.5 *
         (1.0 + fs.logvar.array() - fs.mu.array().square() - fs.logvar.array().exp()).sum() / b;
  t.loss = t.recon + beta * t.kl;
  return t;
}

}  // namespace

VaeParams VaeParams::init(const VaeConfig& cfg, Rng& rng) {
  VaeParams p;
  p.input_dim = cfg.input_dim;
  p.latent_dim = cfg.latent_dim;
  p.beta = cfg.beta;

  std::vector<int> enc_dims{cfg.input_dim};
  for (int h : cfg.hidden_dims()) enc_dims.push_back(h);
  enc_dims.push_back(2 * cfg.latent_dim);
  for (std::size_t l = 1; l < enc_dims.size(); ++l)
    p.encoder.push_back(init_layer(enc_dims[l], enc_dims[l - 1], rng));
  // The (mu, logvar) head starts at zero so the posterior opens at the prior;
  // a random head exponentiates into the KL term and blows up the first steps
  // at the reference learning rate.
  p.encoder.back().weights.setZero();

  std::vector<int> dec_dims{cfg.latent_dim};
  const auto hidden = cfg.hidden_dims();
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) dec_dims.push_back(*it);
  dec_dims.push_back(cfg.input_dim);
  for (std::size_t l = 1; l < dec_dims.size(); ++l)
    p.decoder.push_back(init_layer(dec_dims[l], dec_dims[l - 1], rng));
  return p;
}

int VaeParams::parameter_count() const {
  int n = 0;
  for (const auto& l : encoder) n += static_cast<int>(l.weights.size() + l.bias.size());
  for (const auto& l : decoder) n += static_cast<int>(l.weights.size() + l.bias.size());
  return n;
}

bool VaeParams::finite() const {
  for (const auto* layers : {&encoder, &decoder}) {
    for (const auto& l : *layers) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
  }
  return true;
}

ElboTerms elbo_loss_with_eps(const MatrixXd& batch, const VaeParams& params, const MatrixXd& eps) {
  if (batch.rows() != params.input_dim)
    throw DomainError("elbo_loss: window dimension does not match the model");
  if (eps.rows() != params.latent_dim || eps.cols() != batch.cols())
    throw DomainError("elbo_loss: eps shape mismatch");
  ForwardState fs;
  forward(batch, params, eps, fs);
  const ElboTerms t = terms_from(batch, fs, params.beta);
  if (!std::isfinite(t.loss)) throw NumericError("elbo_loss: non-finite forward pass");
  return t;
}

ElboTerms elbo_loss(const VectorXd& x, const VaeParams& params, Rng& rng) {
  MatrixXd eps(params.latent_dim, 1);
  for (int i = 0; i < eps.rows(); ++i) eps(i, 0) = rng.normal();
  return elbo_loss_with_eps(x, params, eps);
}

ElboTerms elbo_backprop(const MatrixXd& batch, const VaeParams& params, const MatrixXd& eps,
                        VaeGradients& grads, double kl_grad_scale) {
  ForwardState fs;
  forward(batch, params, eps, fs);
  const ElboTerms t = terms_from(batch, fs, params.beta);
  const auto b = static_cast<double>(batch.cols());

  grads.encoder.resize(params.encoder.size());
  grads.decoder.resize(params.decoder.size());

  // Decoder
  MatrixXd delta = 2.0 * (fs.xhat - batch) / b;
  for (int l = static_cast<int>(params.decoder.size()) - 1; l >= 0; --l) {
    grads.decoder[l].weights = delta * fs.dec_act[l].transpose();
    grads.decoder[l].bias = delta.rowwise().sum();
    if (l > 0)
      delta = (params.decoder[l].weights.transpose() * delta)
                  .cwiseProduct(relu_mask(fs.dec_pre[l - 1]));
    else
      delta = params.decoder[l].weights.transpose() * delta;
  }
  // delta is now dL/dz
  MatrixXd dmu = delta;
  MatrixXd dlogvar = 0.5 * delta.cwiseProduct(eps).cwiseProduct(fs.sigma);
  // KL path
  const double kw = params.beta * kl_grad_scale / b;
  dmu += kw * fs.mu;
  dlogvar.array() += kw * 0.5 * (fs.logvar.array().exp() - 1.0);

  MatrixXd dout(2 * params.latent_dim, batch.cols());
  dout << dmu, dlogvar;

  // Encoder
  delta = dout;
  for (int l = static_cast<int>(params.encoder.size()) - 1; l >= 0; --l) {
    grads.encoder[l].weights = delta * fs.enc_act[l].transpose();
    grads.encoder[l].bias = delta.rowwise().sum();
    if (l > 0)
      delta = (params.encoder[l].weights.transpose() * delta)
                  .cwiseProduct(relu_mask(fs.enc_pre[l - 1]));
  }
  return t;
}

TrainedVae train_vae(const MatrixXd& windows, const VaeConfig& cfg) {
  if (windows.rows() != cfg.input_dim) throw ConfigError("train_vae: window dim mismatch");
  const int n = static_cast<int>(windows.cols());
  if (n < 1) throw TrainingError("train_vae: need at least one window");

  Rng rng(derive_seed(cfg.seed, 0x766165ULL));
  TrainedVae out;
  out.config = cfg;
  out.params = VaeParams::init(cfg, rng);

  // 80/20 train/validation split, seeded
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.uniform_int(static_cast<std::uint64_t>(i + 1))]);
  const int n_val = std::min(n - 1, static_cast<int>(cfg.val_fraction * n));
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  MatrixXd val(cfg.input_dim, n_val);
  for (int i = 0; i < n_val; ++i) val.col(i) = windows.col(val_idx[static_cast<std::size_t>(i)]);

  VaeGradients grads;
  VaeGradients velocity;
  velocity.encoder.resize(out.params.encoder.size());
  velocity.decoder.resize(out.params.decoder.size());
  for (std::size_t l = 0; l < out.params.encoder.size(); ++l) {
    velocity.encoder[l].weights = MatrixXd::Zero(out.params.encoder[l].weights.rows(),
                                                 out.params.encoder[l].weights.cols());
    velocity.encoder[l].bias = VectorXd::Zero(out.params.encoder[l].bias.size());
  }
  for (std::size_t l = 0; l < out.params.decoder.size(); ++l) {
    velocity.decoder[l].weights = MatrixXd::Zero(out.params.decoder[l].weights.rows(),
                                                 out.params.decoder[l].weights.cols());
    velocity.decoder[l].bias = VectorXd::Zero(out.params.decoder[l].bias.size());
  }

  const auto sgd_step = [&](std::vector<DenseLayer>& params_side,
                            std::vector<DenseLayer>& vel_side,
                            const std::vector<DenseLayer>& grad_side) {
    for (std::size_t l = 0; l < params_side.size(); ++l) {
      vel_side[l].weights =
          cfg.momentum * vel_side[l].weights - cfg.learning_rate * grad_side[l].weights;
      vel_side[l].bias = cfg.momentum * vel_side[l].bias - cfg.learning_rate * grad_side[l].bias;
      params_side[l].weights += vel_side[l].weights;
      params_side[l].bias += vel_side[l].bias;
    }
  };

  const auto eval_loss = [&](const MatrixXd& data, Rng& eps_rng) {
    MatrixXd eps(cfg.latent_dim, data.cols());
    for (int c = 0; c < eps.cols(); ++c)
      for (int r = 0; r < eps.rows(); ++r) eps(r, c) = eps_rng.normal();
    return elbo_loss_with_eps(data, out.params, eps).loss;
  };

  if (n_val > 0) {
    Rng init_rng(derive_seed(cfg.seed, 0x76616c0ULL));
    out.initial_val_loss = eval_loss(val, init_rng);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.split(static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[epoch_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    int seen = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const int bs = static_cast<int>(
          std::min<std::size_t>(cfg.batch_size, train_idx.size() - start));
      MatrixXd batch(cfg.input_dim, bs);
      for (int c = 0; c < bs; ++c) batch.col(c) = windows.col(train_idx[start + c]);
      MatrixXd eps(cfg.latent_dim, bs);
      for (int c = 0; c < bs; ++c)
        for (int r = 0; r < cfg.latent_dim; ++r) eps(r, c) = epoch_rng.normal();

      const ElboTerms t = elbo_backprop(batch, out.params, eps, grads);
      if (!std::isfinite(t.loss))
        throw TrainingError("train_vae diverged (NaN loss) at epoch " + std::to_string(epoch));
      // Summed reconstruction makes the opening gradients steep at the
      // reference learning rate; a global norm ceiling bounds the transient.
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto* side : {&grads.encoder, &grads.decoder}) {
          for (const auto& l : *side) sq += l.weights.squaredNorm() + l.bias.squaredNorm();
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const double scale = cfg.clip_norm / norm;
          for (auto* side : {&grads.encoder, &grads.decoder}) {
            for (auto& l : *side) {
              l.weights *= scale;
              l.bias *= scale;
            }
          }
        }
      }
      sgd_step(out.params.encoder, velocity.encoder, grads.encoder);
      sgd_step(out.params.decoder, velocity.decoder, grads.decoder);
      epoch_loss += t.loss * bs;
      seen += bs;
    }
    out.train_loss.push_back(epoch_loss / std::max(1, seen));

    if (n_val > 0) {
      Rng val_rng(derive_seed(cfg.seed, 0x76616cULL + static_cast<std::uint64_t>(epoch)));
      try {
        out.val_loss.push_back(eval_loss(val, val_rng));
      } catch (const NumericError&) {
        throw TrainingError("train_vae diverged at epoch " + std::to_string(epoch));
      }
    } else {
      out.val_loss.push_back(out.train_loss.back());
    }
    if (!std::isfinite(out.val_loss.back()) || !out.params.finite())
      throw TrainingError("train_vae diverged at epoch " + std::to_string(epoch));
  }
  return out;
}

Embedding encode(const VectorXd& x, const VaeParams& params) {
  if (x.size() != params.input_dim)
    throw DomainError("encode: window dimension does not match the model");
  MatrixXd act = x;
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    act = (params.encoder[l].weights * act).colwise() + params.encoder[l].bias;
    if (l + 1 < params.encoder.size()) act = relu(act);
  }
  Embedding e;
  e.mu = act.topRows(params.latent_dim).col(0);
  e.logvar = act.bottomRows(params.latent_dim).col(0);
  return e;
}

double gradient_check(const VaeParams& params, const VectorXd& x, double epsilon,
                      double kl_grad_scale, std::uint64_t noise_seed) {
  Rng noise(noise_seed);
  MatrixXd eps(params.latent_dim, 1);
  for (int i = 0; i < eps.rows(); ++i) eps(i, 0) = noise.normal();

  VaeGradients grads;
  elbo_backprop(x, params, eps, grads, kl_grad_scale);

  VaeParams probe = params;
  double worst = 0.0;
  const auto check_block = [&](MatrixXd& block, const MatrixXd& grad_block) {
    for (int c = 0; c < block.cols(); ++c) {
      for (int r = 0; r < block.rows(); ++r) {
        const double saved = block(r, c);
        block(r, c) = saved + epsilon;
        const double up = elbo_loss_with_eps(x, probe, eps).loss;
        block(r, c) = saved - epsilon;
        const double down = elbo_loss_with_eps(x, probe, eps).loss;
        block(r, c) = saved;
        const double fd = (up - down) / (2.0 * epsilon);
        const double bp = grad_block(r, c);
        const double rel = std::abs(bp - fd) / std::max({std::abs(bp), std::abs(fd), 1e-12});
        worst = std::max(worst, rel);
      }
    }
  };
  for (std::size_t l = 0; l < probe.encoder.size(); ++l) {
    check_block(probe.encoder[l].weights, grads.encoder[l].weights);
    for (int r = 0; r < probe.encoder[l].bias.size(); ++r) {
      const double saved = probe.encoder[l].bias[r];
      probe.encoder[l].bias[r] = saved + epsilon;
      const double up = elbo_loss_with_eps(x, probe, eps).loss;
      probe.encoder[l].bias[r] = saved - epsilon;
      const double down = elbo_loss_with_eps(x, probe, eps).loss;
      probe.encoder[l].bias[r] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double bp = grads.encoder[l].bias[r];
      const double rel = std::abs(bp - fd) / std::max({std::abs(bp), std::abs(fd), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  for (std::size_t l = 0; l < probe.decoder.size(); ++l) {
    check_block(probe.decoder[l].weights, grads.decoder[l].weights);
    for (int r = 0; r < probe.decoder[l].bias.size(); ++r) {
      const double saved = probe.decoder[l].bias[r];
      probe.decoder[l].bias[r] = saved + epsilon;
      const double up = elbo_loss_with_eps(x, probe, eps).loss;
      probe.decoder[l].bias[r] = saved - epsilon;
      const double down = elbo_loss_with_eps(x, probe, eps).loss;
      probe.decoder[l].bias[r] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double bp = grads.decoder[l].bias[r];
      const double rel = std::abs(bp - fd) / std::max({std::abs(bp), std::abs(fd), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Handcrafted baseline
// ---------------------------------------------------------------------------

int handcrafted_dim(const HandcraftedConfig& cfg) {
  return 6 + cfg.dominant_bins + cfg.fft_components;
}

VectorXd handcrafted_features(const SignalWindow& window, const HandcraftedConfig& cfg) {
  if (window.values.size() == 0) throw DomainError("handcrafted_features: empty window");
  const dsp::ArrayXd raw = window.denormalized().array();
  const dsp::Moments m = dsp::moments(raw);
  const double range = raw.maxCoeff() - raw.minCoeff();

  const dsp::ArrayXd mag = dsp::magnitude_spectrum(raw);
  const auto n_fft = static_cast<double>(2 * (mag.size() - 1));
  double spectral_energy = 0.0;
  for (Eigen::Index k = 1; k < mag.size(); ++k) spectral_energy += mag[k] * mag[k];
  spectral_energy /= n_fft;

  // Top-k dominant bins by magnitude (DC excluded), higher magnitude first,
  // lower bin wins ties.
  std::vector<int> bins(static_cast<std::size_t>(std::max<Eigen::Index>(0, mag.size() - 1)));
  std::iota(bins.begin(), bins.end(), 1);
  std::stable_sort(bins.begin(), bins.end(),
                   [&](int a, int b) { return mag[a] > mag[b]; });

  VectorXd f(handcrafted_dim(cfg));
  int at = 0;
  f[at++] = m.mean;
  f[at++] = m.stddev;
  f[at++] = range;
  f[at++] = m.skewness;
  f[at++] = m.kurtosis;
  f[at++] = spectral_energy;
  for (int k = 0; k < cfg.dominant_bins; ++k)
    f[at++] = k < static_cast<int>(bins.size()) ? static_cast<double>(bins[static_cast<std::size_t>(k)]) : 0.0;
  for (int k = 0; k < cfg.fft_components; ++k)
    f[at++] = k < mag.size() ? mag[k] : 0.0;
  return f;
}

}  // namespace wayside::embed
