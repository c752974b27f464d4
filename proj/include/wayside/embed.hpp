#pragma once

#include <Eigen/Core>
#include <vector>

#include "wayside/common.hpp"
#include "wayside/dsp.hpp"

namespace wayside::embed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Fixed-length accelerometer windows. Values are stored z-normalized; the
// normalization pair is kept so the statistical baseline can work on the
// physical samples.
// ---------------------------------------------------------------------------

struct SignalWindow {
  VectorXd values;       // normalized
  double norm_mean = 0.0;
  double norm_std = 1.0;

  static SignalWindow from_signal(const dsp::ArrayXd& signal, int length = 1024);
  VectorXd denormalized() const { return values * norm_std + VectorXd::Constant(values.size(), norm_mean); }
};

// ---------------------------------------------------------------------------
// Variational autoencoder: dense encoder to (mu, logvar), mirrored decoder.
// depth counts the hidden layers (0 = direct projection, 1 = 256, 2 = 256/64).
// ---------------------------------------------------------------------------

struct VaeConfig {
  int input_dim = 1024;
  int latent_dim = 20;
  int depth = 1;
  double learning_rate = 0.0005;
  int epochs = 150;
  int batch_size = 64;
  double beta = 1.412;          // KL weight
  double momentum = 0.9;
  double val_fraction = 0.2;
  double clip_norm = 100.0;     // global gradient-norm ceiling
  std::uint64_t seed = 1;

  std::vector<int> hidden_dims() const;
};

struct DenseLayer {
  MatrixXd weights;
  VectorXd bias;
};

struct VaeParams {
  std::vector<DenseLayer> encoder;  // last layer emits 2*latent_dim rows
  std::vector<DenseLayer> decoder;
  int input_dim = 0;
  int latent_dim = 0;
  double beta = 1.0;

  static VaeParams init(const VaeConfig& cfg, Rng& rng);
  int parameter_count() const;
  bool finite() const;
};

struct Embedding {
  VectorXd mu;
  VectorXd logvar;

  VectorXd fused() const {
    VectorXd out(mu.size() + logvar.size());
    out << mu, logvar;
    return out;
  }
};

struct ElboTerms {
  double loss = 0.0;        // recon + beta * kl, exactly
  double recon = 0.0;       // squared error summed over dims, mean over batch
  double kl = 0.0;          // closed-form Gaussian KL, mean over batch
};

// Core objective with frozen reparameterization noise (latent_dim x batch).
ElboTerms elbo_loss_with_eps(const MatrixXd& batch, const VaeParams& params,
                             const MatrixXd& eps);

// Convenience wrapper drawing eps from the rng.
ElboTerms elbo_loss(const VectorXd& x, const VaeParams& params, Rng& rng);

struct VaeGradients {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
};

// Backpropagated gradients of the batch objective. kl_grad_scale scales only
// the KL path; anything other than 1 is a validation hook for the gradient
// check's mutation test.
ElboTerms elbo_backprop(const MatrixXd& batch, const VaeParams& params, const MatrixXd& eps,
                        VaeGradients& grads, double kl_grad_scale = 1.0);

struct TrainedVae {
  VaeParams params;
  double initial_val_loss = 0.0;   // before the first update
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  VaeConfig config;
};

TrainedVae train_vae(const MatrixXd& windows /* input_dim x n */, const VaeConfig& cfg);

// Deterministic: returns mu and logvar, no sampling.
Embedding encode(const VectorXd& x, const VaeParams& params);

// Max over parameters of the relative difference between backprop and central
// finite differences of the objective, with the reparameterization noise
// frozen across evaluations.
double gradient_check(const VaeParams& params, const VectorXd& x, double epsilon = 1e-5,
                      double kl_grad_scale = 1.0, std::uint64_t noise_seed = 7);

// ---------------------------------------------------------------------------
// Handcrafted statistical baseline, computed on the physical (de-normalized)
// window samples. Layout: [mean, std, range, skewness, kurtosis,
// spectral_energy, top-k dominant bins, first m FFT magnitudes].
// ---------------------------------------------------------------------------

struct HandcraftedConfig {
  int dominant_bins = 3;
  int fft_components = 16;
};

VectorXd handcrafted_features(const SignalWindow& window, const HandcraftedConfig& cfg = {});

int handcrafted_dim(const HandcraftedConfig& cfg = {});

}  // namespace wayside::embed
