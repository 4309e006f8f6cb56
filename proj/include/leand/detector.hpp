#pragma once

#include "leand/autoencoder.hpp"
#include "leand/dataset.hpp"
#include "leand/density_matrix.hpp"
#include "leand/fourier_features.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace leand {

struct JointOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  Index batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  /// Same rule as autoencoder pretraining; zero disables.
  double early_stop_tolerance = 1e-5;
  int early_stop_window = 10;
  /// Also update the feature map (W, b); frozen by default.
  bool train_feature_map = false;
  /// Keep the autoencoder fixed and train only the density.
  bool freeze_autoencoder = false;
};

struct DetectorConfig {
  /// input_dim is taken from the training data.
  Architecture architecture;
  /// KDE bandwidth in the augmented latent space. The feature map is built
  /// for gamma / 2 because the density squares the kernel estimate.
  double gamma = 0.5;
  Index rff_dim = 250;
  /// Requested rank; capped at rff_dim.
  Index num_eigs = 50;
  double alpha = 0.5;
  /// Weight of the reconstruction term in the joint loss (0 = NoRecon).
  double reconstruction_weight = 1.0;
  /// Unset means the training split's outlier rate.
  std::optional<double> anomaly_rate;
  PretrainOptions pretrain;
  AffOptions aff;
  JointOptions joint;
  /// Fit on the normal rows of the training split only.
  bool normal_only = false;
  std::uint64_t seed = 42;
};

/// A fitted detector. Scores are densities of the augmented latent code;
/// low density means anomalous.
struct LeandModel {
  Scaler scaler;
  AutoencoderParams autoencoder;
  FeatureMap feature_map;
  DensityModel density;
  double alpha = 0.0;
  double reconstruction_weight = 1.0;
  double anomaly_rate = 0.1;
  double tau = 0.0;
  std::uint64_t seed = 0;

  Index input_dim() const { return autoencoder.arch.input_dim; }
};

struct FitReport {
  std::vector<double> pretrain_losses;
  AffResult aff;
  double initial_mean_nll = 0.0;
  std::vector<double> joint_losses;  // full-data joint loss, initial then per epoch
  Index effective_rank = 0;
  double tau = 0.0;
  double anomaly_rate = 0.0;
  Index training_rows = 0;
};

struct FitResult {
  LeandModel model;
  FitReport report;
};

/// Autoencoder pretraining, adaptive Fourier feature fitting on the
/// augmented latents, joint optimization of autoencoder and density, then
/// threshold calibration. Deterministic for a fixed config.
FitResult fit(const DataTable& train, const DetectorConfig& config);

double score(const LeandModel& model, const Vector& x);
Vector score_rows(const LeandModel& model, const Matrix& rows);

/// Lower-tail `rate` quantile of `scores` with linear interpolation
/// between order statistics.
double calibrate_threshold(std::span<const double> scores, double rate);

struct Prediction {
  double score = 0.0;
  Label label = Label::normal;
};

/// anomaly iff score < tau
Prediction predict(const LeandModel& model, const Vector& x);
std::vector<Prediction> predict_rows(const LeandModel& model, const Matrix& rows);
Label classify(double score, double tau);

/// Trainable pieces of the joint stage.
struct JointState {
  AutoencoderParams autoencoder;
  FeatureMap feature_map;
  DensityModel density;
};

struct JointWeights {
  double alpha = 0.5;
  double reconstruction_weight = 1.0;
};

struct JointGradient {
  AutoencoderParams autoencoder;
  DensityGradient density;
  PairLossGradient feature_map;
};

/// Batch loss on standardized rows:
///   w_rec * mean ||x - x_hat||^2 - alpha * mean log f(o).
double joint_loss(const JointState& state, const Matrix& rows, const JointWeights& weights);

double joint_loss_gradient(const JointState& state, const Matrix& rows, const JointWeights& weights,
                           JointGradient& grad);

struct JointTrainResult {
  JointState state;
  /// Full-data loss, initial then one per epoch.
  std::vector<double> losses;
};

/// Mini-batch optimization of the joint loss. The density is renormalized
/// after every step.
JointTrainResult train_joint(JointState state, const Matrix& rows, const JointWeights& weights,
                             const JointOptions& options, std::uint64_t seed);

}  // namespace leand
