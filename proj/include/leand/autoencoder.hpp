#pragma once

#include "leand/common.hpp"
#include "leand/optimizer.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace leand {

enum class Activation { relu, tanh, linear };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Fully-connected encoder widths; the decoder mirrors them in reverse.
/// encoder_sizes {64, 32, 16} on d inputs gives d-64-32-16-32-64-d.
struct Architecture {
  Index input_dim = 0;
  std::vector<Index> encoder_sizes;
  Activation activation = Activation::relu;
  /// Permits latent_dim() >= input_dim. Off by default.
  bool allow_overcomplete = false;

  Index latent_dim() const { return encoder_sizes.empty() ? 0 : encoder_sizes.back(); }
  /// d, s1, ..., p, ..., s1, d
  std::vector<Index> layer_widths() const;
  void validate() const;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::linear;
};

/// Encoder layers followed by decoder layers. Hidden layers use the
/// architecture's activation; the bottleneck and the output are linear.
struct AutoencoderParams {
  Architecture arch;
  std::vector<DenseLayer> layers;
  std::uint64_t seed = 0;

  std::size_t encoder_depth() const { return arch.encoder_sizes.size(); }
  Index parameter_count() const;
  /// Layer by layer: weight (column-major) then bias.
  Vector flatten() const;
  void assign(const Vector& flat);
  /// Same shapes, all zeros. Used as a gradient accumulator.
  AutoencoderParams zeros_like() const;
};

AutoencoderParams init_autoencoder(const Architecture& arch, std::uint64_t seed);

Vector encode(const AutoencoderParams& params, const Vector& x);
Vector decode(const AutoencoderParams& params, const Vector& z);

/// Row-sample batch versions.
Matrix encode_rows(const AutoencoderParams& params, const Matrix& rows);
Matrix reconstruct_rows(const AutoencoderParams& params, const Matrix& rows);

struct ReconstructionMeasures {
  double euclid_err = 0.0;  // squared distance
  double cos_sim = 0.0;
  bool degenerate = false;  // a zero-norm vector; cos_sim reported as 0
};

ReconstructionMeasures reconstruction_measures(const Vector& x, const Vector& x_hat);

/// Gradients of euclid_err and cos_sim with respect to x_hat.
struct MeasureGradients {
  Vector d_euclid;
  Vector d_cos;
};
MeasureGradients reconstruction_measure_gradients(const Vector& x, const Vector& x_hat);

struct AugmentedLatent {
  Vector z;
  double euclid_err = 0.0;
  double cos_sim = 0.0;

  /// [z, euclid_err, cos_sim], length p + 2.
  Vector concatenated() const;
};

AugmentedLatent augmented_output(const AutoencoderParams& params, const Vector& x);

/// One augmented latent per input row (count x (p + 2)).
Matrix augmented_rows(const AutoencoderParams& params, const Matrix& rows);

/// Layer outputs of a batch stored column-per-sample. outputs[0] is the
/// input, outputs[encoder_depth] the latent, outputs.back() the
/// reconstruction.
struct ForwardPass {
  std::vector<Matrix> outputs;
};

ForwardPass forward(const AutoencoderParams& params, const Matrix& columns);

/// Backpropagates upstream gradients on the reconstruction and on the
/// latent code, accumulating into `grads` (shaped like params).
void backward(const AutoencoderParams& params, const ForwardPass& pass, const Matrix& grad_reconstruction,
              const Matrix* grad_latent, AutoencoderParams& grads);

/// Mean over rows of ||x - x_hat||^2.
double reconstruction_loss(const AutoencoderParams& params, const Matrix& rows);

/// Gradient of reconstruction_loss, flattened like AutoencoderParams::flatten.
Vector reconstruction_loss_gradient(const AutoencoderParams& params, const Matrix& rows);

struct PretrainOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  Index batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  /// Stop once the relative loss improvement over `early_stop_window`
  /// epochs drops below this. Zero disables early stopping.
  double early_stop_tolerance = 1e-5;
  int early_stop_window = 10;
};

struct PretrainResult {
  AutoencoderParams params;
  /// Full-data loss before training followed by one entry per epoch.
  std::vector<double> losses;
};

PretrainResult pretrain(AutoencoderParams params, const Matrix& rows, const PretrainOptions& options);

}  // namespace leand
