#include "leand/autoencoder.hpp"

#include "leand/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace leand {
namespace {

void apply_activation(Matrix& m, Activation a) {
  switch (a) {
    case Activation::relu: m = m.cwiseMax(0.0); break;
    case Activation::tanh: m = m.array().tanh().matrix(); break;
    case Activation::linear: break;
  }
}

// Multiplies `delta` in place by the activation derivative, expressed
// through the layer output.
void scale_by_derivative(Matrix& delta, const Matrix& output, Activation a) {
  switch (a) {
    case Activation::relu: delta = (output.array() > 0.0).select(delta, 0.0); break;
    case Activation::tanh: delta.array() *= 1.0 - output.array().square(); break;
    case Activation::linear: break;
  }
}

Matrix layer_forward(const DenseLayer& layer, const Matrix& input) {
  Matrix out = layer.weight * input;
  out.colwise() += layer.bias;
  apply_activation(out, layer.activation);
  return out;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "linear";
}

std::vector<Index> Architecture::layer_widths() const {
  std::vector<Index> widths{input_dim};
  widths.insert(widths.end(), encoder_sizes.begin(), encoder_sizes.end());
  for (auto it = encoder_sizes.rbegin() + 1; it != encoder_sizes.rend(); ++it) widths.push_back(*it);
  widths.push_back(input_dim);
  return widths;
}

void Architecture::validate() const {
  if (input_dim < 1) throw ConfigError("autoencoder input dimension must be positive");
  if (encoder_sizes.empty()) throw ConfigError("autoencoder needs at least one encoder layer");
  for (const Index s : encoder_sizes) {
    if (s < 1) throw ConfigError("autoencoder layer widths must be positive");
  }
  if (!allow_overcomplete && latent_dim() >= input_dim) {
    throw ConfigError("latent dimension " + std::to_string(latent_dim()) +
                      " must be smaller than the input dimension " + std::to_string(input_dim));
  }
}

Index AutoencoderParams::parameter_count() const {
  Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Vector AutoencoderParams::flatten() const {
  Vector flat(parameter_count());
  Index at = 0;
  for (const auto& l : layers) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

void AutoencoderParams::assign(const Vector& flat) {
  require_shape(flat.size() == parameter_count(), "autoencoder: flat parameter size mismatch");
  Index at = 0;
  for (auto& l : layers) {
    l.weight.reshaped() = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

AutoencoderParams AutoencoderParams::zeros_like() const {
  AutoencoderParams z = *this;
  for (auto& l : z.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return z;
}

AutoencoderParams init_autoencoder(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  AutoencoderParams params;
  params.arch = arch;
  params.seed = seed;
  const auto widths = arch.layer_widths();
  const std::size_t n_layers = widths.size() - 1;
  const std::size_t depth = arch.encoder_sizes.size();
  Rng rng(seed);
  for (std::size_t k = 0; k < n_layers; ++k) {
    DenseLayer layer;
    const Index in = widths[k];
    const Index out = widths[k + 1];
    // Glorot-uniform weights, zero biases.
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weight.resize(out, in);
    for (Index c = 0; c < in; ++c) {
      for (Index r = 0; r < out; ++r) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = Vector::Zero(out);
    const bool is_bottleneck = k + 1 == depth;
    const bool is_output = k + 1 == n_layers;
    layer.activation = (is_bottleneck || is_output) ? Activation::linear : arch.activation;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardPass forward(const AutoencoderParams& params, const Matrix& columns) {
  require_shape(columns.rows() == params.arch.input_dim, "autoencoder: input dimension mismatch");
  ForwardPass pass;
  pass.outputs.reserve(params.layers.size() + 1);
  pass.outputs.push_back(columns);
  for (const auto& layer : params.layers) pass.outputs.push_back(layer_forward(layer, pass.outputs.back()));
  return pass;
}

void backward(const AutoencoderParams& params, const ForwardPass& pass, const Matrix& grad_reconstruction,
              const Matrix* grad_latent, AutoencoderParams& grads) {
  const std::size_t depth = params.encoder_depth();
  Matrix delta = grad_reconstruction;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    if (k + 1 == depth && grad_latent != nullptr) delta += *grad_latent;
    const auto& layer = params.layers[k];
    scale_by_derivative(delta, pass.outputs[k + 1], layer.activation);
    grads.layers[k].weight.noalias() += delta * pass.outputs[k].transpose();
    grads.layers[k].bias += delta.rowwise().sum();
    if (k > 0) delta = layer.weight.transpose() * delta;
  }
}

Vector encode(const AutoencoderParams& params, const Vector& x) {
  require_shape(x.size() == params.arch.input_dim, "encode: expected input of length " +
                                                       std::to_string(params.arch.input_dim));
  Matrix h = x;
  for (std::size_t k = 0; k < params.encoder_depth(); ++k) h = layer_forward(params.layers[k], h);
  return h.col(0);
}

Vector decode(const AutoencoderParams& params, const Vector& z) {
  require_shape(z.size() == params.arch.latent_dim(), "decode: expected latent of length " +
                                                          std::to_string(params.arch.latent_dim()));
  Matrix h = z;
  for (std::size_t k = params.encoder_depth(); k < params.layers.size(); ++k) {
    h = layer_forward(params.layers[k], h);
  }
  return h.col(0);
}

Matrix encode_rows(const AutoencoderParams& params, const Matrix& rows) {
  require_shape(rows.cols() == params.arch.input_dim, "encode: input dimension mismatch");
  Matrix h = rows.transpose();
  for (std::size_t k = 0; k < params.encoder_depth(); ++k) h = layer_forward(params.layers[k], h);
  return h.transpose();
}

Matrix reconstruct_rows(const AutoencoderParams& params, const Matrix& rows) {
  const auto pass = forward(params, rows.transpose());
  return pass.outputs.back().transpose();
}

ReconstructionMeasures reconstruction_measures(const Vector& x, const Vector& x_hat) {
  require_shape(x.size() == x_hat.size(), "reconstruction measures: length mismatch");
  ReconstructionMeasures m;
  m.euclid_err = (x - x_hat).squaredNorm();
  const double nx = x.norm();
  const double nh = x_hat.norm();
  if (nx == 0.0 || nh == 0.0) {
    m.degenerate = true;
    m.cos_sim = 0.0;
  } else {
    m.cos_sim = std::clamp(x.dot(x_hat) / (nx * nh), -1.0, 1.0);
  }
  return m;
}

MeasureGradients reconstruction_measure_gradients(const Vector& x, const Vector& x_hat) {
  MeasureGradients g;
  g.d_euclid = 2.0 * (x_hat - x);
  const double nx = x.norm();
  const double nh = x_hat.norm();
  if (nx == 0.0 || nh == 0.0) {
    g.d_cos = Vector::Zero(x.size());
  } else {
    const double c = x.dot(x_hat) / (nx * nh);
    g.d_cos = x / (nx * nh) - c * x_hat / (nh * nh);
  }
  return g;
}

Vector AugmentedLatent::concatenated() const {
  Vector o(z.size() + 2);
  o.head(z.size()) = z;
  o(z.size()) = euclid_err;
  o(z.size() + 1) = cos_sim;
  return o;
}

AugmentedLatent augmented_output(const AutoencoderParams& params, const Vector& x) {
  const auto pass = forward(params, x);
  AugmentedLatent out;
  out.z = pass.outputs[params.encoder_depth()].col(0);
  const auto m = reconstruction_measures(x, pass.outputs.back().col(0));
  out.euclid_err = m.euclid_err;
  out.cos_sim = m.cos_sim;
  return out;
}

Matrix augmented_rows(const AutoencoderParams& params, const Matrix& rows) {
  const auto pass = forward(params, rows.transpose());
  const Matrix& latent = pass.outputs[params.encoder_depth()];
  const Matrix& recon = pass.outputs.back();
  const Index p = latent.rows();
  Matrix out(rows.rows(), p + 2);
  for (Index i = 0; i < rows.rows(); ++i) {
    out.row(i).head(p) = latent.col(i).transpose();
    const auto m = reconstruction_measures(rows.row(i).transpose(), recon.col(i));
    out(i, p) = m.euclid_err;
    out(i, p + 1) = m.cos_sim;
  }
  return out;
}

double reconstruction_loss(const AutoencoderParams& params, const Matrix& rows) {
  if (rows.rows() == 0) return 0.0;
  const Matrix diff = reconstruct_rows(params, rows) - rows;
  return diff.rowwise().squaredNorm().mean();
}

Vector reconstruction_loss_gradient(const AutoencoderParams& params, const Matrix& rows) {
  const Matrix columns = rows.transpose();
  const auto pass = forward(params, columns);
  const Matrix grad = (2.0 / static_cast<double>(rows.rows())) * (pass.outputs.back() - columns);
  auto grads = params.zeros_like();
  backward(params, pass, grad, nullptr, grads);
  return grads.flatten();
}

PretrainResult pretrain(AutoencoderParams params, const Matrix& rows, const PretrainOptions& options) {
  if (rows.rows() == 0) throw ConfigError("pretrain: empty training set");
  if (options.batch_size < 1) throw ConfigError("pretrain: batch size must be positive");
  require_shape(rows.cols() == params.arch.input_dim, "pretrain: input dimension mismatch");

  PretrainResult result;
  result.losses.push_back(reconstruction_loss(params, rows));
  Optimizer optimizer({options.optimizer, options.learning_rate}, params.parameter_count());
  Rng rng(options.seed);
  std::vector<Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  Vector flat = params.flatten();

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      Matrix batch(params.arch.input_dim, static_cast<Index>(stop - start));
      for (std::size_t k = start; k < stop; ++k) batch.col(static_cast<Index>(k - start)) = rows.row(order[k]).transpose();
      const auto pass = forward(params, batch);
      const Matrix grad = (2.0 / static_cast<double>(batch.cols())) * (pass.outputs.back() - batch);
      auto grads = params.zeros_like();
      backward(params, pass, grad, nullptr, grads);
      optimizer.step(flat, grads.flatten());
      params.assign(flat);
    }
    const double loss = reconstruction_loss(params, rows);
    if (!std::isfinite(loss) || !flat.allFinite()) {
      throw NumericalError("autoencoder pretraining diverged at epoch " + std::to_string(epoch + 1) +
                           " (loss " + std::to_string(loss) + ")");
    }
    result.losses.push_back(loss);
    const auto n = result.losses.size();
    if (options.early_stop_tolerance > 0.0 && n > static_cast<std::size_t>(options.early_stop_window)) {
      const double past = result.losses[n - 1 - static_cast<std::size_t>(options.early_stop_window)];
      if ((past - loss) / std::max(std::abs(past), 1e-300) < options.early_stop_tolerance) break;
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace leand
