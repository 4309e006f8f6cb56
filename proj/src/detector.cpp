#include "leand/detector.hpp"

#include "leand/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace leand {
namespace {

// Forward quantities of the joint loss for one batch.
struct JointForward {
  ForwardPass pass;
  Matrix augmented;   // B x (p + 2)
  Matrix projection;  // B x D, W o + b
  Matrix features;    // B x D, unnormalized phi
  Vector norms;       // B
  Matrix unit;        // B x D, phi / ||phi||
};

JointForward joint_forward(const JointState& state, const Matrix& rows) {
  JointForward f;
  const Matrix columns = rows.transpose();
  f.pass = forward(state.autoencoder, columns);
  const Matrix& latent = f.pass.outputs[state.autoencoder.encoder_depth()];
  const Matrix& recon = f.pass.outputs.back();
  const Index p = latent.rows();
  f.augmented.resize(rows.rows(), p + 2);
  for (Index i = 0; i < rows.rows(); ++i) {
    f.augmented.row(i).head(p) = latent.col(i).transpose();
    const auto m = reconstruction_measures(columns.col(i), recon.col(i));
    f.augmented(i, p) = m.euclid_err;
    f.augmented(i, p + 1) = m.cos_sim;
  }
  require_shape(state.feature_map.input_dim() == p + 2, "feature map input must be latent dimension + 2");
  f.projection = f.augmented * state.feature_map.weights.transpose();
  f.projection.rowwise() += state.feature_map.offsets.transpose();
  f.features = (state.feature_map.scaling * std::numbers::sqrt2) * f.projection.array().cos().matrix();
  f.norms = f.features.rowwise().norm();
  if ((f.norms.array() <= 0.0).any()) throw NumericalError("zero Fourier feature vector");
  f.unit = f.features.array().colwise() / f.norms.array();
  return f;
}

double loss_from_forward(const JointState& state, const JointForward& f, const JointWeights& w) {
  const auto n = static_cast<double>(f.augmented.rows());
  const Index p = f.augmented.cols() - 2;
  const double recon = f.augmented.col(p).mean();
  const double mean_nll = nll(state.density, f.unit) / n;
  return w.reconstruction_weight * recon + w.alpha * mean_nll;
}

template <class F>
void for_each_batch(std::vector<Index>& order, Index batch, F&& body) {
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
    body(std::span<const Index>(order.data() + start, stop - start));
  }
}

Matrix gather_rows(const Matrix& rows, std::span<const Index> idx) {
  Matrix out(static_cast<Index>(idx.size()), rows.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = rows.row(idx[k]);
  return out;
}

// Parameter packing for the joint optimizer.
struct JointLayout {
  Index autoencoder = 0;
  Index eigvecs = 0;
  Index eigvals = 0;
  Index map_weights = 0;
  Index map_offsets = 0;
  Index total() const { return autoencoder + eigvecs + eigvals + map_weights + map_offsets; }
};

JointLayout layout_of(const JointState& s, bool with_autoencoder, bool with_map) {
  JointLayout l;
  if (with_autoencoder) l.autoencoder = s.autoencoder.parameter_count();
  l.eigvecs = s.density.eigvecs.size();
  l.eigvals = s.density.rank();
  if (with_map) {
    l.map_weights = s.feature_map.weights.size();
    l.map_offsets = s.feature_map.offsets.size();
  }
  return l;
}

Vector pack(const JointState& s, const JointLayout& l) {
  Vector flat(l.total());
  Index at = 0;
  if (l.autoencoder > 0) flat.segment(at, l.autoencoder) = s.autoencoder.flatten();
  at += l.autoencoder;
  flat.segment(at, l.eigvecs) = s.density.eigvecs.reshaped();
  at += l.eigvecs;
  flat.segment(at, l.eigvals) = eigval_params(s.density);
  at += l.eigvals;
  if (l.map_weights > 0) {
    flat.segment(at, l.map_weights) = s.feature_map.weights.reshaped();
    at += l.map_weights;
    flat.segment(at, l.map_offsets) = s.feature_map.offsets;
  }
  return flat;
}

void unpack(const Vector& flat, const JointLayout& l, JointState& s) {
  Index at = 0;
  if (l.autoencoder > 0) s.autoencoder.assign(flat.segment(at, l.autoencoder));
  at += l.autoencoder;
  s.density.eigvecs.reshaped() = flat.segment(at, l.eigvecs);
  at += l.eigvecs;
  set_eigval_params(s.density, flat.segment(at, l.eigvals));
  at += l.eigvals;
  if (l.map_weights > 0) {
    s.feature_map.weights.reshaped() = flat.segment(at, l.map_weights);
    at += l.map_weights;
    s.feature_map.offsets = flat.segment(at, l.map_offsets);
  }
}

Vector pack_gradient(const JointGradient& g, const JointLayout& l) {
  Vector flat(l.total());
  Index at = 0;
  if (l.autoencoder > 0) flat.segment(at, l.autoencoder) = g.autoencoder.flatten();
  at += l.autoencoder;
  flat.segment(at, l.eigvecs) = g.density.eigvecs.reshaped();
  at += l.eigvecs;
  flat.segment(at, l.eigvals) = g.density.eigval_params;
  at += l.eigvals;
  if (l.map_weights > 0) {
    flat.segment(at, l.map_weights) = g.feature_map.weights.reshaped();
    at += l.map_weights;
    flat.segment(at, l.map_offsets) = g.feature_map.offsets;
  }
  return flat;
}

Vector scores_internal(const AutoencoderParams& ae, const FeatureMap& map, const DensityModel& density,
                       const Matrix& standardized) {
  const Matrix augmented = augmented_rows(ae, standardized);
  return density_lowrank_rows(density, normalize_rows(phi_rows(map, augmented)));
}

}  // namespace

double joint_loss(const JointState& state, const Matrix& rows, const JointWeights& weights) {
  if (rows.rows() == 0) throw ConfigError("joint loss of an empty batch");
  return loss_from_forward(state, joint_forward(state, rows), weights);
}

double joint_loss_gradient(const JointState& state, const Matrix& rows, const JointWeights& weights,
                           JointGradient& grad) {
  if (rows.rows() == 0) throw ConfigError("joint loss of an empty batch");
  const JointForward f = joint_forward(state, rows);
  const auto n = static_cast<double>(rows.rows());
  const Index p = f.augmented.cols() - 2;

  Matrix grad_unit;
  const double total_nll = nll_gradient(state.density, f.unit, grad.density, &grad_unit);
  const double scale = weights.alpha / n;
  grad.density.eigvecs *= scale;
  grad.density.eigval_params *= scale;
  grad_unit *= scale;

  // Through the normalization phi / ||phi||.
  const Vector radial = (grad_unit.cwiseProduct(f.unit)).rowwise().sum();
  Matrix grad_features = grad_unit - f.unit.cwiseProduct(radial.replicate(1, f.unit.cols()));
  grad_features.array().colwise() /= f.norms.array();
  // Through sqrt(2) s cos(W o + b).
  const Matrix grad_proj = grad_features.cwiseProduct(
      (-state.feature_map.scaling * std::numbers::sqrt2) * f.projection.array().sin().matrix());
  const Matrix grad_aug = grad_proj * state.feature_map.weights;  // B x (p + 2)
  grad.feature_map.weights.noalias() = grad_proj.transpose() * f.augmented;
  grad.feature_map.offsets = grad_proj.colwise().sum().transpose();

  const Matrix columns = rows.transpose();
  const Matrix& recon = f.pass.outputs.back();
  Matrix grad_recon(columns.rows(), columns.cols());
  for (Index i = 0; i < columns.cols(); ++i) {
    const auto mg = reconstruction_measure_gradients(columns.col(i), recon.col(i));
    const double g_euclid = grad_aug(i, p) + weights.reconstruction_weight / n;
    grad_recon.col(i) = g_euclid * mg.d_euclid + grad_aug(i, p + 1) * mg.d_cos;
  }
  const Matrix grad_latent = grad_aug.leftCols(p).transpose();
  grad.autoencoder = state.autoencoder.zeros_like();
  backward(state.autoencoder, f.pass, grad_recon, &grad_latent, grad.autoencoder);

  return weights.reconstruction_weight * f.augmented.col(p).mean() + weights.alpha * total_nll / n;
}

JointTrainResult train_joint(JointState state, const Matrix& rows, const JointWeights& weights,
                             const JointOptions& options, std::uint64_t seed) {
  if (rows.rows() == 0) throw ConfigError("joint training needs at least one row");
  if (options.batch_size < 1) throw ConfigError("joint batch size must be positive");
  if (options.epochs < 0) throw ConfigError("joint epochs must be nonnegative");
  const JointLayout layout = layout_of(state, !options.freeze_autoencoder, options.train_feature_map);
  Vector flat = pack(state, layout);
  Optimizer optimizer({options.optimizer, options.learning_rate}, layout.total());
  Rng rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  JointTrainResult result;
  result.losses.push_back(joint_loss(state, rows, weights));
  JointGradient grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for_each_batch(order, options.batch_size, [&](std::span<const Index> idx) {
      joint_loss_gradient(state, gather_rows(rows, idx), weights, grad);
      project_gradient(state.density, grad.density);
      optimizer.step(flat, pack_gradient(grad, layout));
      unpack(flat, layout, state);
      renormalize(state.density);
      flat = pack(state, layout);
    });
    const double loss = joint_loss(state, rows, weights);
    if (!std::isfinite(loss) || !flat.allFinite()) {
      throw NumericalError("joint training diverged at epoch " + std::to_string(epoch + 1));
    }
    result.losses.push_back(loss);
    const auto n = result.losses.size();
    const auto window = static_cast<std::size_t>(options.early_stop_window);
    if (options.early_stop_tolerance > 0.0 && window > 0 && n > window) {
      const double past = result.losses[n - 1 - window];
      if ((past - loss) / std::max(std::abs(past), 1e-300) < options.early_stop_tolerance) break;
    }
  }
  result.state = std::move(state);
  return result;
}

double calibrate_threshold(std::span<const double> scores, double rate) {
  if (scores.empty()) throw ConfigError("threshold calibration needs at least one score");
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("anomaly rate must lie in (0, 1)");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = static_cast<double>(sorted.size() - 1) * rate;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Label classify(double score, double tau) { return score >= tau ? Label::normal : Label::anomaly; }

FitResult fit(const DataTable& train, const DetectorConfig& config) {
  if (train.count() == 0) throw ConfigError("fit: empty training set");
  train.validate();
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (config.reconstruction_weight < 0.0) throw ConfigError("reconstruction weight must be nonnegative");
  if (config.rff_dim < 1) throw ConfigError("Fourier feature dimension must be positive");
  if (config.num_eigs < 1) throw ConfigError("number of eigencomponents must be positive");

  const double rate = config.anomaly_rate ? *config.anomaly_rate : outlier_rate(train);
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("anomaly rate must lie in (0, 1)");

  std::vector<Index> used;
  for (Index i = 0; i < train.count(); ++i) {
    if (!config.normal_only || train.labels[static_cast<std::size_t>(i)] == Label::normal) used.push_back(i);
  }
  if (used.size() < 2) throw ConfigError("fit needs at least two training rows");
  const Matrix raw = train.subset(used).features;

  FitResult result;
  LeandModel& model = result.model;
  FitReport& report = result.report;
  model.scaler = fit_scaler(raw);
  const Matrix x = model.scaler.transform(raw);
  report.training_rows = x.rows();

  // Stage 1: reconstruction-only pretraining.
  Architecture arch = config.architecture;
  arch.input_dim = x.cols();
  PretrainOptions pre = config.pretrain;
  pre.seed = Rng::derive(config.seed, 2);
  auto pretrained = pretrain(init_autoencoder(arch, Rng::derive(config.seed, 1)), x, pre);
  report.pretrain_losses = pretrained.losses;

  // Stage 2: kernel matching on the augmented latents.
  const Matrix augmented = augmented_rows(pretrained.params, x);
  const Index m = augmented.cols();
  const FeatureMap initial_map = sample_rff(m, config.rff_dim, config.gamma / 2.0, Rng::derive(config.seed, 3));
  AffOptions aff = config.aff;
  aff.seed = Rng::derive(config.seed, 4);
  report.aff = train_aff(initial_map, augmented, aff);

  // Stage 3: joint optimization from the data density matrix.
  JointState state{std::move(pretrained.params), report.aff.map, {}};
  report.effective_rank = std::min(config.num_eigs, config.rff_dim);
  state.density = initialize_density(normalize_rows(phi_rows(state.feature_map, augmented)), report.effective_rank,
                                     config.gamma, kde_normalizer(config.gamma, m));
  const JointWeights weights{config.alpha, config.reconstruction_weight};
  report.initial_mean_nll =
      nll(state.density, normalize_rows(phi_rows(state.feature_map, augmented))) / static_cast<double>(x.rows());

  auto joint = train_joint(std::move(state), x, weights, config.joint, Rng::derive(config.seed, 5));
  state = std::move(joint.state);
  report.joint_losses = std::move(joint.losses);

  model.autoencoder = std::move(state.autoencoder);
  model.feature_map = std::move(state.feature_map);
  model.density = std::move(state.density);
  model.alpha = config.alpha;
  model.reconstruction_weight = config.reconstruction_weight;
  model.anomaly_rate = rate;
  model.seed = config.seed;

  const Vector train_scores = scores_internal(model.autoencoder, model.feature_map, model.density, x);
  if (!train_scores.allFinite()) throw NumericalError("non-finite training density");
  model.tau = calibrate_threshold(std::span<const double>(train_scores.data(), static_cast<std::size_t>(train_scores.size())), rate);
  report.tau = model.tau;
  report.anomaly_rate = rate;
  return result;
}

double score(const LeandModel& model, const Vector& x) {
  require_shape(x.size() == model.input_dim(), "score: expected " + std::to_string(model.input_dim()) +
                                                   " features, got " + std::to_string(x.size()));
  const Matrix row = model.scaler.transform(x).transpose();
  return scores_internal(model.autoencoder, model.feature_map, model.density, row)(0);
}

Vector score_rows(const LeandModel& model, const Matrix& rows) {
  require_shape(rows.cols() == model.input_dim(), "score: expected " + std::to_string(model.input_dim()) +
                                                      " features, got " + std::to_string(rows.cols()));
  return scores_internal(model.autoencoder, model.feature_map, model.density, model.scaler.transform(rows));
}

Prediction predict(const LeandModel& model, const Vector& x) {
  const double s = score(model, x);
  return {s, classify(s, model.tau)};
}

std::vector<Prediction> predict_rows(const LeandModel& model, const Matrix& rows) {
  const Vector s = score_rows(model, rows);
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(s.size()));
  for (Index i = 0; i < s.size(); ++i) out.push_back({s(i), classify(s(i), model.tau)});
  return out;
}

}  // namespace leand
