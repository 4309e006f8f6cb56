#include "leand/evaluation.hpp"

#include "leand/random.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace leand {
namespace {

int index_of(Label l) { return l == Label::anomaly ? 1 : 0; }

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("label vectors differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  if (a == 0) throw ShapeError("metrics need at least one label");
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::vector<Label> labels_of(const std::vector<Prediction>& preds) {
  std::vector<Label> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.label);
  return out;
}

}  // namespace

Confusion confusion_matrix(std::span<const Label> truth, std::span<const Label> predicted) {
  check_pair(truth.size(), predicted.size());
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) ++c.counts[index_of(truth[i])][index_of(predicted[i])];
  return c;
}

double f1_class(const Confusion& c, Label cls) {
  const int k = index_of(cls);
  const int o = 1 - k;
  const auto tp = static_cast<double>(c.counts[k][k]);
  const auto fp = static_cast<double>(c.counts[o][k]);
  const auto fn = static_cast<double>(c.counts[k][o]);
  return safe_ratio(2.0 * tp, 2.0 * tp + fp + fn);
}

static double weighted_from(const Confusion& c) {
  const auto n = static_cast<double>(c.total());
  const auto normal = static_cast<double>(c.counts[0][0] + c.counts[0][1]);
  const auto anomaly = static_cast<double>(c.counts[1][0] + c.counts[1][1]);
  return (normal * f1_class(c, Label::normal) + anomaly * f1_class(c, Label::anomaly)) / n;
}

double f1_weighted(std::span<const Label> truth, std::span<const Label> predicted) {
  return weighted_from(confusion_matrix(truth, predicted));
}

double accuracy(std::span<const Label> truth, std::span<const Label> predicted) {
  const Confusion c = confusion_matrix(truth, predicted);
  return static_cast<double>(c.counts[0][0] + c.counts[1][1]) / static_cast<double>(c.total());
}

double f1_anomaly(std::span<const Label> truth, std::span<const Label> predicted) {
  return f1_class(confusion_matrix(truth, predicted), Label::anomaly);
}

MetricReport metric_report(std::span<const Label> truth, std::span<const Label> predicted) {
  MetricReport r;
  r.confusion = confusion_matrix(truth, predicted);
  r.f1_weighted = weighted_from(r.confusion);
  r.accuracy =
      static_cast<double>(r.confusion.counts[0][0] + r.confusion.counts[1][1]) / static_cast<double>(r.confusion.total());
  r.f1_anomaly = f1_class(r.confusion, Label::anomaly);
  return r;
}

double auc_roc(std::span<const Label> truth, std::span<const double> anomaly_scores) {
  check_pair(truth.size(), anomaly_scores.size());
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return anomaly_scores[a] < anomaly_scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  double positives = 0.0;
  while (pos < order.size()) {
    std::size_t end = pos;
    while (end < order.size() && anomaly_scores[order[end]] == anomaly_scores[order[pos]]) ++end;
    const double avg = 0.5 * static_cast<double>(pos + 1 + end);
    for (std::size_t k = pos; k < end; ++k) {
      if (truth[order[k]] == Label::anomaly) {
        rank_sum += avg;
        positives += 1.0;
      }
    }
    pos = end;
  }
  const double negatives = static_cast<double>(truth.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw ConfigError("AUC needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double auc_pr(std::span<const Label> truth, std::span<const double> anomaly_scores) {
  check_pair(truth.size(), anomaly_scores.size());
  std::vector<std::size_t> order(truth.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return anomaly_scores[a] > anomaly_scores[b]; });
  const auto positives = static_cast<double>(std::count(truth.begin(), truth.end(), Label::anomaly));
  if (positives == 0.0) throw ConfigError("AUC-PR needs at least one anomaly");
  double tp = 0.0;
  double fp = 0.0;
  double ap = 0.0;
  double last_recall = 0.0;
  std::size_t pos = 0;
  while (pos < order.size()) {
    std::size_t end = pos;
    while (end < order.size() && anomaly_scores[order[end]] == anomaly_scores[order[pos]]) ++end;
    for (std::size_t k = pos; k < end; ++k) (truth[order[k]] == Label::anomaly ? tp : fp) += 1.0;
    const double recall = tp / positives;
    ap += (recall - last_recall) * tp / (tp + fp);
    last_recall = recall;
    pos = end;
  }
  return ap;
}

MetricReport evaluate(const LeandModel& model, const DataTable& test, bool with_auc) {
  const auto preds = predict_rows(model, test.features);
  MetricReport r = metric_report(test.labels, labels_of(preds));
  if (with_auc) {
    std::vector<double> anomaly(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) anomaly[i] = -preds[i].score;
    r.auc_roc = auc_roc(test.labels, anomaly);
    r.auc_pr = auc_pr(test.labels, anomaly);
  }
  return r;
}

// Grid search

std::string describe(const GridPoint& p) {
  std::ostringstream out;
  out.precision(17);
  out << "sigma=" << p.sigma << " arch=(";
  for (std::size_t i = 0; i < p.encoder_sizes.size(); ++i) out << (i ? "," : "") << p.encoder_sizes[i];
  out << ") rff_dim=" << p.rff_dim << " num_eigs=" << p.num_eigs << " alpha=" << p.alpha;
  if (p.anomaly_rate) out << " anomaly_rate=" << *p.anomaly_rate;
  return out.str();
}

std::size_t GridSpec::combinations() const {
  const std::size_t rates = anomaly_rates.empty() ? 1 : anomaly_rates.size();
  return sigmas.size() * architectures.size() * rff_dims.size() * num_eigs.size() * alphas.size() * rates;
}

void GridSpec::validate() const {
  if (sigmas.empty() || architectures.empty() || rff_dims.empty() || num_eigs.empty() || alphas.empty()) {
    throw ConfigError("grid: every parameter list needs at least one value");
  }
  if (cap == 0) throw ConfigError("grid: cap must be positive");
  for (double s : sigmas)
    if (!(s > 0.0)) throw ConfigError("grid: sigma values must be positive");
  for (const auto& a : architectures)
    if (a.empty()) throw ConfigError("grid: empty architecture");
  for (Index d : rff_dims)
    if (d < 1) throw ConfigError("grid: rff_dim values must be positive");
  for (Index r : num_eigs)
    if (r < 1) throw ConfigError("grid: num_eigs values must be positive");
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("grid: alpha values must lie in [0, 1]");
  for (double r : anomaly_rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("grid: anomaly rates must lie in (0, 1)");
}

std::vector<double> rates_around(double true_rate, int steps, double step) {
  if (!(true_rate > 0.0 && true_rate < 1.0)) throw ConfigError("true anomaly rate must lie in (0, 1)");
  if (steps < 0 || !(step > 0.0)) throw ConfigError("anomaly rate steps must be nonnegative with a positive spacing");
  std::vector<double> out;
  for (int k = -steps; k <= steps; ++k) {
    const double r = true_rate + k * step;
    // Values within rounding of 0 or 1 are the excluded endpoints, not rates.
    if (r > 1e-9 && r < 1.0 - 1e-9) out.push_back(r);
  }
  return out;
}

std::vector<GridPoint> expand(const GridSpec& grid, std::uint64_t seed) {
  grid.validate();
  std::vector<std::optional<double>> rates;
  if (grid.anomaly_rates.empty()) rates.emplace_back();
  for (double r : grid.anomaly_rates) rates.emplace_back(r);
  std::vector<GridPoint> all;
  all.reserve(grid.combinations());
  for (double s : grid.sigmas)
    for (const auto& a : grid.architectures)
      for (Index d : grid.rff_dims)
        for (Index r : grid.num_eigs)
          for (double alpha : grid.alphas)
            for (const auto& rate : rates) all.push_back({s, a, d, r, alpha, rate});
  if (all.size() > grid.cap) {
    Rng rng(seed);
    rng.shuffle(all.begin(), all.end());
    all.resize(grid.cap);
  }
  return all;
}

DetectorConfig apply(const DetectorConfig& base, const GridPoint& point) {
  DetectorConfig c = base;
  c.gamma = gamma_from_sigma(point.sigma);
  c.architecture.encoder_sizes = point.encoder_sizes;
  c.rff_dim = point.rff_dim;
  c.num_eigs = point.num_eigs;
  c.alpha = point.alpha;
  if (point.anomaly_rate) c.anomaly_rate = point.anomaly_rate;
  return c;
}

Partition partition(const DataTable& data, const GridOptions& options) {
  if (!(options.selection_fraction > 0.0 && options.selection_fraction < 1.0)) {
    throw ConfigError("selection fraction must lie in (0, 1)");
  }
  auto [train, rest] = split(data, options.split);
  SplitSpec second = options.split;
  second.seed = Rng::derive(options.split.seed, 7);
  second.train_fraction = options.selection_fraction;
  auto [selection, holdout] = split(rest, second);
  return {std::move(train), std::move(selection), std::move(holdout)};
}

std::vector<GridRun> grid_search(const DataTable& data, const DetectorConfig& base, const GridSpec& grid,
                                 const GridOptions& options) {
  const auto points = expand(grid, options.seed);
  const Partition parts = partition(data, options);
  std::vector<GridRun> runs(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      GridRun& run = runs[i];
      run.index = i;
      run.point = points[i];
      try {
        DetectorConfig config = apply(base, points[i]);
        config.seed = options.seed;
        const auto fitted = fit(parts.train, config);
        run.selection = evaluate(fitted.model, parts.selection);
        run.holdout = evaluate(fitted.model, parts.holdout);
        run.ok = true;
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(points.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::stable_sort(runs.begin(), runs.end(), [](const GridRun& a, const GridRun& b) {
    if (a.ok != b.ok) return a.ok;
    if (a.ok && a.selection.f1_weighted != b.selection.f1_weighted) {
      return a.selection.f1_weighted > b.selection.f1_weighted;
    }
    return a.index < b.index;
  });
  return runs;
}

// Ablation

Variant parse_variant(std::string_view name) {
  if (name == "kde") return Variant::kde;
  if (name == "ae") return Variant::ae;
  if (name == "norecon") return Variant::norecon;
  if (name == "leand") return Variant::leand;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected kde, ae, norecon or leand)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kde: return "kde";
    case Variant::ae: return "ae";
    case Variant::norecon: return "norecon";
    case Variant::leand: return "leand";
  }
  return "?";
}

KdeKernel parse_kde_kernel(std::string_view name) {
  if (name == "gaussian") return KdeKernel::gaussian;
  if (name == "tophat") return KdeKernel::tophat;
  if (name == "exponential") return KdeKernel::exponential;
  throw ConfigError("unknown KDE kernel '" + std::string(name) + "'");
}

std::string_view to_string(KdeKernel k) {
  switch (k) {
    case KdeKernel::gaussian: return "gaussian";
    case KdeKernel::tophat: return "tophat";
    case KdeKernel::exponential: return "exponential";
  }
  return "?";
}

double scott_bandwidth(Index n, Index dim) {
  if (n < 1 || dim < 1) throw ConfigError("Scott bandwidth needs positive sizes");
  return std::pow(static_cast<double>(n), -1.0 / static_cast<double>(dim + 4));
}

double kde_score(const Matrix& train, const Vector& query, KdeKernel kernel, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ConfigError("KDE bandwidth must be positive");
  require_shape(train.cols() == query.size(), "KDE query dimension mismatch");
  switch (kernel) {
    case KdeKernel::gaussian: return exact_kde(train, query, 1.0 / (2.0 * bandwidth * bandwidth));
    case KdeKernel::tophat: {
      const Vector dist = (train.rowwise() - query.transpose()).rowwise().norm();
      return (dist.array() < bandwidth).cast<double>().mean();
    }
    case KdeKernel::exponential: {
      const Vector dist = (train.rowwise() - query.transpose()).rowwise().norm();
      return (-dist.array() / bandwidth).exp().mean();
    }
  }
  return 0.0;
}

ReconstructionDetector fit_reconstruction_detector(const DataTable& train, const DetectorConfig& config) {
  if (train.count() < 2) throw ConfigError("reconstruction detector needs at least two training rows");
  const double rate = config.anomaly_rate ? *config.anomaly_rate : outlier_rate(train);
  std::vector<Index> used;
  for (Index i = 0; i < train.count(); ++i) {
    if (!config.normal_only || train.labels[static_cast<std::size_t>(i)] == Label::normal) used.push_back(i);
  }
  const Matrix raw = train.subset(used).features;
  ReconstructionDetector det;
  det.scaler = fit_scaler(raw);
  const Matrix x = det.scaler.transform(raw);
  Architecture arch = config.architecture;
  arch.input_dim = x.cols();
  PretrainOptions pre = config.pretrain;
  pre.seed = Rng::derive(config.seed, 2);
  det.autoencoder = pretrain(init_autoencoder(arch, Rng::derive(config.seed, 1)), x, pre).params;
  // Upper tail: the (1 - rate) quantile of training errors.
  const Vector errors = reconstruction_scores(det, raw);
  std::vector<double> negated(static_cast<std::size_t>(errors.size()));
  for (Index i = 0; i < errors.size(); ++i) negated[static_cast<std::size_t>(i)] = -errors(i);
  det.tau = -calibrate_threshold(negated, rate);
  return det;
}

Vector reconstruction_scores(const ReconstructionDetector& det, const Matrix& rows) {
  const Matrix x = det.scaler.transform(rows);
  const Matrix recon = reconstruct_rows(det.autoencoder, x);
  return (x - recon).rowwise().squaredNorm();
}

std::vector<AblationRow> ablation(const DataTable& train, const DataTable& test, const DetectorConfig& config,
                                  std::span<const Variant> variants, const KdeOptions& kde) {
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    AblationRow row{v, {}};
    switch (v) {
      case Variant::kde: {
        const double rate = config.anomaly_rate ? *config.anomaly_rate : outlier_rate(train);
        const Scaler scaler = fit_scaler(train.features);
        const Matrix xs = scaler.transform(train.features);
        const Matrix qs = scaler.transform(test.features);
        const double h = kde.bandwidth ? *kde.bandwidth : scott_bandwidth(xs.rows(), xs.cols());
        // Leave-one-out training scores so a point does not vote for itself.
        std::vector<double> train_scores(static_cast<std::size_t>(xs.rows()));
        for (Index i = 0; i < xs.rows(); ++i) {
          Matrix others(xs.rows() - 1, xs.cols());
          others.topRows(i) = xs.topRows(i);
          others.bottomRows(xs.rows() - 1 - i) = xs.bottomRows(xs.rows() - 1 - i);
          train_scores[static_cast<std::size_t>(i)] = kde_score(others, xs.row(i).transpose(), kde.kernel, h);
        }
        const double tau = calibrate_threshold(train_scores, rate);
        std::vector<Label> pred;
        for (Index i = 0; i < qs.rows(); ++i) pred.push_back(classify(kde_score(xs, qs.row(i).transpose(), kde.kernel, h), tau));
        row.metrics = metric_report(test.labels, pred);
        break;
      }
      case Variant::ae: {
        const auto det = fit_reconstruction_detector(train, config);
        const Vector err = reconstruction_scores(det, test.features);
        std::vector<Label> pred;
        for (Index i = 0; i < err.size(); ++i) pred.push_back(err(i) > det.tau ? Label::anomaly : Label::normal);
        row.metrics = metric_report(test.labels, pred);
        break;
      }
      case Variant::norecon: {
        DetectorConfig c = config;
        c.reconstruction_weight = 0.0;
        row.metrics = evaluate(fit(train, c).model, test);
        break;
      }
      case Variant::leand: row.metrics = evaluate(fit(train, config).model, test); break;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// Friedman

Matrix friedman_ranks(const Matrix& scores) {
  Matrix ranks(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    std::vector<Index> order(static_cast<std::size_t>(scores.cols()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(i, a) > scores(i, b); });
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t end = pos;
      while (end < order.size() && scores(i, order[end]) == scores(i, order[pos])) ++end;
      const double avg = 0.5 * static_cast<double>(pos + 1 + end);
      for (std::size_t k = pos; k < end; ++k) ranks(i, order[k]) = avg;
      pos = end;
    }
  }
  return ranks;
}

FriedmanResult friedman_q(const Matrix& scores) {
  if (scores.rows() < 2 || scores.cols() < 2) throw ShapeError("Friedman test needs at least 2 datasets and 2 algorithms");
  if (!scores.allFinite()) throw ConfigError("Friedman test needs finite scores");
  const auto n = static_cast<double>(scores.rows());
  const auto k = static_cast<double>(scores.cols());
  const Matrix ranks = friedman_ranks(scores);
  const Vector sums = ranks.colwise().sum().transpose();
  FriedmanResult r;
  // One division at the end keeps the arithmetic exact for half-integer ranks.
  r.q = (12.0 * sums.squaredNorm() - 3.0 * n * n * k * (k + 1.0) * (k + 1.0)) / (n * k * (k + 1.0));
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(k - 1.0), r.q));
  r.average_ranks = sums / n;
  return r;
}

}  // namespace leand
