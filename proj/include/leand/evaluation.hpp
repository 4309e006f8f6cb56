#pragma once

#include "leand/dataset.hpp"
#include "leand/detector.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leand {

/// counts[t][p]: true class t predicted as p (0 normal, 1 anomaly).
struct Confusion {
  std::array<std::array<Index, 2>, 2> counts{};

  Index total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
};

struct MetricReport {
  double f1_weighted = 0.0;
  double accuracy = 0.0;
  double f1_anomaly = 0.0;
  Confusion confusion;
  std::optional<double> auc_roc;
  std::optional<double> auc_pr;
};

Confusion confusion_matrix(std::span<const Label> truth, std::span<const Label> predicted);
/// Per-class F1 with a zero denominator counts as 0.
double f1_class(const Confusion& c, Label cls);
double f1_weighted(std::span<const Label> truth, std::span<const Label> predicted);
double accuracy(std::span<const Label> truth, std::span<const Label> predicted);
double f1_anomaly(std::span<const Label> truth, std::span<const Label> predicted);
MetricReport metric_report(std::span<const Label> truth, std::span<const Label> predicted);

/// `anomaly_scores`: larger means more anomalous. Ties get half credit.
double auc_roc(std::span<const Label> truth, std::span<const double> anomaly_scores);
/// Step-wise average precision.
double auc_pr(std::span<const Label> truth, std::span<const double> anomaly_scores);

/// Classifies `test` with a fitted model. AUCs are filled when `with_auc`.
MetricReport evaluate(const LeandModel& model, const DataTable& test, bool with_auc = false);

// Grid search

struct GridPoint {
  double sigma = 1.0;
  std::vector<Index> encoder_sizes;
  Index rff_dim = 250;
  Index num_eigs = 50;
  double alpha = 0.5;
  /// Unset: the base config's rate (or the training split's own rate).
  std::optional<double> anomaly_rate;
};

std::string describe(const GridPoint& point);

struct GridSpec {
  std::vector<double> sigmas;
  std::vector<std::vector<Index>> architectures;
  std::vector<Index> rff_dims;
  std::vector<Index> num_eigs;
  std::vector<double> alphas;
  /// Empty means the true rate only.
  std::vector<double> anomaly_rates;
  std::size_t cap = 100;

  std::size_t combinations() const;
  void validate() const;
};

/// true_rate plus `steps` neighbours of spacing `step` on each side, kept
/// inside (0, 1).
std::vector<double> rates_around(double true_rate, int steps, double step);

/// Cartesian product; when larger than the cap, a seeded shuffle picks
/// which combinations run. Order of the result is the run order.
std::vector<GridPoint> expand(const GridSpec& grid, std::uint64_t seed);

DetectorConfig apply(const DetectorConfig& base, const GridPoint& point);

struct GridOptions {
  std::uint64_t seed = 42;
  /// train / (selection + holdout) split.
  SplitSpec split;
  /// Fraction of the non-training rows used for ranking; the rest is holdout.
  double selection_fraction = 0.5;
  unsigned workers = 1;
};

struct GridRun {
  std::size_t index = 0;
  GridPoint point;
  bool ok = false;
  std::string error;
  MetricReport selection;
  MetricReport holdout;
};

struct Partition {
  DataTable train;
  DataTable selection;
  DataTable holdout;
};

Partition partition(const DataTable& data, const GridOptions& options);

/// Trains every expanded combination and returns the runs sorted by
/// selection f1_weighted (descending, failures last, ties by run index).
std::vector<GridRun> grid_search(const DataTable& data, const DetectorConfig& base, const GridSpec& grid,
                                 const GridOptions& options);

// Ablation

enum class Variant { kde, ae, norecon, leand };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);
inline constexpr std::array<Variant, 4> kAllVariants{Variant::kde, Variant::ae, Variant::norecon, Variant::leand};

enum class KdeKernel { gaussian, tophat, exponential };

KdeKernel parse_kde_kernel(std::string_view name);
std::string_view to_string(KdeKernel k);

struct KdeOptions {
  KdeKernel kernel = KdeKernel::gaussian;
  /// Unset: Scott's rule on the standardized training set.
  std::optional<double> bandwidth;
};

double scott_bandwidth(Index n, Index dim);

/// Classic KDE density with the chosen kernel; unnormalized for tophat and
/// exponential kernels (a constant factor does not move the threshold).
double kde_score(const Matrix& train, const Vector& query, KdeKernel kernel, double bandwidth);

struct AblationRow {
  Variant variant = Variant::leand;
  MetricReport metrics;
};

std::vector<AblationRow> ablation(const DataTable& train, const DataTable& test, const DetectorConfig& config,
                                  std::span<const Variant> variants, const KdeOptions& kde = {});

/// Reconstruction-error-only detector; anomaly iff error > tau.
struct ReconstructionDetector {
  Scaler scaler;
  AutoencoderParams autoencoder;
  double tau = 0.0;
};

ReconstructionDetector fit_reconstruction_detector(const DataTable& train, const DetectorConfig& config);
Vector reconstruction_scores(const ReconstructionDetector& det, const Matrix& rows);

// Friedman

/// Average ranks within each row (rank 1 = best = highest value).
Matrix friedman_ranks(const Matrix& scores);

struct FriedmanResult {
  double q = 0.0;
  double p_value = 1.0;
  Vector average_ranks;
};

/// rows = datasets, columns = algorithms.
FriedmanResult friedman_q(const Matrix& scores);

}  // namespace leand
