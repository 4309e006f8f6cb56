#pragma once

#include "leand/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace leand {

enum class Label : std::uint8_t { normal = 0, anomaly = 1 };

/// Feature rows with one binary label per row.
struct DataTable {
  Matrix features;  // count x dim, one sample per row
  std::vector<Label> labels;
  std::string name;
  /// Zero-based data-row number in the source file for each row. Empty
  /// means rows are numbered 0..count-1.
  std::vector<Index> source_rows;

  Index count() const { return features.rows(); }
  Index source_row(Index i) const { return source_rows.empty() ? i : source_rows[static_cast<std::size_t>(i)]; }
  Index dim() const { return features.cols(); }
  std::size_t anomaly_count() const;

  /// Throws DataError if rows and labels disagree or a value is not finite.
  void validate() const;

  DataTable subset(std::span<const Index> rows) const;
};

/// Label column selector: zero-based index or header name. Empty name
/// selects the last column.
using LabelColumn = std::variant<std::size_t, std::string>;

/// "3" -> index 3, "label" -> name, "" -> last column.
LabelColumn parse_label_column(const std::string& text);

struct CsvOptions {
  LabelColumn label = std::string{};
  /// Label value that marks an anomaly. Required when the label column is
  /// not already {0, 1}.
  std::optional<std::string> anomaly_value;
};

DataTable load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Fraction of rows labelled anomalous.
double outlier_rate(const DataTable& table);

struct SplitSpec {
  std::uint64_t seed = 42;
  double train_fraction = 0.7;
  bool stratified = true;
};

/// Seeded train/test partition. Both partitions keep the original row
/// order. The test side always holds both classes.
std::pair<DataTable, DataTable> split(const DataTable& table, const SplitSpec& spec);

/// Per-column affine map fit on training data. Zero-variance columns have
/// scale 0 and map to 0.
struct Scaler {
  Vector mean;
  Vector scale;  // population standard deviation, 0 for constant columns

  Matrix transform(const Matrix& rows) const;
  Vector transform(const Vector& row) const;
  Matrix inverse_transform(const Matrix& rows) const;
};

Scaler fit_scaler(const Matrix& rows);

struct Standardized {
  DataTable train;
  DataTable test;
  Scaler scaler;
};

Standardized standardize(const DataTable& train, const DataTable& test);

}  // namespace leand
