#include "leand/dataset.hpp"

#include "leand/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace leand {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* begin = cell.data();
  if (*begin == '+') ++begin;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

bool is_zero_one(const std::set<std::string>& values) {
  for (const auto& v : values) {
    const auto x = parse_number(v);
    if (!x || (*x != 0.0 && *x != 1.0)) return false;
  }
  return true;
}

}  // namespace

std::size_t DataTable::anomaly_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::anomaly));
}

void DataTable::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DataError("table '" + name + "': " + std::to_string(features.rows()) +
                    " feature rows but " + std::to_string(labels.size()) + " labels");
  }
  if (!source_rows.empty() && source_rows.size() != labels.size()) {
    throw DataError("table '" + name + "': source row list has the wrong length");
  }
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index j = 0; j < features.cols(); ++j) {
      if (!std::isfinite(features(i, j))) {
        throw DataError("table '" + name + "': non-finite value at row " +
                        std::to_string(i + 1) + ", column " + std::to_string(j + 1));
      }
    }
  }
}

DataTable DataTable::subset(std::span<const Index> rows) const {
  DataTable out;
  out.name = name;
  out.features.resize(static_cast<Index>(rows.size()), dim());
  out.labels.reserve(rows.size());
  out.source_rows.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Index>(k)) = features.row(rows[k]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[k])]);
    out.source_rows.push_back(source_row(rows[k]));
  }
  return out;
}

LabelColumn parse_label_column(const std::string& text) {
  const std::string t = trim(text);
  if (!t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    return static_cast<std::size_t>(std::stoull(t));
  }
  return t;
}

DataTable load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");

  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    lines.push_back(split_cells(line));
  }
  if (lines.empty()) throw DataError("'" + path.string() + "': no data rows");

  // A first line with any non-numeric cell is a header.
  std::vector<std::string> header;
  const bool has_header = std::any_of(lines.front().begin(), lines.front().end(),
                                      [](const std::string& c) { return !parse_number(c); });
  std::size_t first_data = 0;
  if (has_header) {
    header = lines.front();
    first_data = 1;
  }
  if (lines.size() <= first_data) throw DataError("'" + path.string() + "': no data rows");

  const std::size_t width = lines[first_data].size();
  if (width < 2) throw DataError("'" + path.string() + "': need at least one feature and a label");

  std::size_t label_col = width - 1;
  if (const auto* idx = std::get_if<std::size_t>(&options.label)) {
    label_col = *idx;
  } else if (const auto& nm = std::get<std::string>(options.label); !nm.empty()) {
    if (header.empty()) throw DataError("label column '" + nm + "' given by name but file has no header");
    const auto it = std::find(header.begin(), header.end(), nm);
    if (it == header.end()) throw DataError("label column '" + nm + "' not found in header");
    label_col = static_cast<std::size_t>(it - header.begin());
  }
  if (label_col >= width) {
    throw DataError("label column index " + std::to_string(label_col) + " out of range");
  }

  const std::size_t rows = lines.size() - first_data;
  DataTable table;
  table.name = path.stem().string();
  table.features.resize(static_cast<Index>(rows), static_cast<Index>(width - 1));
  std::vector<std::string> raw_labels;
  raw_labels.reserve(rows);

  for (std::size_t r = 0; r < rows; ++r) {
    const auto& cells = lines[first_data + r];
    const std::string where =
        "row " + std::to_string(r + 1) + " (line " + std::to_string(first_data + r + 1) + ")";
    if (cells.size() != width) {
      throw DataError(where + ": expected " + std::to_string(width) + " cells, found " +
                      std::to_string(cells.size()));
    }
    Index out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_col) continue;
      const auto value = parse_number(cells[c]);
      const std::string col_name = header.empty() ? std::to_string(c + 1) : "'" + header[c] + "'";
      if (!value) throw DataError(where + ", column " + col_name + ": non-numeric value '" + cells[c] + "'");
      if (!std::isfinite(*value)) {
        throw DataError(where + ", column " + col_name + ": non-finite value '" + cells[c] + "'");
      }
      table.features(static_cast<Index>(r), out_col++) = *value;
    }
    raw_labels.push_back(cells[label_col]);
  }

  const std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
  if (distinct.size() < 2) {
    throw DataError("'" + path.string() + "': single-class label column (only '" + *distinct.begin() + "')");
  }
  table.labels.reserve(rows);
  if (options.anomaly_value) {
    if (distinct.size() != 2) throw DataError("label column must have exactly two distinct values");
    if (!distinct.contains(*options.anomaly_value)) {
      throw DataError("anomaly label '" + *options.anomaly_value + "' does not occur in the label column");
    }
    for (const auto& v : raw_labels) {
      table.labels.push_back(v == *options.anomaly_value ? Label::anomaly : Label::normal);
    }
  } else {
    if (!is_zero_one(distinct)) {
      std::string seen;
      for (const auto& v : distinct) seen += (seen.empty() ? "" : ", ") + v;
      throw DataError("label column values {" + seen + "} are not {0,1}; specify the anomaly value");
    }
    for (const auto& v : raw_labels) {
      table.labels.push_back(*parse_number(v) == 1.0 ? Label::anomaly : Label::normal);
    }
  }
  return table;
}

double outlier_rate(const DataTable& table) {
  if (table.count() == 0) throw DataError("outlier_rate of an empty table");
  return static_cast<double>(table.anomaly_count()) / static_cast<double>(table.count());
}

std::pair<DataTable, DataTable> split(const DataTable& table, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1), got " + std::to_string(spec.train_fraction));
  }
  std::vector<Index> normal, anomalous;
  for (Index i = 0; i < table.count(); ++i) {
    (table.labels[static_cast<std::size_t>(i)] == Label::anomaly ? anomalous : normal).push_back(i);
  }
  if (normal.empty() || anomalous.empty()) {
    throw DataError("split needs both normal and anomalous rows in '" + table.name + "'");
  }

  Rng rng(spec.seed);
  std::vector<Index> train_rows, test_rows;
  if (spec.stratified) {
    for (auto* group : {&normal, &anomalous}) {
      rng.shuffle(group->begin(), group->end());
      const auto n = static_cast<long>(group->size());
      const long take = std::clamp(std::lround(spec.train_fraction * static_cast<double>(n)), 0L, n - 1);
      train_rows.insert(train_rows.end(), group->begin(), group->begin() + take);
      test_rows.insert(test_rows.end(), group->begin() + take, group->end());
    }
  } else {
    std::vector<Index> all(static_cast<std::size_t>(table.count()));
    for (Index i = 0; i < table.count(); ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all.begin(), all.end());
    const auto n = static_cast<long>(all.size());
    const long take = std::lround(spec.train_fraction * static_cast<double>(n));
    train_rows.assign(all.begin(), all.begin() + std::clamp(take, 0L, n));
    test_rows.assign(all.begin() + std::clamp(take, 0L, n), all.end());
  }
  if (train_rows.empty() || test_rows.empty()) {
    throw ConfigError("train fraction " + std::to_string(spec.train_fraction) + " leaves a partition empty");
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  auto result = std::make_pair(table.subset(train_rows), table.subset(test_rows));
  const auto test_anomalies = result.second.anomaly_count();
  if (test_anomalies == 0 || test_anomalies == result.second.labels.size()) {
    throw DataError("test partition lacks one of the classes; use a stratified split");
  }
  return result;
}

Matrix Scaler::transform(const Matrix& rows) const {
  require_shape(rows.cols() == mean.size(), "scaler: column count mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (Index j = 0; j < rows.cols(); ++j) {
    if (scale(j) > 0.0) {
      out.col(j) = (rows.col(j).array() - mean(j)) / scale(j);
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

Vector Scaler::transform(const Vector& row) const {
  require_shape(row.size() == mean.size(), "scaler: dimension mismatch");
  Vector out(row.size());
  for (Index j = 0; j < row.size(); ++j) out(j) = scale(j) > 0.0 ? (row(j) - mean(j)) / scale(j) : 0.0;
  return out;
}

Matrix Scaler::inverse_transform(const Matrix& rows) const {
  require_shape(rows.cols() == mean.size(), "scaler: column count mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (Index j = 0; j < rows.cols(); ++j) out.col(j) = rows.col(j).array() * scale(j) + mean(j);
  return out;
}

Scaler fit_scaler(const Matrix& rows) {
  if (rows.rows() == 0) throw DataError("cannot fit a scaler on zero rows");
  Scaler s;
  s.mean = rows.colwise().mean().transpose();
  s.scale.resize(rows.cols());
  for (Index j = 0; j < rows.cols(); ++j) {
    const double var = (rows.col(j).array() - s.mean(j)).square().mean();
    // Columns whose spread is at rounding level are treated as constant.
    s.scale(j) = var > 1e-24 * std::max(1.0, s.mean(j) * s.mean(j)) ? std::sqrt(var) : 0.0;
  }
  return s;
}

Standardized standardize(const DataTable& train, const DataTable& test) {
  Standardized out{train, test, fit_scaler(train.features)};
  out.train.features = out.scaler.transform(train.features);
  out.test.features = out.scaler.transform(test.features);
  return out;
}

}  // namespace leand
