#pragma once

#include "leand/dataset.hpp"
#include "leand/detector.hpp"
#include "leand/evaluation.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace leand {

/// Everything a CLI run depends on. Written back as `run.cfg` next to the
/// outputs so a run can be replayed.
struct RunConfig {
  std::string data;
  /// Empty means the last column.
  std::string label;
  std::optional<std::string> anomaly_value;
  std::string out = "out";
  /// Model file for `eval`; defaults to <out>/model.bin.
  std::string checkpoint;
  SplitSpec split;
  DetectorConfig detector;
  KdeOptions kde;
  bool with_auc = false;

  GridSpec grid;
  /// grid.anomaly_rate = auto: the training rate plus this many neighbours
  /// on each side, `grid_rate_step` apart.
  bool grid_rate_auto = false;
  int grid_rate_steps = 5;
  double grid_rate_step = 0.01;
  double selection_fraction = 0.5;
  unsigned workers = 1;
};

using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines; '#' starts a comment. Duplicate keys are an error.
ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::filesystem::path& path);

/// Applies `entries` on top of `base`. Unknown keys are rejected.
RunConfig apply_config(RunConfig base, const ConfigMap& entries);

/// Canonical text form; parse_config_text + apply_config on it gives back an
/// equivalent config.
std::string to_text(const RunConfig& config);

/// Accepts plain decimals and powers written as `2^k`.
double parse_number(const std::string& text);
/// Comma or whitespace separated numbers; `2^a..2^b` expands to every power.
std::vector<double> parse_number_list(const std::string& text);
/// "64,32,16" or "(64,32,16)".
std::vector<Index> parse_architecture(const std::string& text);
/// "(64,32,16) (128,32,2)" or "64,32,16; 128,32,2".
std::vector<std::vector<Index>> parse_architecture_list(const std::string& text);

/// Shortest text that reads back to the same double.
std::string format_number(double v);

}  // namespace leand
