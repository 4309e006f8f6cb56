#pragma once

#include "leand/common.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace leand::testing {

inline std::filesystem::path data_dir() { return LEAND_DATA_DIR; }

/// Scratch file under the build tree, removed on destruction.
class TempFile {
 public:
  TempFile(const std::string& name, const std::string& contents)
      : path_(std::filesystem::temp_directory_path() / ("leand_test_" + name)) {
    std::ofstream(path_) << contents;
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

using oracle::GradientCheck;
using oracle::compare_gradients;
using oracle::numeric_gradient;

}  // namespace leand::testing
