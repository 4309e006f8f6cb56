#pragma once

#include "leand/common.hpp"

#include <string_view>

namespace leand {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer over a flat parameter vector. Plain SGD keeps no
/// state; Adam keeps first and second moment estimates.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, Index size);

  /// Applies one descent step to `params` using `grad`.
  void step(Eigen::Ref<Vector> params, const Vector& grad);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Vector first_moment_;
  Vector second_moment_;
  long steps_ = 0;
};

}  // namespace leand
