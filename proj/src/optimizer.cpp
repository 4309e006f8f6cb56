#include "leand/optimizer.hpp"

#include <cmath>

namespace leand {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(const OptimizerConfig& config, Index size) : config_(config) {
  if (config_.kind == OptimizerKind::adam) {
    first_moment_ = Vector::Zero(size);
    second_moment_ = Vector::Zero(size);
  }
}

void Optimizer::step(Eigen::Ref<Vector> params, const Vector& grad) {
  require_shape(params.size() == grad.size(), "optimizer: gradient size mismatch");
  const double lr = config_.learning_rate;
  if (lr == 0.0) return;
  if (config_.kind == OptimizerKind::sgd) {
    params -= lr * grad;
    return;
  }
  require_shape(first_moment_.size() == grad.size(), "optimizer: state size mismatch");
  ++steps_;
  first_moment_ = config_.beta1 * first_moment_ + (1.0 - config_.beta1) * grad;
  second_moment_ =
      config_.beta2 * second_moment_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  params.array() -= lr * (first_moment_.array() / c1) /
                    ((second_moment_.array() / c2).sqrt() + config_.epsilon);
}

}  // namespace leand
