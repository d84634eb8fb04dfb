#pragma once

#include <string>
#include <vector>

#include "fixcommit/checkpoint.hpp"

namespace fixcommit {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over every tensor of a ParameterSet.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  /// Applies one update from the accumulated gradients.
  void step();
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// Moments are stored as tensors named "<prefix>m.<param>" / "<prefix>v.<param>".
  void save_state(TensorFile& file, const std::string& prefix) const;
  void load_state(const TensorFile& file, const std::string& prefix);

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace fixcommit
