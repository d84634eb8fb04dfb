#include "fixcommit/optimizer.hpp"

#include <cmath>

#include "fixcommit/errors.hpp"

namespace fixcommit {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  if (config_.learning_rate < 0.0) throw ContractError("learning rate must be non-negative");
  for (const auto& [name, t] : params.entries()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  auto& entries = params_->entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor& param = entries[p].second;
    const auto grad = param.grad();
    auto values = param.mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::save_state(TensorFile& file, const std::string& prefix) const {
  file.meta[prefix + "steps"] = std::to_string(steps_);
  const auto& entries = params_->entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const Shape& shape = entries[p].second.shape();
    file.tensors.emplace_back(prefix + "m." + entries[p].first, Tensor::from(shape, m_[p]));
    file.tensors.emplace_back(prefix + "v." + entries[p].first, Tensor::from(shape, v_[p]));
  }
}

void Adam::load_state(const TensorFile& file, const std::string& prefix) {
  const auto it = file.meta.find(prefix + "steps");
  if (it == file.meta.end()) throw ContractError("optimizer state missing from checkpoint");
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : file.tensors) by_name[name] = &t;
  const auto& entries = params_->entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    for (auto [tag, target] : {std::pair{"m.", &m_[p]}, std::pair{"v.", &v_[p]}}) {
      const auto found = by_name.find(prefix + tag + entries[p].first);
      if (found == by_name.end() || found->second->shape() != entries[p].second.shape()) {
        throw ContractError("optimizer state does not match parameter " + entries[p].first);
      }
      const auto vals = found->second->values();
      target->assign(vals.begin(), vals.end());
    }
  }
  steps_ = std::stoull(it->second);
}

}  // namespace fixcommit
