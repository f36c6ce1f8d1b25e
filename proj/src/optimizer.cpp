#include "cpgnn/optimizer.hpp"

#include <cmath>
#include <string>

#include "cpgnn/error.hpp"

namespace cpgnn {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (sgd|adam)");
}

Optimizer::Optimizer(OptimizerKind kind, Real learning_rate, Real beta1, Real beta2, Real eps)
    : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
}

void Optimizer::step(std::span<Parameter* const> params) {
  ++state_.steps;
  if (kind_ == OptimizerKind::kSgd) {
    for (Parameter* p : params) {
      for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] -= lr_ * p->grad[i];
    }
    return;
  }
  if (state_.first_moment.empty()) {
    for (Parameter* p : params) {
      state_.first_moment.emplace_back(p->value.shape());
      state_.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state_.first_moment.size() != params.size()) throw ContractViolation("optimizer parameter set changed");
  const auto t = static_cast<Real>(state_.steps);
  const Real c1 = Real(1) - std::pow(beta1_, t);
  const Real c2 = Real(1) - std::pow(beta2_, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state_.first_moment[k];
    Tensor& v = state_.second_moment[k];
    if (m.shape() != p.value.shape()) throw ContractViolation("optimizer state shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const Real g = p.grad[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace cpgnn
