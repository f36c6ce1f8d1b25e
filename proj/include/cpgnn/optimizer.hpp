#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cpgnn/autodiff.hpp"

namespace cpgnn {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

// Moment buffers, one pair per parameter in the order passed to step().
struct OptimizerState {
  std::uint64_t steps = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Real learning_rate, Real beta1 = Real(0.9), Real beta2 = Real(0.999),
            Real eps = Real(1e-8));

  OptimizerKind kind() const { return kind_; }
  Real learning_rate() const { return lr_; }

  // Applies one update from each parameter's accumulated grad.
  void step(std::span<Parameter* const> params);

  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state) { state_ = std::move(state); }

 private:
  OptimizerKind kind_;
  Real lr_, beta1_, beta2_, eps_;
  OptimizerState state_;
};

}  // namespace cpgnn
