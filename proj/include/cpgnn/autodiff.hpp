#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "cpgnn/tensor.hpp"

namespace cpgnn {

// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    grad.fill(Real(0));
  }
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Sequential record of executed operations. backward() walks it once in
// reverse order; a second call without reset() throws.
class Tape {
 public:
  // Receives the node's output gradient and its forward value.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Constant bound to external storage that must outlive the tape.
  Var view(const Tensor& value);
  // Leaf whose gradient is read back through grad().
  Var variable(Tensor value);
  // Leaf bound to external storage; backward() adds into p.grad.
  Var parameter(Parameter& p);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  // Gradient buffer of an input, zero-initialized on first use; nullptr when
  // the input does not require a gradient.
  Tensor* grad_slot(Var v);

  void backward(Var loss);
  // Gradient of the last backward() root with respect to v (zeros if unreached).
  Tensor grad(Var v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// Seed material for a dropout mask; the mask is a pure function of it.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
};

namespace ops {

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
// [m,k] x [n,k]^T -> [m,n]
Var matmul_nt(Var a, Var b);

// Elementwise with trailing-dimension broadcasting: one operand's shape must
// equal a suffix of the other's.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real c);

Var gather_rows(Var table, std::span<const std::uint32_t> ids);
// out[s] = sum over rows e with segments[e] == s of weights[e] * values[e].
Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> segments,
                         std::size_t num_segments);
// Softmax of scores within each segment (max-shifted).
Var segment_softmax(Var scores, std::span<const std::uint32_t> segments, std::size_t num_segments);
// [E,d] . [E,d] -> [E]
Var rowwise_dot(Var a, Var b);
// [m,a] || [m,b] -> [m,a+b]
Var concat_cols(Var a, Var b);
Var reshape(Var a, Shape shape);

// Valid cross-correlation, stride 1: [B,Ci,H,W] * [Co,Ci,kh,kw] -> [B,Co,H-kh+1,W-kw+1].
Var conv2d(Var input, Var filters);
Var conv2d(Var input, Var filters, Var bias);

Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
// Inverted dropout; identity when !training or rate == 0.
Var dropout(Var a, Real rate, DropoutKey key, bool training);

Var sum(Var a);
Var mean(Var a);

// Mean binary cross entropy over all elements. Probabilities are clipped to
// [clip, 1 - clip]; the gradient is evaluated at the clipped value.
Var bce_loss(Var probs, Var targets, Real clip = Real(1e-7));

}  // namespace ops

inline Var operator+(Var a, Var b) { return ops::add(a, b); }
inline Var operator-(Var a, Var b) { return ops::sub(a, b); }
inline Var operator*(Var a, Var b) { return ops::mul(a, b); }

}  // namespace cpgnn
