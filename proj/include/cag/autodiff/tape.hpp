#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cag/autodiff/tensor.hpp"

namespace cag::ad {

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  BackwardFn backward;
};

// Append-only record of the forward pass. Each thread owns one tape, so
// independent model replicas never share mutable autodiff state.
class Tape {
 public:
  void record(std::string op, std::vector<std::shared_ptr<TensorImpl>> inputs,
              std::shared_ptr<TensorImpl> output, BackwardFn backward);

  // Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
  // intermediate gradients are rebuilt on every sweep.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

 private:
  std::vector<TapeNode> nodes_;
  bool recording_ = true;
};

Tape& active_tape();

// Disables recording for the enclosing scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Clears the active tape when the scope ends.
class TapeScope {
 public:
  TapeScope() = default;
  ~TapeScope() { active_tape().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

void backward(const Tensor& loss);

// Helpers for op implementations.
bool any_requires_grad(std::initializer_list<const Tensor*> inputs);
Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);
void accumulate_grad(TensorImpl& target, std::span<const double> grad);
std::vector<double>& grad_buffer(TensorImpl& target);

// Multiply-accumulate counter used to cross-check the analytic FLOP model.
std::uint64_t mac_count();
void reset_mac_count();
void add_macs(std::uint64_t macs);

}  // namespace cag::ad
