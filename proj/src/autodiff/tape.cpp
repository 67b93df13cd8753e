#include "cag/autodiff/tape.hpp"

#include <algorithm>

namespace cag::ad {

namespace {
thread_local Tape tls_tape;
thread_local std::uint64_t tls_macs = 0;
}  // namespace

Tape& active_tape() { return tls_tape; }

std::uint64_t mac_count() { return tls_macs; }
void reset_mac_count() { tls_macs = 0; }
void add_macs(std::uint64_t macs) { tls_macs += macs; }

void Tape::record(std::string op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
  output->is_leaf = false;
  nodes_.push_back(TapeNode{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  TensorImpl* target = loss.impl().get();
  if (target->is_leaf) {
    if (target->requires_grad) accumulate_grad(*target, std::vector<double>{1.0});
    return;
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const TapeNode& n) { return n.output.get() == target; });
  if (it == nodes_.rend()) throw std::logic_error("loss tensor is not on the active tape");

  for (auto& node : nodes_) node.output->grad.clear();
  target->grad.assign(1, 1.0);
  for (; it != nodes_.rend(); ++it) {
    TensorImpl& out = *it->output;
    if (out.grad.empty()) continue;
    it->backward(out.grad);
  }
}

void backward(const Tensor& loss) { active_tape().backward(loss); }

NoGradGuard::NoGradGuard() : previous_(active_tape().recording()) { active_tape().set_recording(false); }
NoGradGuard::~NoGradGuard() { active_tape().set_recording(previous_); }

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape().recording()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

std::vector<double>& grad_buffer(TensorImpl& target) {
  if (target.grad.empty()) target.grad.assign(target.values.size(), 0.0);
  return target.grad;
}

void accumulate_grad(TensorImpl& target, std::span<const double> grad) {
  if (!target.requires_grad) return;
  auto& buf = grad_buffer(target);
  for (std::size_t i = 0; i < grad.size(); ++i) buf[i] += grad[i];
}

}  // namespace cag::ad
