#include "offpolicy/numkit/tape.hpp"

#include <algorithm>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {

Tensor Tape::record(Shape shape, std::vector<double> data,
                    std::initializer_list<Tensor> inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  return finish(std::move(shape), std::move(data), needs_grad, std::move(backward));
}

Tensor Tape::record(Shape shape, std::vector<double> data,
                    const std::vector<Tensor>& inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  return finish(std::move(shape), std::move(data), needs_grad, std::move(backward));
}

Tensor Tape::finish(Shape shape, std::vector<double> data, bool needs_grad,
                    BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  if (recording_ && needs_grad) {
    out.s_->requires_grad = true;
    out.s_->grad.assign(out.s_->data.size(), 0.0);
    out.s_->producer = this;
    nodes_.push_back({out.s_, std::move(backward)});
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  if (loss.storage()->producer != this) {
    throw ContractError("backward() loss was not produced on this tape");
  }
  for (auto& node : nodes_) {
    std::fill(node.output->grad.begin(), node.output->grad.end(), 0.0);
  }
  loss.storage()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward(*it->output);
  }
}

}  // namespace offpolicy::numkit
