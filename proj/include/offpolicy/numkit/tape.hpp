#ifndef OFFPOLICY_NUMKIT_TAPE_HPP_
#define OFFPOLICY_NUMKIT_TAPE_HPP_

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "offpolicy/numkit/tensor.hpp"

namespace offpolicy::numkit {

// Receives the finished output (with its grad filled in) and accumulates into
// the grads of whatever inputs the closure captured.
using BackwardFn = std::function<void(const TensorStorage& out)>;

// Records ops in execution order so backward() can replay them in reverse.
// Build one per training step; a non-recording tape turns every op into a
// plain forward computation.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Wraps a freshly computed value. A node is only kept when recording and
  // at least one input requires grad.
  Tensor record(Shape shape, std::vector<double> data,
                std::initializer_list<Tensor> inputs, BackwardFn backward);
  Tensor record(Shape shape, std::vector<double> data,
                const std::vector<Tensor>& inputs, BackwardFn backward);

  // Fills leaf grads with d(loss)/d(leaf). Leaf grads accumulate across
  // calls; intermediate grads are reset each call.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::shared_ptr<TensorStorage> output;
    BackwardFn backward;
  };

  Tensor finish(Shape shape, std::vector<double> data, bool needs_grad,
                BackwardFn backward);

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_TAPE_HPP_
