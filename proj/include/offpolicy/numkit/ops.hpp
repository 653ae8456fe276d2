#ifndef OFFPOLICY_NUMKIT_OPS_HPP_
#define OFFPOLICY_NUMKIT_OPS_HPP_

#include <span>
#include <vector>

#include "offpolicy/numkit/tape.hpp"
#include "offpolicy/numkit/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and
// records a backward rule on the tape when any input requires grad. Shapes are
// interpreted as rows x cols (rank-1 tensors are single rows).
namespace offpolicy::numkit {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// a[m x n] + row[1 x n] broadcast over every row of a.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// a * factor + offset, elementwise.
Tensor affine(Tape& tape, const Tensor& a, double factor, double offset);

Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);

// Max-subtracted softmax along axis 0 (down columns) or 1 / -1 (along rows).
Tensor softmax(Tape& tape, const Tensor& x, int axis = -1);
Tensor log_softmax(Tape& tape, const Tensor& x);
// Row-wise softmax where row i only sees columns j <= i.
Tensor causal_softmax(Tape& tape, const Tensor& scores);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);

// Rows of `table` selected by ids: [ids.size() x table.cols()].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
// Stacks tensors with equal column counts on top of each other.
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
Tensor repeat_rows(Tape& tape, const Tensor& row, std::size_t count);
// out[0, i] = a[i, cols[i]].
Tensor pick(Tape& tape, const Tensor& a, std::span<const int> cols);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// sum_i a_i * weights_i with weights held constant.
Tensor dot_const(Tape& tape, const Tensor& a, std::span<const double> weights);
// Sum over rows of -log softmax(logits[i])[targets[i]], via log-sum-exp.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);

// Plain helpers on raw logits, no tape.
double log_sum_exp(std::span<const double> x);
std::vector<double> softmax_values(std::span<const double> logits);
std::vector<double> log_softmax_values(std::span<const double> logits);

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_OPS_HPP_
