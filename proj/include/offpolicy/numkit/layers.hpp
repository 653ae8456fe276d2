#ifndef OFFPOLICY_NUMKIT_LAYERS_HPP_
#define OFFPOLICY_NUMKIT_LAYERS_HPP_

#include <string>

#include "offpolicy/numkit/ops.hpp"
#include "offpolicy/numkit/parameters.hpp"

namespace offpolicy::numkit {

// GRU cell, gates ordered (update z, reset r, candidate):
//   z  = sigmoid(x Wx[:, 0:H]   + bx[0:H]   + h Uzr[:, 0:H])
//   r  = sigmoid(x Wx[:, H:2H]  + bx[H:2H]  + h Uzr[:, H:2H])
//   h~ = tanh   (x Wx[:, 2H:3H] + bx[2H:3H] + (r * h) Uc)
//   h' = (1 - z) * h + z * h~
// The reset gate multiplies h before the candidate projection.
struct GruParams {
  Tensor w_x;   // [d_in x 3H]
  Tensor b_x;   // [1 x 3H]
  Tensor u_zr;  // [H x 2H]
  Tensor u_c;   // [H x H]

  std::size_t input_dim() const { return w_x.rows(); }
  std::size_t hidden_dim() const { return u_c.rows(); }
};

GruParams make_gru(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                   std::size_t hidden_dim, Rng& rng);

// x: [B x d_in], h: [B x H] -> [B x H].
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruParams& p);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]
};

Linear make_linear(ParameterSet& params, const std::string& prefix, std::size_t in,
                   std::size_t out, Rng& rng);
Tensor linear(Tape& tape, const Tensor& x, const Linear& layer);

// softmax(q k^T / sqrt(d)) v, optionally with a causal mask.
Tensor scaled_dot_product_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                    const Tensor& v, bool causal);

struct AttentionParams {
  Linear query, key, value, output;
  std::size_t heads = 1;
};

AttentionParams make_attention(ParameterSet& params, const std::string& prefix,
                               std::size_t model_dim, std::size_t heads, Rng& rng);
// Multi-head attention of `queries` [Tq x d] over `memory` [Tk x d].
Tensor multi_head_attention(Tape& tape, const Tensor& queries, const Tensor& memory,
                            const AttentionParams& p, bool causal);

struct LayerNormParams {
  Tensor gain, bias;
};

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& prefix,
                                std::size_t dim);
Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNormParams& p);

struct FeedForwardParams {
  Linear inner, outer;
};

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& prefix,
                                    std::size_t model_dim, std::size_t hidden_dim, Rng& rng);
// outer(relu(inner(x))).
Tensor feed_forward(Tape& tape, const Tensor& x, const FeedForwardParams& p);

}  // namespace offpolicy::numkit

#endif  // OFFPOLICY_NUMKIT_LAYERS_HPP_
