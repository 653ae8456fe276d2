#include "offpolicy/numkit/layers.hpp"

#include <cmath>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {

GruParams make_gru(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                   std::size_t hidden_dim, Rng& rng) {
  GruParams p;
  p.w_x = params.add(prefix + ".w_x", glorot_uniform(input_dim, 3 * hidden_dim, rng));
  p.b_x = params.add(prefix + ".b_x", Tensor::zeros({1, 3 * hidden_dim}, true));
  p.u_zr = params.add(prefix + ".u_zr", glorot_uniform(hidden_dim, 2 * hidden_dim, rng));
  p.u_c = params.add(prefix + ".u_c", glorot_uniform(hidden_dim, hidden_dim, rng));
  return p;
}

Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const GruParams& p) {
  const std::size_t hd = p.hidden_dim();
  if (x.cols() != p.input_dim() || h.cols() != hd || x.rows() != h.rows() ||
      p.w_x.cols() != 3 * hd || p.u_zr.rows() != hd || p.u_zr.cols() != 2 * hd ||
      p.b_x.size() != 3 * hd) {
    throw DimensionError("gru_cell: x " + shape_string(x.shape()) + ", h " +
                         shape_string(h.shape()) + " incompatible with w_x " +
                         shape_string(p.w_x.shape()) + ", u_c " + shape_string(p.u_c.shape()));
  }
  const Tensor xw = add_row(tape, matmul(tape, x, p.w_x), p.b_x);
  const Tensor gates = sigmoid(
      tape, add(tape, slice_cols(tape, xw, 0, 2 * hd), matmul(tape, h, p.u_zr)));
  const Tensor z = slice_cols(tape, gates, 0, hd);
  const Tensor r = slice_cols(tape, gates, hd, 2 * hd);
  const Tensor candidate = tanh(
      tape, add(tape, slice_cols(tape, xw, 2 * hd, 3 * hd), matmul(tape, mul(tape, r, h), p.u_c)));
  return add(tape, mul(tape, affine(tape, z, -1.0, 1.0), h), mul(tape, z, candidate));
}

Linear make_linear(ParameterSet& params, const std::string& prefix, std::size_t in,
                   std::size_t out, Rng& rng) {
  return {params.add(prefix + ".weight", glorot_uniform(in, out, rng)),
          params.add(prefix + ".bias", Tensor::zeros({1, out}, true))};
}

Tensor linear(Tape& tape, const Tensor& x, const Linear& layer) {
  return add_row(tape, matmul(tape, x, layer.weight), layer.bias);
}

Tensor scaled_dot_product_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                    const Tensor& v, bool causal) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt_d);
  const Tensor weights = causal ? causal_softmax(tape, scores) : softmax(tape, scores, 1);
  return matmul(tape, weights, v);
}

AttentionParams make_attention(ParameterSet& params, const std::string& prefix,
                               std::size_t model_dim, std::size_t heads, Rng& rng) {
  if (heads == 0 || model_dim % heads != 0) {
    throw DimensionError("attention: model width " + std::to_string(model_dim) +
                         " not divisible into " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.query = make_linear(params, prefix + ".query", model_dim, model_dim, rng);
  p.key = make_linear(params, prefix + ".key", model_dim, model_dim, rng);
  p.value = make_linear(params, prefix + ".value", model_dim, model_dim, rng);
  p.output = make_linear(params, prefix + ".output", model_dim, model_dim, rng);
  p.heads = heads;
  return p;
}

Tensor multi_head_attention(Tape& tape, const Tensor& queries, const Tensor& memory,
                            const AttentionParams& p, bool causal) {
  const Tensor q = linear(tape, queries, p.query);
  const Tensor k = linear(tape, memory, p.key);
  const Tensor v = linear(tape, memory, p.value);
  const std::size_t width = q.cols() / p.heads;
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::size_t lo = h * width, hi = lo + width;
    heads.push_back(scaled_dot_product_attention(tape, slice_cols(tape, q, lo, hi),
                                                 slice_cols(tape, k, lo, hi),
                                                 slice_cols(tape, v, lo, hi), causal));
  }
  const Tensor merged = p.heads == 1 ? heads.front() : concat_cols(tape, heads);
  return linear(tape, merged, p.output);
}

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& prefix,
                                std::size_t dim) {
  return {params.add(prefix + ".gain", Tensor::filled({1, dim}, 1.0, true)),
          params.add(prefix + ".bias", Tensor::zeros({1, dim}, true))};
}

Tensor layer_norm(Tape& tape, const Tensor& x, const LayerNormParams& p) {
  return layer_norm(tape, x, p.gain, p.bias);
}

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& prefix,
                                    std::size_t model_dim, std::size_t hidden_dim, Rng& rng) {
  return {make_linear(params, prefix + ".inner", model_dim, hidden_dim, rng),
          make_linear(params, prefix + ".outer", hidden_dim, model_dim, rng)};
}

Tensor feed_forward(Tape& tape, const Tensor& x, const FeedForwardParams& p) {
  return linear(tape, relu(tape, linear(tape, x, p.inner)), p.outer);
}

}  // namespace offpolicy::numkit
