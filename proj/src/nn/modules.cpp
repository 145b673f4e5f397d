#include "gserec/nn/modules.hpp"

#include <cmath>

#include "gserec/nn/ops.hpp"

namespace gserec::nn {

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, util::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return m;
}

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, util::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out, util::Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = &params.add(name + ".weight", uniform_init(in, out, bound, rng));
  if (bias) bias_ = &params.add(name + ".bias", uniform_init(1, out, bound, rng));
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = matmul(x, tape.leaf(*weight_));
  if (bias_) y = add_row(y, tape.leaf(*bias_));
  return y;
}

Mlp::Mlp(ParameterSet& params, const std::string& name, const std::vector<int>& widths, util::Rng& rng) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(params, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, x);
    if (i + 1 < layers_.size()) x = relu(x);
  }
  return x;
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int width) {
  gain_ = &params.add(name + ".gain", Matrix::Ones(1, width));
  bias_ = &params.add(name + ".bias", Matrix::Zero(1, width));
}

Var LayerNorm::operator()(Tape& tape, Var x) const {
  return layer_norm(x, tape.leaf(*gain_), tape.leaf(*bias_));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& name, int width, int heads,
                                       util::Rng& rng, bool output_projection)
    : wq_(params, name + ".q", width, width, rng),
      wk_(params, name + ".k", width, width, rng),
      wv_(params, name + ".v", width, width, rng),
      heads_(heads),
      has_output_(output_projection) {
  if (has_output_) wo_ = Linear(params, name + ".o", width, width, rng);
}

Var MultiHeadAttention::operator()(Tape& tape, Var queries, Var keys_values,
                                   const AttentionLayout& layout) const {
  Var out = attention(wq_(tape, queries), wk_(tape, keys_values), wv_(tape, keys_values), layout, heads_);
  return has_output_ ? wo_(tape, out) : out;
}

FeedForward::FeedForward(ParameterSet& params, const std::string& name, int width, int hidden, util::Rng& rng)
    : in_(params, name + ".in", width, hidden, rng), out_(params, name + ".out", hidden, width, rng) {}

Var FeedForward::operator()(Tape& tape, Var x) const { return out_(tape, relu(in_(tape, x))); }

}  // namespace gserec::nn
