#pragma once

#include <string>
#include <vector>

#include "gserec/nn/attention.hpp"
#include "gserec/nn/tape.hpp"
#include "gserec/util/rng.hpp"

namespace gserec::nn {

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, util::Rng& rng);
Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, util::Rng& rng);

/// y = x W + b, W uniform in +-1/sqrt(in).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out, util::Rng& rng, bool bias = true);

  Var operator()(Tape& tape, Var x) const;
  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

/// Linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, const std::vector<int>& widths, util::Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int width);
  Var operator()(Tape& tape, Var x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

/// Projections around nn::attention; queries from one input, keys and values
/// from another.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name, int width, int heads, util::Rng& rng,
                     bool output_projection = true);

  Var operator()(Tape& tape, Var queries, Var keys_values, const AttentionLayout& layout) const;

  const Linear& query_proj() const { return wq_; }
  const Linear& key_proj() const { return wk_; }
  const Linear& value_proj() const { return wv_; }
  const Linear* output_proj() const { return has_output_ ? &wo_ : nullptr; }
  int heads() const { return heads_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  int heads_ = 1;
  bool has_output_ = true;
};

/// Position-wise Linear -> ReLU -> Linear.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, int width, int hidden, util::Rng& rng);
  Var operator()(Tape& tape, Var x) const;

 private:
  Linear in_, out_;
};

}  // namespace gserec::nn
