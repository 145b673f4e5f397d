#pragma once

#include <vector>

#include "gserec/nn/tape.hpp"

namespace gserec::nn {

/// Block layout for batched attention. Queries are stored as `batch` blocks
/// of `q_rows` rows, keys/values as `batch` blocks of `k_rows` rows. Only the
/// first q_len[b] query rows and k_len[b] key rows of block b take part;
/// remaining rows are padding.
struct AttentionLayout {
  int batch = 0;
  int q_rows = 0;
  int k_rows = 0;
  std::vector<int> q_len;
  std::vector<int> k_len;

  void validate() const;
};

/// Scaled dot-product attention split into `heads` column groups:
///   out_b = softmax(Q_b K_b^T / sqrt(d_head)) V_b   per head.
/// Padded query rows and blocks without keys produce zero rows.
Var attention(Var q, Var k, Var v, const AttentionLayout& layout, int heads);

}  // namespace gserec::nn
