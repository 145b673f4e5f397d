#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gserec/nn/tape.hpp"

namespace gserec::nn {

// Differentiable primitives. Every op records onto the tape of its inputs.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// a / s for a 1x1 s.
Var divide(Var a, Var s);
/// Adds a 1 x cols row to every row of a.
Var add_row(Var a, Var row);
Var relu(Var a);
Var sigmoid(Var a);

/// Multiplies row i by mask[i].
Var mask_rows(Var a, std::shared_ptr<const Vector> mask);

/// Each row divided by max(||row||, eps).
Var l2_normalize_rows(Var a, double eps = 1e-8);

/// s * x for a fixed sparse s. Covers gathers, segment means and graph
/// aggregation.
Var sparse_matmul(std::shared_ptr<const SparseMatrix> s, Var x);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

/// Per-row layer normalisation with learnable gain and bias (both 1 x cols).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var sum(Var a);
Var sum_squares(Var a);

/// Symmetric cross-entropy over a square logit matrix whose diagonal holds
/// the positive pairs:
///   (1/B) sum_i [ lse_j(S_ij) - S_ii + lse_j(S_ji) - S_ii ].
Var symmetric_diagonal_cross_entropy(Var logits);

/// Mean binary cross-entropy of probabilities against labels, with the
/// probabilities clamped to [eps, 1 - eps] before the log.
Var binary_cross_entropy(Var prob, std::shared_ptr<const Vector> labels, double eps = 1e-7);

/// Forward value `quantized`, gradient passed to z unchanged.
Var straight_through(Var z, Matrix quantized);

/// Row selection / averaging matrices.
std::shared_ptr<const SparseMatrix> one_hot_rows(std::span<const int> indices, Eigen::Index num_cols);

}  // namespace gserec::nn
