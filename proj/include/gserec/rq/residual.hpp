#pragma once

#include <span>
#include <vector>

#include "gserec/util/matrix.hpp"

namespace gserec::rq {

/// Residual quantization of a batch of latents (rows of `z`) against one
/// channel's codebook stack.
struct Quantization {
  std::vector<std::vector<int>> codes;  ///< [row][level]
  Matrix quantized;                     ///< sum of chosen codes per row
  std::vector<Matrix> residuals;        ///< L+1 entries; residuals[0] = z
};

/// Index of the row of `codebook` nearest to `r` in squared Euclidean
/// distance; ties go to the lowest index.
int nearest_code(const Matrix& codebook, const RowVector& r);

Quantization residual_quantize(const Matrix& z, std::span<const Matrix> codebooks);

}  // namespace gserec::rq
