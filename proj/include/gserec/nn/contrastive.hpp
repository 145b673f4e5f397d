#pragma once

#include "gserec/nn/tape.hpp"

namespace gserec::nn {

/// Symmetric two-term InfoNCE between paired rows of `a` and `b` under cosine
/// similarity and temperature `tau` (a 1x1 node):
///
///   L = -(1/B) sum_i [ log softmax_j(cos(a_i, b_j)/tau)_i
///                    + log softmax_j(cos(a_j, b_i)/tau)_i ]
///
/// The softmax denominators run over the positive and the B-1 in-batch
/// negatives, so L >= 0 and L = 0 when B = 1. Zero rows are guarded with
/// eps = 1e-8 in the normalisation.
Var symmetric_info_nce(Var a, Var b, Var tau);

/// Value-only evaluation of the same loss.
double symmetric_info_nce(const Matrix& a, const Matrix& b, double tau);

/// Clamp range shared by every learnable temperature.
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;

void clamp_temperature(Parameter& tau);

}  // namespace gserec::nn
