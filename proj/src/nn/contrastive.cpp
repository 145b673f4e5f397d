#include "gserec/nn/contrastive.hpp"

#include <algorithm>
#include <stdexcept>

#include "gserec/nn/ops.hpp"

namespace gserec::nn {

Var symmetric_info_nce(Var a, Var b, Var tau) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw std::invalid_argument("symmetric_info_nce: expected equal, non-empty batches");
  }
  Var logits = divide(matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b)), tau);
  return symmetric_diagonal_cross_entropy(logits);
}

double symmetric_info_nce(const Matrix& a, const Matrix& b, double tau) {
  Tape tape(false);
  Matrix t(1, 1);
  t(0, 0) = tau;
  return symmetric_info_nce(tape.constant(a), tape.constant(b), tape.constant(t)).value()(0, 0);
}

void clamp_temperature(Parameter& tau) {
  tau.value(0, 0) = std::clamp(tau.value(0, 0), kMinTemperature, kMaxTemperature);
}

}  // namespace gserec::nn
