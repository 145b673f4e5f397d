#include "gserec/nn/attention.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace gserec::nn {

void AttentionLayout::validate() const {
  if (batch < 0 || q_rows < 0 || k_rows < 0 || static_cast<int>(q_len.size()) != batch ||
      static_cast<int>(k_len.size()) != batch) {
    throw std::invalid_argument("attention layout: inconsistent sizes");
  }
  for (int b = 0; b < batch; ++b) {
    if (q_len[b] < 0 || q_len[b] > q_rows || k_len[b] < 0 || k_len[b] > k_rows) {
      throw std::invalid_argument("attention layout: length exceeds block size");
    }
  }
}

Var attention(Var q, Var k, Var v, const AttentionLayout& layout, int heads) {
  layout.validate();
  const auto d = q.cols();
  if (heads <= 0 || d % heads != 0 || k.cols() != d || v.cols() != d) {
    throw std::invalid_argument("attention: model width must split evenly across heads");
  }
  if (q.rows() != static_cast<Eigen::Index>(layout.batch) * layout.q_rows ||
      k.rows() != static_cast<Eigen::Index>(layout.batch) * layout.k_rows || v.rows() != k.rows()) {
    throw std::invalid_argument("attention: row counts do not match layout");
  }
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(layout.batch * heads));
  Matrix out = Matrix::Zero(q.rows(), d);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  for (int b = 0; b < layout.batch; ++b) {
    const int nq = layout.q_len[b];
    const int nk = layout.k_len[b];
    if (nq == 0 || nk == 0) continue;
    const Eigen::Index q0 = static_cast<Eigen::Index>(b) * layout.q_rows;
    const Eigen::Index k0 = static_cast<Eigen::Index>(b) * layout.k_rows;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Matrix s = scale * qv.block(q0, c0, nq, dh) * kv.block(k0, c0, nk, dh).transpose();
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      out.block(q0, c0, nq, dh).noalias() = s * vv.block(k0, c0, nk, dh);
      (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }

  auto lay = std::make_shared<AttentionLayout>(layout);
  return q.tape().record(std::move(out), {q, k, v}, [q, k, v, lay, probs, heads, dh, scale](const Matrix& g) {
    auto& t = q.tape();
    const bool gq = q.requires_grad(), gk = k.requires_grad(), gv = v.requires_grad();
    Matrix* dq = gq ? &t.grad(q) : nullptr;
    Matrix* dk = gk ? &t.grad(k) : nullptr;
    Matrix* dv = gv ? &t.grad(v) : nullptr;
    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    for (int b = 0; b < lay->batch; ++b) {
      const int nq = lay->q_len[b];
      const int nk = lay->k_len[b];
      if (nq == 0 || nk == 0) continue;
      const Eigen::Index q0 = static_cast<Eigen::Index>(b) * lay->q_rows;
      const Eigen::Index k0 = static_cast<Eigen::Index>(b) * lay->k_rows;
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dh;
        const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
        const auto go = g.block(q0, c0, nq, dh);
        if (dv) dv->block(k0, c0, nk, dh).noalias() += p.transpose() * go;
        if (!dq && !dk) continue;
        const Matrix dp = go * vv.block(k0, c0, nk, dh).transpose();
        Matrix ds = p.cwiseProduct(dp);
        const Vector row_dot = ds.rowwise().sum();
        ds -= row_dot.asDiagonal() * p;
        ds *= scale;
        if (dq) dq->block(q0, c0, nq, dh).noalias() += ds * kv.block(k0, c0, nk, dh);
        if (dk) dk->block(k0, c0, nk, dh).noalias() += ds.transpose() * qv.block(q0, c0, nq, dh);
      }
    }
  });
}

}  // namespace gserec::nn
