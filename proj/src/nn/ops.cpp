#include "gserec/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gserec::nn {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("nn: shape mismatch in ") + what);
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul");
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a).noalias() += g * b.value().transpose();
    if (b.requires_grad()) t.grad(b).noalias() += a.value().transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt");
  Matrix out = a.value() * b.value().transpose();
  return a.tape().record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a).noalias() += g * b.value();
    if (b.requires_grad()) t.grad(b).noalias() += g.transpose() * a.value();
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Matrix out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a) += g;
    if (b.requires_grad()) t.grad(b) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Matrix out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a) += g;
    if (b.requires_grad()) t.grad(b) -= g;
  });
}

Var hadamard(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a) += g.cwiseProduct(b.value());
    if (b.requires_grad()) t.grad(b) += g.cwiseProduct(a.value());
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape().record(std::move(out), {a}, [a, s](const Matrix& g) {
    if (a.requires_grad()) a.tape().grad(a) += g * s;
  });
}

Var divide(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "divide");
  const double denom = s.value()(0, 0);
  Matrix out = a.value() / denom;
  return a.tape().record(std::move(out), {a, s}, [a, s, denom](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a) += g / denom;
    if (s.requires_grad()) {
      t.grad(s)(0, 0) -= g.cwiseProduct(a.value()).sum() / (denom * denom);
    }
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [a, row](const Matrix& g) {
    auto& t = a.tape();
    if (a.requires_grad()) t.grad(a) += g;
    if (row.requires_grad()) t.grad(row) += g.colwise().sum();
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape().record(std::move(out), {a}, [a](const Matrix& g) {
    if (!a.requires_grad()) return;
    a.tape().grad(a) += (a.value().array() > 0.0).select(g, 0.0).matrix();
  });
}

Var sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  auto self = std::make_shared<Matrix>(out);
  return a.tape().record(std::move(out), {a}, [a, self](const Matrix& g) {
    if (!a.requires_grad()) return;
    const auto& y = self->array();
    a.tape().grad(a) += (g.array() * y * (1.0 - y)).matrix();
  });
}

Var mask_rows(Var a, std::shared_ptr<const Vector> mask) {
  require(mask->size() == a.rows(), "mask_rows");
  Matrix out = mask->asDiagonal() * a.value();
  return a.tape().record(std::move(out), {a}, [a, mask](const Matrix& g) {
    if (a.requires_grad()) a.tape().grad(a) += mask->asDiagonal() * g;
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const auto& x = a.value();
  Vector norms(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) norms[i] = std::max(x.row(i).norm(), eps);
  Matrix out = norms.cwiseInverse().asDiagonal() * x;
  auto y = std::make_shared<Matrix>(out);
  auto clamped = std::make_shared<Vector>(norms);
  return a.tape().record(std::move(out), {a}, [a, y, clamped, eps](const Matrix& g) {
    if (!a.requires_grad()) return;
    auto& ga = a.tape().grad(a);
    const auto& x = a.value();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double n = (*clamped)[i];
      if (x.row(i).norm() > eps) {
        const double proj = y->row(i).dot(g.row(i));
        ga.row(i) += (g.row(i) - proj * y->row(i)) / n;
      } else {
        ga.row(i) += g.row(i) / n;
      }
    }
  });
}

Var sparse_matmul(std::shared_ptr<const SparseMatrix> s, Var x) {
  require(s->cols() == x.rows(), "sparse_matmul");
  Matrix out = (*s) * x.value();
  return x.tape().record(std::move(out), {x}, [s, x](const Matrix& g) {
    if (x.requires_grad()) x.tape().grad(x).noalias() += s->transpose() * g;
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols");
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [inputs](const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& p : inputs) {
      if (p.requires_grad()) p.tape().grad(p) += g.middleCols(off, p.cols());
      off += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows");
  const auto cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [inputs](const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& p : inputs) {
      if (p.requires_grad()) p.tape().grad(p) += g.middleRows(off, p.rows());
      off += p.rows();
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Matrix out = a.value().middleRows(start, count);
  return a.tape().record(std::move(out), {a}, [a, start, count](const Matrix& g) {
    if (a.requires_grad()) a.tape().grad(a).middleRows(start, count) += g;
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
          "layer_norm");
  const auto& in = x.value();
  const auto n = in.cols();
  auto normed = std::make_shared<Matrix>(in.rows(), n);
  auto inv_std = std::make_shared<Vector>(in.rows());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double mean = in.row(i).mean();
    const double var = (in.row(i).array() - mean).square().mean();
    (*inv_std)[i] = 1.0 / std::sqrt(var + eps);
    normed->row(i) = (in.row(i).array() - mean) * (*inv_std)[i];
  }
  Matrix out = (normed->array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  return x.tape().record(std::move(out), {x, gain, bias}, [x, gain, bias, normed, inv_std](const Matrix& g) {
    auto& t = x.tape();
    if (gain.requires_grad()) t.grad(gain) += g.cwiseProduct(*normed).colwise().sum();
    if (bias.requires_grad()) t.grad(bias) += g.colwise().sum();
    if (!x.requires_grad()) return;
    auto& gx = t.grad(x);
    const RowVector gamma = gain.value().row(0);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const RowVector dxhat = g.row(i).cwiseProduct(gamma);
      const double mean_d = dxhat.mean();
      const double mean_dx = dxhat.dot(normed->row(i)) / static_cast<double>(dxhat.size());
      gx.row(i) += (*inv_std)[i] * (dxhat.array() - mean_d - normed->row(i).array() * mean_dx).matrix();
    }
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](const Matrix& g) {
    if (a.requires_grad()) a.tape().grad(a).array() += g(0, 0);
  });
}

Var sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape().record(std::move(out), {a}, [a](const Matrix& g) {
    if (a.requires_grad()) a.tape().grad(a) += 2.0 * g(0, 0) * a.value();
  });
}

Var symmetric_diagonal_cross_entropy(Var logits) {
  const auto& s = logits.value();
  require(s.rows() == s.cols() && s.rows() > 0, "symmetric_diagonal_cross_entropy");
  const auto b = s.rows();
  // Row-wise and column-wise softmax, kept for backward.
  auto row_soft = std::make_shared<Matrix>(b, b);
  auto col_soft = std::make_shared<Matrix>(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double rmax = s.row(i).maxCoeff();
    const RowVector re = (s.row(i).array() - rmax).exp().matrix();
    const double rsum = re.sum();
    row_soft->row(i) = re / rsum;
    total += rmax + std::log(rsum) - s(i, i);

    const double cmax = s.col(i).maxCoeff();
    const Vector ce = (s.col(i).array() - cmax).exp().matrix();
    const double csum = ce.sum();
    col_soft->col(i) = ce / csum;
    total += cmax + std::log(csum) - s(i, i);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(b);
  return logits.tape().record(std::move(out), {logits}, [logits, row_soft, col_soft](const Matrix& g) {
    if (!logits.requires_grad()) return;
    const auto b = row_soft->rows();
    const double w = g(0, 0) / static_cast<double>(b);
    Matrix d = *row_soft + *col_soft;
    d.diagonal().array() -= 2.0;
    logits.tape().grad(logits) += w * d;
  });
}

Var binary_cross_entropy(Var prob, std::shared_ptr<const Vector> labels, double eps) {
  require(prob.cols() == 1 && prob.rows() == labels->size() && prob.rows() > 0, "binary_cross_entropy");
  const auto& p = prob.value();
  const double n = static_cast<double>(p.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double pc = std::clamp(p(i, 0), eps, 1.0 - eps);
    const double y = (*labels)[i];
    total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return prob.tape().record(std::move(out), {prob}, [prob, labels, eps, n](const Matrix& g) {
    if (!prob.requires_grad()) return;
    auto& gp = prob.tape().grad(prob);
    const auto& p = prob.value();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pi = p(i, 0);
      if (pi <= eps || pi >= 1.0 - eps) continue;
      const double y = (*labels)[i];
      gp(i, 0) += g(0, 0) * (-y / pi + (1.0 - y) / (1.0 - pi)) / n;
    }
  });
}

Var straight_through(Var z, Matrix quantized) {
  require(quantized.rows() == z.rows() && quantized.cols() == z.cols(), "straight_through");
  return z.tape().record(std::move(quantized), {z}, [z](const Matrix& g) {
    if (z.requires_grad()) z.tape().grad(z) += g;
  });
}

std::shared_ptr<const SparseMatrix> one_hot_rows(std::span<const int> indices, Eigen::Index num_cols) {
  auto s = std::make_shared<SparseMatrix>(static_cast<Eigen::Index>(indices.size()), num_cols);
  std::vector<Triplet> triplets;
  triplets.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= num_cols) throw std::out_of_range("one_hot_rows: index out of range");
    triplets.emplace_back(static_cast<int>(i), indices[i], 1.0);
  }
  s->setFromTriplets(triplets.begin(), triplets.end());
  return s;
}

}  // namespace gserec::nn
