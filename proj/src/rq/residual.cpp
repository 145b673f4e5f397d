#include "gserec/rq/residual.hpp"

#include <limits>
#include <stdexcept>

namespace gserec::rq {

int nearest_code(const Matrix& codebook, const RowVector& r) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < codebook.rows(); ++k) {
    const double d = (codebook.row(k) - r).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Quantization residual_quantize(const Matrix& z, std::span<const Matrix> codebooks) {
  if (codebooks.empty()) throw std::invalid_argument("residual_quantize: no codebooks");
  Quantization q;
  q.codes.assign(static_cast<std::size_t>(z.rows()), std::vector<int>(codebooks.size()));
  q.quantized = Matrix::Zero(z.rows(), z.cols());
  q.residuals.reserve(codebooks.size() + 1);
  q.residuals.push_back(z);
  for (std::size_t l = 0; l < codebooks.size(); ++l) {
    const Matrix& book = codebooks[l];
    if (book.cols() != z.cols()) throw std::invalid_argument("residual_quantize: codebook width mismatch");
    Matrix next = q.residuals.back();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const int k = nearest_code(book, q.residuals.back().row(i));
      q.codes[static_cast<std::size_t>(i)][l] = k;
      next.row(i) -= book.row(k);
      q.quantized.row(i) += book.row(k);
    }
    q.residuals.push_back(std::move(next));
  }
  return q;
}

}  // namespace gserec::rq
