#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gserec {

/// Row-major so that row gathers and per-example blocks are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

}  // namespace gserec
