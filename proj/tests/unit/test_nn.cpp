#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gserec/nn/adam.hpp"
#include "gserec/nn/attention.hpp"
#include "gserec/nn/contrastive.hpp"
#include "gserec/nn/modules.hpp"
#include "gserec/nn/ops.hpp"
#include "support/gradcheck.hpp"

using namespace gserec;
using namespace gserec::nn;

namespace {

// Runs forward+backward once to fill gradients, then compares with central
// differences of the same forward.
double check(ParameterSet& params, const std::function<Var(Tape&)>& build) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(build(tape));
  }
  auto objective = [&] {
    Tape tape(false);
    return build(tape).value()(0, 0);
  };
  const auto r = testing::finite_difference_check(params.all(), objective);
  INFO("worst parameter: " << r.worst_param);
  return r.worst_relative_error;
}

// Hand-rolled log-sum-exp InfoNCE used as an independent oracle.
double info_nce_oracle(const Matrix& a, const Matrix& b, double tau) {
  const auto n = a.rows();
  auto cosine = [](const RowVector& x, const RowVector& y) { return x.dot(y) / (x.norm() * y.norm()); };
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      row += std::exp(cosine(a.row(i), b.row(j)) / tau);
      col += std::exp(cosine(a.row(j), b.row(i)) / tau);
    }
    const double pos = cosine(a.row(i), b.row(i)) / tau;
    total += -(pos - std::log(row)) - (pos - std::log(col));
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
  util::Rng rng(3);
  ParameterSet params;
  auto& a = params.add("a", normal_init(4, 3, 1.0, rng));
  auto& b = params.add("b", normal_init(3, 5, 1.0, rng));
  auto& c = params.add("c", normal_init(4, 5, 1.0, rng));
  auto& row = params.add("row", normal_init(1, 5, 1.0, rng));
  auto& s = params.add("s", Matrix::Constant(1, 1, 0.7));
  const double err = check(params, [&](Tape& t) {
    Var x = matmul(t.leaf(a), t.leaf(b));
    x = add_row(x, t.leaf(row));
    x = hadamard(sigmoid(x), t.leaf(c));
    x = sub(x, scale(relu(t.leaf(c)), 0.3));
    x = divide(x, t.leaf(s));
    Var y = matmul_nt(x, t.leaf(c));
    return add(sum_squares(y), sum(x));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("structural ops match finite differences") {
  util::Rng rng(5);
  ParameterSet params;
  auto& a = params.add("a", normal_init(3, 4, 1.0, rng));
  auto& b = params.add("b", normal_init(2, 4, 1.0, rng));
  auto& gain = params.add("gain", normal_init(1, 4, 1.0, rng));
  auto& bias = params.add("bias", normal_init(1, 4, 1.0, rng));
  auto mask = std::make_shared<Vector>(Vector::Ones(5));
  (*mask)[3] = 0.0;
  std::vector<Triplet> trip = {{0, 1, 0.5}, {0, 4, 0.5}, {1, 2, 1.0}, {2, 0, 0.25}, {2, 3, 0.75}};
  auto sp = std::make_shared<SparseMatrix>(3, 5);
  sp->setFromTriplets(trip.begin(), trip.end());
  const double err = check(params, [&](Tape& t) {
    std::vector<Var> rows = {t.leaf(a), t.leaf(b)};
    Var x = concat_rows(rows);
    x = mask_rows(x, mask);
    x = layer_norm(x, t.leaf(gain), t.leaf(bias));
    Var y = sparse_matmul(sp, x);
    std::vector<Var> cols = {y, slice_rows(x, 1, 3)};
    Var z = concat_cols(cols);
    z = l2_normalize_rows(z);
    return sum_squares(hadamard(z, z));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("attention gradients match finite differences with padding and heads") {
  util::Rng rng(11);
  ParameterSet params;
  auto& q = params.add("q", normal_init(6, 4, 1.0, rng));
  auto& k = params.add("k", normal_init(8, 4, 1.0, rng));
  auto& v = params.add("v", normal_init(8, 4, 1.0, rng));
  AttentionLayout layout{2, 3, 4, {3, 2}, {4, 1}};
  const double err = check(params, [&](Tape& t) {
    return sum_squares(attention(t.leaf(q), t.leaf(k), t.leaf(v), layout, 2));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("attention matches manual softmax arithmetic") {
  Tape tape(false);
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1.0, 0.0;
  k << 1.0, 0.0, 0.0, 1.0;
  v << 2.0, 0.0, 0.0, 4.0;
  AttentionLayout layout{1, 1, 2, {1}, {2}};
  const auto out = attention(tape.constant(q), tape.constant(k), tape.constant(v), layout, 1).value();
  const double s = 1.0 / std::sqrt(2.0);
  const double w0 = std::exp(s) / (std::exp(s) + 1.0);
  CHECK(out(0, 0) == doctest::Approx(2.0 * w0).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(4.0 * (1.0 - w0)).epsilon(1e-12));
}

TEST_CASE("attention zeroes padded queries and key-less blocks") {
  Tape tape(false);
  util::Rng rng(2);
  AttentionLayout layout{2, 2, 2, {1, 2}, {2, 0}};
  const auto out = attention(tape.constant(normal_init(4, 2, 1.0, rng)), tape.constant(normal_init(4, 2, 1.0, rng)),
                             tape.constant(normal_init(4, 2, 1.0, rng)), layout, 1)
                       .value();
  CHECK(out.row(1).isZero());
  CHECK(out.row(2).isZero());
  CHECK(out.row(3).isZero());
}

TEST_CASE("InfoNCE analytic values") {
  SUBCASE("batch of one is exactly zero") {
    Matrix a(1, 3), b(1, 3);
    a << 1.0, 2.0, 3.0;
    b << -1.0, 0.5, 2.0;
    CHECK(symmetric_info_nce(a, b, 0.1) == 0.0);
  }
  SUBCASE("identical pair of rows gives 2 log 2") {
    Matrix a = Matrix::Constant(2, 3, 0.4);
    CHECK(std::abs(symmetric_info_nce(a, a, 0.1) - 2.0 * std::log(2.0)) < 1e-6);
  }
  SUBCASE("random batch of three matches the oracle") {
    util::Rng rng(17);
    Matrix a = normal_init(3, 5, 1.0, rng);
    Matrix b = normal_init(3, 5, 1.0, rng);
    CHECK(std::abs(symmetric_info_nce(a, b, 0.37) - info_nce_oracle(a, b, 0.37)) < 1e-6);
  }
  SUBCASE("symmetric in its arguments and non-negative") {
    util::Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      Matrix a = normal_init(5, 4, 1.0, rng);
      Matrix b = normal_init(5, 4, 1.0, rng);
      const double ab = symmetric_info_nce(a, b, 0.2);
      CHECK(ab >= 0.0);
      CHECK(std::abs(ab - symmetric_info_nce(b, a, 0.2)) < 1e-12);
    }
  }
  SUBCASE("zero rows stay finite") {
    Matrix a = Matrix::Zero(3, 4);
    Matrix b = Matrix::Ones(3, 4);
    CHECK(std::isfinite(symmetric_info_nce(a, b, 0.1)));
  }
}

TEST_CASE("InfoNCE gradient including temperature") {
  util::Rng rng(9);
  ParameterSet params;
  auto& a = params.add("a", normal_init(4, 3, 1.0, rng));
  auto& b = params.add("b", normal_init(4, 3, 1.0, rng));
  auto& tau = params.add("tau", Matrix::Constant(1, 1, 0.3));
  CHECK(check(params, [&](Tape& t) { return symmetric_info_nce(t.leaf(a), t.leaf(b), t.leaf(tau)); }) < 1e-6);
}

TEST_CASE("binary cross-entropy values") {
  Tape tape(false);
  auto labels = std::make_shared<Vector>(Vector(2));
  *labels << 1.0, 0.0;
  Matrix half = Matrix::Constant(2, 1, 0.5);
  CHECK(binary_cross_entropy(tape.constant(half), labels).value()(0, 0) == doctest::Approx(std::log(2.0)));
  Matrix perfect(2, 1);
  perfect << 1.0, 0.0;
  CHECK(binary_cross_entropy(tape.constant(perfect), labels).value()(0, 0) < 1e-6);
}

TEST_CASE("Adam decreases a convex quadratic") {
  ParameterSet params;
  auto& x = params.add("x", Matrix::Constant(1, 2, 3.0));
  Adam opt(params.all(), {.learning_rate = 0.1});
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    Tape tape;
    tape.backward(sum_squares(tape.leaf(x)));
    opt.step();
  }
  CHECK(x.value.norm() < 0.1);
}

TEST_CASE("temperature clamp") {
  ParameterSet params;
  auto& tau = params.add("tau", Matrix::Constant(1, 1, 5.0));
  clamp_temperature(tau);
  CHECK(tau.value(0, 0) == kMaxTemperature);
  tau.value(0, 0) = -1.0;
  clamp_temperature(tau);
  CHECK(tau.value(0, 0) == kMinTemperature);
}
