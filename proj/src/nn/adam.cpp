#include "gserec/nn/adam.hpp"

#include <cmath>

namespace gserec::nn {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    first_[i] = b1 * first_[i] + (1.0 - b1) * p.grad;
    second_[i] = b2 * second_[i] + (1.0 - b2) * p.grad.cwiseAbs2();
    p.value.array() -= options_.learning_rate * (first_[i].array() / c1) /
                       ((second_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->grad.setZero();
}

}  // namespace gserec::nn
