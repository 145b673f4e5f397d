#include "gserec/nn/tape.hpp"

#include <stdexcept>

namespace gserec::nn {

Parameter& ParameterSet::add(std::string name, Matrix init) {
  for (const auto& p : params_) {
    if (p->name == name) throw std::logic_error("duplicate parameter name: " + name);
  }
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return *params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

double ParameterSet::squared_norm() const {
  double total = 0.0;
  for (const auto& p : params_) total += p->value.squaredNorm();
  return total;
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

const Matrix& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Matrix& Tape::value(int id) const {
  const auto& node = nodes_[static_cast<std::size_t>(id)];
  return node.external ? *node.external : node.value;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Parameter& p) {
  Node node;
  node.external = &p.value;
  node.param = grad_enabled_ ? &p : nullptr;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(const Parameter& p) {
  Node node;
  node.external = &p.value;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in.tape_ != this) throw std::logic_error("tape: input recorded on another tape");
      needs = needs || in.requires_grad();
    }
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Tape::grad(Var v) {
  auto& node = nodes_[static_cast<std::size_t>(v.id_)];
  if (node.grad.size() == 0) {
    const auto& val = value(v.id_);
    node.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return node.grad;
}

void Tape::backward(Var root) {
  if (!grad_enabled_) throw std::logic_error("tape: backward on a value-only tape");
  if (root.rows() != 1 || root.cols() != 1) throw std::logic_error("tape: backward root must be scalar");
  if (!root.requires_grad()) return;
  grad(root)(0, 0) += 1.0;
  for (int id = root.id_; id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(node.grad);
    if (node.param) node.param->grad += node.grad;
  }
}

}  // namespace gserec::nn
