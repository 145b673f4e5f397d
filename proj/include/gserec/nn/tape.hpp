#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gserec/util/matrix.hpp"

namespace gserec::nn {

/// A learnable tensor. Gradients accumulate into `grad` across backward passes
/// until cleared.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
};

/// Owns parameters at stable addresses, in registration order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }

  void zero_grad();
  double squared_norm() const;
  std::size_t num_scalars() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording of one forward pass.
///
/// Nodes are appended in evaluation order, so a reverse sweep visits every
/// consumer before its inputs. A tape built with `grad_enabled = false`
/// records values only.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  /// Leaf that reads the parameter in place; backward adds into p.grad.
  Var leaf(Parameter& p);
  /// Read-only view of a parameter (no gradient flows back).
  Var leaf(const Parameter& p);

  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Matrix& grad(Var v);

  /// Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

}  // namespace gserec::nn
