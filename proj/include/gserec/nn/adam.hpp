#pragma once

#include <vector>

#include "gserec/nn/tape.hpp"

namespace gserec::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);

  /// Applies one update from the accumulated gradients.
  void step();
  void zero_grad();
  long steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  AdamOptions options_;
  long steps_ = 0;
};

}  // namespace gserec::nn
