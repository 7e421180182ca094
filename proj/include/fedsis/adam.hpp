#pragma once

#include <string>
#include <vector>

#include "fedsis/tensor.hpp"

namespace fedsis {

// A named trainable tensor. `decay` marks participation in weight decay;
// biases, norm scales/shifts and embeddings opt out.
struct Param {
  std::string name;
  Tensor value;
  bool decay = true;

  Param() = default;
  Param(std::string n, Tensor v, bool use_decay = true)
      : name(std::move(n)), value(std::move(v)), decay(use_decay) {
    value.set_requires_grad(true);
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: added to the gradient
};

// Adam with bias correction over a fixed set of parameters. One instance per
// independently-scheduled parameter group (each encoder block gets its own,
// so skipped rounds freeze its moments and step count entirely).
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, std::vector<Param*> params, Precision precision);

  // Consumes the gradients stored on the bound parameters and clears them.
  // Throws if any gradient is missing or non-finite.
  void step();

  std::size_t step_count() const { return t_; }
  void reset_moments();
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Param*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
  Precision precision_ = Precision::F64;
};

}  // namespace fedsis
