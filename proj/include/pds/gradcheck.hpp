#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pds/tensor.hpp"

namespace pds {

// One flat block of values to perturb, with its analytic gradient.
struct GradTarget {
  std::string name;
  double* values = nullptr;
  const double* analytic = nullptr;
  int64_t n = 0;

  static GradTarget of(Parameter& p) {
    return {p.name, p.value.data(), p.value.grad().data(), p.numel()};
  }
  static GradTarget of_input(const std::string& name, Tensor& t) {
    return {name, t.data(), t.grad().data(), t.numel()};
  }
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst_name;
  int64_t worst_index = -1;
  int64_t checked = 0;
  bool numeric_failure = false;  // loss went non-finite during probing
  std::string message;
};

// Central-difference check of analytic gradients against the loss closure.
// Relative error uses |a - n| / max(|a| + |n|, 1e-3) so near-zero gradients
// do not drown in finite-difference roundoff. A non-finite loss is reported,
// not thrown.
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::vector<GradTarget>& targets, double step = 1e-5,
                           double tol = 1e-4);

}  // namespace pds
