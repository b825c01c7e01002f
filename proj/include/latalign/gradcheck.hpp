#pragma once

#include <functional>

#include "latalign/tensor.hpp"

namespace latalign {

/// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h per
/// coordinate. Independent of the tape's backward rules by construction;
/// every gradient claim in the test suites is checked against this.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

/// |a - b| / max(1, |a|, |b|)
double rel_err(double a, double b);

/// Max of rel_err over coordinates; shapes must match.
double max_rel_err(const Tensor& a, const Tensor& b);

}  // namespace latalign
