#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "moltailor/tensor.h"

namespace moltailor {

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Central differences of scalar f at x against the tape gradient. Returns the
// largest relative error over the elements of x. x is not modified.
//
// Central differences carry rounding noise of about ulp(f)/eps (2e-11 for
// f near 1 at eps 1e-5), so where the true gradient is 0 the ratio against
// the default 1e-8 floor sits near 1e-3; raise `floor` in that regime.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5,
                  double floor = 1e-8);

// Same over every element of `params` (leaf tensors that require grad), with
// f closing over them. When max_checks > 0 only that many elements, chosen
// with `seed`, are differenced. Parameter values are restored afterwards.
double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps = 1e-5,
                         std::size_t max_checks = 0, std::uint64_t seed = 0, double floor = 1e-8);

}  // namespace moltailor
