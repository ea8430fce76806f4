#pragma once

#include "blex/numerics/tensor.hpp"

#include <functional>
#include <span>

namespace blex {

/// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over every
/// entry of `params`, using central differences with the given step.
///
/// `loss` must rebuild its graph on each call. It is evaluated twice up front
/// and NonDeterministicError is thrown if the two values are not identical.
double finite_difference_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                               double step = 1e-5);

}  // namespace blex
