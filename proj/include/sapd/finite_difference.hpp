// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace sapd {

/// Central-difference gradient of a scalar function over a float buffer.
/// Each coordinate of `point` is perturbed in place by +/- step and restored;
/// `objective` reads the current contents of the buffer.
std::vector<double> central_difference(std::span<float> point, float step,
                                       const std::function<double()>& objective);

/// Central-difference gradient of f at x, in double precision.
std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double step);

/// ||a - b|| / max(||a||, ||b||), or the absolute difference norm when both
/// norms fall below `floor`.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8);

}  // namespace sapd
