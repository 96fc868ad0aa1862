// SPDX-License-Identifier: Apache-2.0
#include "sapd/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sapd {

std::vector<double> central_difference(std::span<float> point, float step,
                                       const std::function<double()>& objective) {
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const float saved = point[i];
    point[i] = saved + step;
    const float up = point[i];
    const double f_up = objective();
    point[i] = saved - step;
    const float down = point[i];
    const double f_down = objective();
    point[i] = saved;
    // Divide by the perturbation actually representable in float.
    grad[i] = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
  }
  return grad;
}

std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double step) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double f_up = f(probe);
    probe[i] = x[i] - step;
    const double f_down = f(probe);
    probe[i] = x[i];
    grad[i] = (f_up - f_down) / (2.0 * step);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale < floor ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

}  // namespace sapd
