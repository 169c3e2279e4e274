#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "dtr/environment.hpp"

namespace dtr::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Vector scalar(double x) { return Vector::Constant(1, x); }

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Instance with noiseless rewards and point-mass transitions at 0.
inline ProblemInstance noiseless_1d() {
  ProblemInstance inst = ProblemInstance::synthetic_1d();
  inst.eta_sigma = 0.0;
  const FiniteSupport zero{{Vector::Zero(1)}, {1.0}};
  inst.eps = {zero, zero};
  return inst;
}

}  // namespace dtr::testing
