#pragma once

#include <cstddef>
#include <span>

namespace dtr::kernels {

// Inputs of the residual-average term of the stage-1 Q estimators
//
//   (1/n) sum_j max_c ( offset[c] + u_c . x2_j - w_c . x1_j )
//
// where, for second-stage arm c with coefficient b_c and transition estimate B,
// offset[c] = (B b_c)^T x, u_c = b_c and w_c = B b_c. A competitor with
// u_c = w_c = 0 carries a constant value (known-effect arms).
//
// x1, x2 hold n pairs laid out pair-major (n x d); u, w are candidates x d.
struct ResidualTerm {
  std::span<const double> x1;
  std::span<const double> x2;
  std::span<const double> offset;
  std::span<const double> u;
  std::span<const double> w;
  int d = 1;

  std::size_t pairs() const noexcept { return d > 0 ? x1.size() / static_cast<std::size_t>(d) : 0; }
  std::size_t candidates() const noexcept { return offset.size(); }
};

// Reference implementation: one pass, left-to-right summation.
double residual_max_mean_serial(const ResidualTerm& term);

// Fixed-size blocks reduced in block order, blocks spread over OpenMP threads
// when the pair count is large. The result depends only on the input, not on
// the thread count.
double residual_max_mean(const ResidualTerm& term);

inline constexpr std::size_t kResidualBlock = 4096;
inline constexpr std::size_t kResidualParallelThreshold = 1u << 15;

}  // namespace dtr::kernels
