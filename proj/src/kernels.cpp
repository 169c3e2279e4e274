#include "dtr/kernels.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "dtr/errors.hpp"

namespace dtr::kernels {

namespace {

void check(const ResidualTerm& term) {
  DTR_REQUIRE(term.d >= 1, "residual kernel: d must be positive");
  DTR_REQUIRE(term.x1.size() == term.x2.size(), "residual kernel: x1/x2 length mismatch");
  DTR_REQUIRE(term.x1.size() % static_cast<std::size_t>(term.d) == 0,
              "residual kernel: pair storage not a multiple of d");
  const std::size_t k = term.candidates();
  DTR_REQUIRE(k >= 1, "residual kernel: no candidates");
  DTR_REQUIRE(term.u.size() == k * term.d && term.w.size() == k * term.d,
              "residual kernel: coefficient shape mismatch");
  DTR_REQUIRE(term.pairs() >= 1, "residual kernel: no pairs");
}

double pair_value(const ResidualTerm& term, std::size_t j) {
  const int d = term.d;
  const double* a = term.x1.data() + j * d;
  const double* b = term.x2.data() + j * d;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < term.candidates(); ++c) {
    double v = term.offset[c];
    const double* u = term.u.data() + c * d;
    const double* w = term.w.data() + c * d;
    for (int i = 0; i < d; ++i) v += u[i] * b[i] - w[i] * a[i];
    best = std::max(best, v);
  }
  return best;
}

// Sum over [begin, end) of the pair values. Two-candidate d = 1 is the hot
// case in simulation and gets a vectorisable loop.
double block_sum(const ResidualTerm& term, std::size_t begin, std::size_t end) {
  if (term.d == 1 && term.candidates() == 2) {
    const double o0 = term.offset[0], o1 = term.offset[1];
    const double u0 = term.u[0], u1 = term.u[1];
    const double w0 = term.w[0], w1 = term.w[1];
    const double* a = term.x1.data();
    const double* b = term.x2.data();
    double sum = 0.0;
#pragma omp simd reduction(+ : sum)
    for (std::size_t j = begin; j < end; ++j) {
      const double v0 = o0 + u0 * b[j] - w0 * a[j];
      const double v1 = o1 + u1 * b[j] - w1 * a[j];
      sum += v0 > v1 ? v0 : v1;
    }
    return sum;
  }
  double sum = 0.0;
  for (std::size_t j = begin; j < end; ++j) sum += pair_value(term, j);
  return sum;
}

}  // namespace

double residual_max_mean_serial(const ResidualTerm& term) {
  check(term);
  const std::size_t n = term.pairs();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += pair_value(term, j);
  return sum / static_cast<double>(n);
}

double residual_max_mean(const ResidualTerm& term) {
  check(term);
  const std::size_t n = term.pairs();
  const std::size_t blocks = (n + kResidualBlock - 1) / kResidualBlock;
  if (blocks == 1) return block_sum(term, 0, n) / static_cast<double>(n);

  std::vector<double> partial(blocks);
  const long nblocks = static_cast<long>(blocks);
#pragma omp parallel for schedule(static) if (n >= kResidualParallelThreshold)
  for (long b = 0; b < nblocks; ++b) {
    const std::size_t begin = static_cast<std::size_t>(b) * kResidualBlock;
    partial[b] = block_sum(term, begin, std::min(n, begin + kResidualBlock));
  }
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum / static_cast<double>(n);
}

}  // namespace dtr::kernels
