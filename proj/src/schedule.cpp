#include "dtr/schedule.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "dtr/errors.hpp"

namespace dtr {

ForcedSchedule ForcedSchedule::two_arm(int q) {
  DTR_REQUIRE(q >= 1, "ForcedSchedule: q must be >= 1");
  return ForcedSchedule(q, 2, ScheduleVariant::two_arm);
}

ForcedSchedule ForcedSchedule::k_arm(int q, int k) {
  DTR_REQUIRE(q >= 1, "ForcedSchedule: q must be >= 1");
  DTR_REQUIRE(k >= 2, "ForcedSchedule: need at least 2 slots");
  return ForcedSchedule(q, k, ScheduleVariant::k_arm);
}

std::optional<int> ForcedSchedule::arm_at(long t) const {
  DTR_REQUIRE(t >= 1, "forced_arm_at: rounds are 1-based");
  // chunk c holds rounds c*q+1 .. (c+1)*q; epoch n spans chunks
  // (2^n - 1) k .. (2^n - 1) k + k - 1.
  const unsigned long chunk = static_cast<unsigned long>(t - 1) / static_cast<unsigned long>(q_);
  const unsigned long epoch_pos = chunk / static_cast<unsigned long>(k_);
  if (!std::has_single_bit(epoch_pos + 1)) return std::nullopt;
  return static_cast<int>(chunk % static_cast<unsigned long>(k_)) + 1;
}

long ForcedSchedule::count(int a, long t) const {
  DTR_REQUIRE(a >= 1 && a <= k_, "forced_count: slot " + std::to_string(a) + " out of range");
  if (t <= 0) return 0;
  const long kq = static_cast<long>(k_) * q_;
  long total = 0;
  for (long block = 1;; block *= 2) {
    const long first_before = (block - 1) * kq + static_cast<long>(q_) * (a - 1);
    if (first_before >= t) break;
    total += std::min<long>(t - first_before, q_);
  }
  return total;
}

}  // namespace dtr
