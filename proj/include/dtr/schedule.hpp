#pragma once

#include <optional>

namespace dtr {

enum class ScheduleVariant { two_arm, k_arm };

// Deterministic forced-pull schedule. Slot a (1-based) owns the rounds
//
//   (2^n - 1) * k * q + j,   j = q(a-1)+1, ..., q a,   n = 0, 1, 2, ...
//
// which for k = 2 is the two-arm form (2^{n+1} - 2) q + j. Epoch n is a block
// of k*q consecutive rounds; blocks start at offsets 0, kq, 3kq, 7kq, ...
class ForcedSchedule {
 public:
  static ForcedSchedule two_arm(int q);
  static ForcedSchedule k_arm(int q, int k);

  // Slot forced at round t >= 1, or nullopt for a free round. O(1).
  std::optional<int> arm_at(long t) const;

  // |T_a ∩ [1, t]|. O(log t).
  long count(int a, long t) const;

  int q() const noexcept { return q_; }
  int slots() const noexcept { return k_; }
  ScheduleVariant variant() const noexcept { return variant_; }

 private:
  ForcedSchedule(int q, int k, ScheduleVariant v) : q_(q), k_(k), variant_(v) {}

  int q_;
  int k_;
  ScheduleVariant variant_;
};

// Stage arm pulled when slot a is forced and the stage has `arms` arms:
// ((a - 1) mod arms) + 1.
inline int slot_to_stage_arm(int slot, int arms) { return ((slot - 1) % arms) + 1; }

}  // namespace dtr
