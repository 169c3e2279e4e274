#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "dtr/schedule.hpp"

using namespace dtr;

namespace {

// Membership by explicit enumeration of the block formula.
std::map<long, int> enumerate(int q, int k, long tmax) {
  std::map<long, int> owner;
  for (long n = 0;; ++n) {
    const long base = ((1L << n) - 1) * k * q;
    if (base >= tmax) break;
    for (int a = 1; a <= k; ++a)
      for (int j = q * (a - 1) + 1; j <= q * a; ++j) owner[base + j] = a;
  }
  return owner;
}

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("two-arm q=1 enumeration") {
    const auto s = ForcedSchedule::two_arm(1);
    CHECK(s.arm_at(1) == 1);
    CHECK(s.arm_at(2) == 2);
    CHECK(s.arm_at(3) == 1);
    CHECK(s.arm_at(4) == 2);
    CHECK_FALSE(s.arm_at(5).has_value());
    CHECK(s.arm_at(7) == 1);
    CHECK(s.arm_at(8) == 2);
    CHECK(s.arm_at(15) == 1);
  }

  TEST_CASE("k-arm q=1 k=3 enumeration") {
    const auto s = ForcedSchedule::k_arm(1, 3);
    CHECK(s.arm_at(2) == 2);
    CHECK(s.arm_at(5) == 2);
    CHECK(s.arm_at(11) == 2);
    CHECK_FALSE(s.arm_at(7).has_value());
  }

  TEST_CASE("two-arm q=2 enumeration") {
    const auto s = ForcedSchedule::two_arm(2);
    for (long t : {1, 2, 5, 6}) CHECK(s.arm_at(t) == 1);
    for (long t : {3, 4, 7, 8}) CHECK(s.arm_at(t) == 2);
    CHECK_FALSE(s.arm_at(9).has_value());
  }

  TEST_CASE("counts") {
    CHECK(ForcedSchedule::two_arm(1).count(1, 10) == 3);
    CHECK(ForcedSchedule::two_arm(2).count(2, 8) == 4);
    CHECK(ForcedSchedule::two_arm(3).count(1, 0) == 0);
    CHECK(ForcedSchedule::k_arm(4, 5).count(5, 0) == 0);
  }

  TEST_CASE("arithmetic membership equals enumeration") {
    for (int q : {1, 2, 3, 7}) {
      for (int k : {2, 3, 4}) {
        const auto s = ForcedSchedule::k_arm(q, k);
        const long tmax = 20000;
        const auto owner = enumerate(q, k, tmax);
        for (long t = 1; t <= tmax; ++t) {
          const auto it = owner.find(t);
          const auto got = s.arm_at(t);
          if (it == owner.end())
            CHECK_FALSE(got.has_value());
          else
            CHECK(got == it->second);
        }
      }
    }
  }

  TEST_CASE("two-arm and k-arm with k=2 coincide") {
    for (int q : {1, 3, 20}) {
      const auto a = ForcedSchedule::two_arm(q);
      const auto b = ForcedSchedule::k_arm(q, 2);
      for (long t = 1; t <= 50000; ++t) REQUIRE(a.arm_at(t) == b.arm_at(t));
    }
  }

  TEST_CASE("count increments exactly on owned rounds") {
    for (int q : {1, 2, 5}) {
      for (int k : {2, 3}) {
        const auto s = ForcedSchedule::k_arm(q, k);
        std::vector<long> running(k + 1, 0);
        for (long t = 1; t <= 30000; ++t) {
          const auto a = s.arm_at(t);
          if (a) ++running[*a];
          for (int slot = 1; slot <= k; ++slot) REQUIRE(s.count(slot, t) == running[slot]);
        }
      }
    }
  }

  TEST_CASE("forced counts stay within logarithmic bounds") {
    for (int q : {1, 2, 3, 5}) {
      const auto s = ForcedSchedule::two_arm(q);
      for (long t = 4L * q * q; t <= 100000; ++t) {
        const double lt = std::log(static_cast<double>(t));
        for (int a = 1; a <= 2; ++a) {
          const long c = s.count(a, t);
          REQUIRE(static_cast<double>(c) >= 0.5 * q * lt);
          REQUIRE(static_cast<double>(c) <= 6.0 * q * lt);
        }
      }
    }
  }

  TEST_CASE("slot to arm wraps with one-based arms") {
    CHECK(slot_to_stage_arm(1, 2) == 1);
    CHECK(slot_to_stage_arm(2, 2) == 2);
    CHECK(slot_to_stage_arm(3, 2) == 1);
    CHECK(slot_to_stage_arm(3, 3) == 3);
  }

  TEST_CASE("constructor preconditions") {
    CHECK_THROWS(ForcedSchedule::two_arm(0));
    CHECK_THROWS(ForcedSchedule::k_arm(1, 1));
    CHECK_THROWS(ForcedSchedule::two_arm(1).arm_at(0));
  }
}
