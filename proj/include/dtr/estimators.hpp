#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dtr/environment.hpp"
#include "dtr/linalg.hpp"
#include "dtr/schedule.hpp"

namespace dtr {

// Q estimate that may carry the "+infinity" sentinel used when the restricted
// residual set of an arm is still empty. Kept as a tag so comparisons never
// see a floating-point infinity.
struct QValue {
  double value = 0.0;
  bool infinite = false;

  static QValue finite(double v) { return {v, false}; }
  static QValue plus_infinity() { return {0.0, true}; }
};

// a strictly above b; two sentinels compare equal.
inline bool q_greater(const QValue& a, const QValue& b) {
  if (a.infinite) return !b.infinite;
  if (b.infinite) return false;
  return a.value > b.value;
}

// Stored (x1, x2) pairs, pair-major.
class PairStore {
 public:
  explicit PairStore(int d = 1) : d_(d) {}

  void push(const Vector& x1, const Vector& x2);
  std::size_t size() const noexcept { return x1_.size() / static_cast<std::size_t>(d_); }
  bool empty() const noexcept { return x1_.empty(); }
  int dim() const noexcept { return d_; }
  const std::vector<double>& x1() const noexcept { return x1_; }
  const std::vector<double>& x2() const noexcept { return x2_; }

 private:
  int d_;
  std::vector<double> x1_;
  std::vector<double> x2_;
};

// OLS state with a lazily refreshed solution.
class CachedOls {
 public:
  CachedOls() = default;
  CachedOls(Eigen::Index d, Eigen::Index k) : state_(d, k) {}

  void update(const Vector& x, const Vector& y) {
    state_.update(x, y);
    fresh_ = false;
  }
  void update(const Vector& x, double y) {
    state_.update(x, y);
    fresh_ = false;
  }
  const std::optional<Matrix>& solution() const;
  const linalg::OlsState& state() const noexcept { return state_; }

 private:
  linalg::OlsState state_;
  mutable std::optional<Matrix> solution_;
  mutable bool fresh_ = false;
};

struct BankOptions {
  int d = 1;
  int k1 = 2;
  int k2 = 2;
  // Forced schedule the bank checks record_forced / record_regular against.
  std::optional<ForcedSchedule> schedule;
  // Second-stage arm (1-based) whose reward is known to equal y1. It has no
  // estimated coefficients and enters every stage-2 max with the stage-1
  // reward estimate.
  std::optional<int> known_arm;
};

// Per-arm, per-stage forced-sample and all-sample OLS estimates together with
// the stored transition pairs behind the residual averages:
//   forced_pairs[a]      rounds in T_a(t)
//   restricted_pairs[a]  non-forced rounds pulled under a clear forced-sample
//                        Q margin (the restricted set)
//   all_pairs[a]         every round with A_1 = a
class EstimatorBank {
 public:
  explicit EstimatorBank(BankOptions options);

  // Forced round t for schedule slot `slot`. The record must carry the arms
  // the slot maps to.
  void record_forced(long t, int slot, const RoundRecord& record);
  // Non-forced round. stage1_gap_flag: the pulled arm beat every other arm by
  // more than h1/2 under the forced-sample Q estimate at decision time.
  void record_regular(long t, const RoundRecord& record, bool stage1_gap_flag);

  double q_tilde(int stage, const Vector& x, int a) const;
  QValue q_hat(int stage, const Vector& x, int a) const;
  double q_hat_greedy(const Vector& x, int a) const;

  // Solved parameters; throw EstimatorUnavailable.
  Vector beta_tilde(int stage, int a) const;
  Matrix b_tilde(int a) const;
  Vector beta_hat(int stage, int a) const;
  Matrix b_hat(int a) const;

  const PairStore& forced_pairs(int a) const { return forced_pairs_.at(a - 1); }
  const PairStore& restricted_pairs(int a) const { return restricted_pairs_.at(a - 1); }
  const PairStore& all_pairs(int a) const { return all_pairs_.at(a - 1); }

  // Stage arms pulled when schedule slot `slot` is forced. Stage-2 slots rotate
  // over the arms with unknown effect only.
  int forced_stage1_arm(int slot) const { return slot_to_stage_arm(slot, opts_.k1); }
  int forced_stage2_arm(int slot) const;
  // Second-stage arms that carry estimated coefficients.
  const std::vector<int>& estimated_stage2_arms() const noexcept { return estimated2_; }

  long round() const noexcept { return t_; }
  const BankOptions& options() const noexcept { return opts_; }
  bool is_known_arm(int a2) const noexcept { return opts_.known_arm && *opts_.known_arm == a2; }

  // Hash of every accumulated quantity; equal banks hash equal.
  std::uint64_t fingerprint() const;

 private:
  enum class Source { forced, all };

  void check_record(const RoundRecord& record) const;
  void update_all(const RoundRecord& record);
  double stage1_value(Source src, const PairStore& pairs, const Vector& x, int a) const;
  const Matrix& solved(const CachedOls& ols, const char* what) const;

  BankOptions opts_;
  long t_ = 0;
  // stage 1, one per first-stage arm: target [y1, x2^T], solution
  // [beta_{a,1} | B_a].
  std::vector<CachedOls> forced1_, all1_;
  // stage 2, one per second-stage arm: target y2.
  std::vector<CachedOls> forced2_, all2_;
  std::vector<PairStore> forced_pairs_, restricted_pairs_, all_pairs_;
  std::vector<int> estimated2_;
};

}  // namespace dtr
