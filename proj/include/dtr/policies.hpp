#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtr/environment.hpp"
#include "dtr/estimators.hpp"
#include "dtr/schedule.hpp"

namespace dtr {

enum class PolicyVariant {
  dtr_bandit,
  k_armed_dtr,
  greedy,
  static_ols,
  recourse,
  oracle,
  uniform_random,
};

std::string to_string(PolicyVariant v);
PolicyVariant parse_policy_variant(const std::string& s);

struct PolicyConfig {
  std::string name;
  PolicyVariant variant = PolicyVariant::dtr_bandit;
  int q = 20;
  double h1 = 0.5;
  double h2 = 0.5;
  // DTR variants average residuals over every stage-1 pull of the arm
  // instead of the restricted set.
  bool use_greedy_qhat = true;
  // Second-stage arm whose reward is pinned to y1 and never explored.
  std::optional<int> known_arm;
  int d = 1;
  int k1 = 2;
  int k2 = 2;

  // Throws ConfigError with `field` as prefix.
  void validate(const std::string& field = "policy") const;
};

// Reads {name?, variant, q, h1, h2, use_greedy_qhat, known_arm}. Shape fields
// come from the instance or dataset and are filled in by the caller.
PolicyConfig policy_config_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json policy_config_to_json(const PolicyConfig& c);

// Which rule produced the last decision of a stage.
enum class Branch { none, forced, tilde, hat, fallback, fixed };

// Two-stage decision maker. A round is choose_stage1 -> choose_stage2 ->
// finish_round. Calling choose_stage1 again without finishing discards the
// pending round and leaves the learned state untouched.
class Policy {
 public:
  virtual ~Policy() = default;

  int choose_stage1(const Vector& x1);
  int choose_stage2(double y1, const Vector& x2);
  void finish_round(const RoundRecord& record);

  // Completed rounds.
  long round() const noexcept { return t_; }
  Branch last_branch(int stage) const { return stage == 1 ? branch1_ : branch2_; }
  // Hash of the learned state (not of pending choices or RNG position).
  virtual std::uint64_t fingerprint() const;
  virtual std::string name() const = 0;

 protected:
  struct Choice {
    int arm;
    Branch branch;
  };
  virtual Choice decide_stage1(long t, const Vector& x1) = 0;
  virtual Choice decide_stage2(long t, double y1, const Vector& x2) = 0;
  virtual void learn(long t, const RoundRecord& record) = 0;

  int pending_a1() const noexcept { return pending_a1_; }
  const Vector& pending_x1() const noexcept { return pending_x1_; }

 private:
  long t_ = 0;
  int pending_a1_ = 0;
  int pending_a2_ = 0;
  Vector pending_x1_;
  Branch branch1_ = Branch::none;
  Branch branch2_ = Branch::none;
};

// ---- decision rules, exposed for direct testing ----

// Two-arm rule: if |tilde[0] - tilde[1]| > h/2 take argmax tilde, otherwise
// argmax hat. Ties go to arm 1.
struct RuleOutcome {
  int arm;           // 1-based
  bool used_tilde;   // decided by the forced-sample estimate alone
};
RuleOutcome two_arm_rule(std::span<const double> tilde, std::span<const QValue> hat, double h);

// Keep {a : max tilde - tilde[a] <= h/2}, then argmax hat within the kept set
// (lowest index on ties). used_tilde is true when one arm survives.
RuleOutcome filter_then_argmax(std::span<const double> tilde, std::span<const QValue> hat,
                               double h);
std::vector<int> margin_filter(std::span<const double> tilde, double h);

// Composite arm index (1-based) for (a1, a2): (a1 - 1) k2 + a2, and back.
inline int encode_composite(int a1, int a2, int k2) { return (a1 - 1) * k2 + a2; }
inline std::pair<int, int> decode_composite(int c, int k2) {
  return {(c - 1) / k2 + 1, (c - 1) % k2 + 1};
}

// ---- concrete policies ----

// DTRBandit (two-arm rule) and its K-armed variant (filter-then-argmax).
class DtrBanditPolicy final : public Policy {
 public:
  explicit DtrBanditPolicy(const PolicyConfig& config);

  std::string name() const override { return config_.name; }
  std::uint64_t fingerprint() const override;
  const EstimatorBank& bank() const noexcept { return bank_; }
  const ForcedSchedule& schedule() const noexcept { return schedule_; }
  bool last_gap_flag() const noexcept { return gap_flag_; }

 protected:
  Choice decide_stage1(long t, const Vector& x1) override;
  Choice decide_stage2(long t, double y1, const Vector& x2) override;
  void learn(long t, const RoundRecord& record) override;

 private:
  RuleOutcome apply_rule(std::span<const double> tilde, std::span<const QValue> hat, double h) const;

  PolicyConfig config_;
  ForcedSchedule schedule_;
  EstimatorBank bank_;
  std::optional<int> forced_slot_;
  bool gap_flag_ = false;
};

// Greedy: d rounds of each forced pair (1,1), (2,2), ... then argmax of the
// all-sample estimates in both stages.
class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(const PolicyConfig& config);

  std::string name() const override { return config_.name; }
  std::uint64_t fingerprint() const override;
  const EstimatorBank& bank() const noexcept { return bank_; }
  // Rounds spent on initialisation.
  long init_rounds() const noexcept { return init_rounds_; }

 protected:
  Choice decide_stage1(long t, const Vector& x1) override;
  Choice decide_stage2(long t, double y1, const Vector& x2) override;
  void learn(long t, const RoundRecord& record) override;

 private:
  PolicyConfig config_;
  EstimatorBank bank_;
  int init_slots_;
  long init_rounds_;
};

// One-stage OLSBandit over arms with linear mean reward beta_a^T x: forced
// schedule over the arms, forced-sample filter at margin h/2, then argmax of
// the all-sample estimate among the survivors.
class OlsBandit {
 public:
  OlsBandit(int d, int arms, int q, double h);

  struct Decision {
    int arm;
    Branch branch;
    std::optional<int> forced_slot;
  };
  Decision choose(long t, const Vector& x) const;
  void update(long t, int arm, const Vector& x, double y, bool forced);

  int arms() const noexcept { return arms_; }
  const ForcedSchedule& schedule() const noexcept { return schedule_; }
  std::optional<Vector> forced_estimate(int arm) const;
  std::optional<Vector> all_estimate(int arm) const;
  void hash_into(std::uint64_t& h) const;

 private:
  int d_;
  int arms_;
  double h_;
  ForcedSchedule schedule_;
  std::vector<CachedOls> forced_, all_;
};

// Static: OLSBandit on the k1*k2 composite arms regressing y1 + y2 on x1.
// Recourse: stage 1 from the same composite bandit, stage 2 from a k2-armed
// OLSBandit regressing y2 on x2.
class CompositePolicy final : public Policy {
 public:
  CompositePolicy(const PolicyConfig& config, bool recourse);

  std::string name() const override { return config_.name; }
  std::uint64_t fingerprint() const override;
  // Composite committed in the current round.
  int committed_composite() const noexcept { return committed_; }
  const OlsBandit& composite_bandit() const noexcept { return composite_; }

 protected:
  Choice decide_stage1(long t, const Vector& x1) override;
  Choice decide_stage2(long t, double y1, const Vector& x2) override;
  void learn(long t, const RoundRecord& record) override;

 private:
  PolicyConfig config_;
  bool recourse_;
  OlsBandit composite_;
  std::optional<OlsBandit> second_;
  int committed_ = 0;
  bool composite_forced_ = false;
  bool second_forced_ = false;
};

// Knows the instance and plays the oracle arms.
class OraclePolicy final : public Policy {
 public:
  OraclePolicy(std::string name, ProblemInstance instance, double precision);
  std::string name() const override { return name_; }

 protected:
  Choice decide_stage1(long, const Vector& x1) override;
  Choice decide_stage2(long, double, const Vector& x2) override;
  void learn(long, const RoundRecord&) override {}

 private:
  std::string name_;
  ProblemInstance instance_;
  double precision_;
};

// Non-adaptive policy defined by two callables. Useful for fixed and
// stochastic reference policies.
class FunctionPolicy final : public Policy {
 public:
  using Stage1 = std::function<int(const Vector& x1, Rng& rng)>;
  using Stage2 = std::function<int(const Vector& x1, int a1, double y1, const Vector& x2, Rng& rng)>;

  FunctionPolicy(std::string name, Stage1 stage1, Stage2 stage2, std::uint64_t seed);
  std::string name() const override { return name_; }

 protected:
  Choice decide_stage1(long, const Vector& x1) override;
  Choice decide_stage2(long, double y1, const Vector& x2) override;
  void learn(long, const RoundRecord&) override {}

 private:
  std::string name_;
  Stage1 stage1_;
  Stage2 stage2_;
  Rng rng_;
};

std::unique_ptr<Policy> make_uniform_random_policy(std::string name, int k1, int k2,
                                                   std::uint64_t seed);

// Builds any configured variant. `instance` is required for the oracle.
std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const ProblemInstance* instance,
                                    std::uint64_t seed, double oracle_precision = kDefaultOraclePrecision);

}  // namespace dtr
