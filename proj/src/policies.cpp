#include "dtr/policies.hpp"

#include <algorithm>
#include <cmath>

#include "dtr/errors.hpp"

namespace dtr {

// ---- config ----

std::string to_string(PolicyVariant v) {
  switch (v) {
    case PolicyVariant::dtr_bandit: return "dtr_bandit";
    case PolicyVariant::k_armed_dtr: return "k_armed_dtr";
    case PolicyVariant::greedy: return "greedy";
    case PolicyVariant::static_ols: return "static";
    case PolicyVariant::recourse: return "recourse";
    case PolicyVariant::oracle: return "oracle";
    case PolicyVariant::uniform_random: return "uniform_random";
  }
  return "unknown";
}

PolicyVariant parse_policy_variant(const std::string& s) {
  for (auto v : {PolicyVariant::dtr_bandit, PolicyVariant::k_armed_dtr, PolicyVariant::greedy,
                 PolicyVariant::static_ols, PolicyVariant::recourse, PolicyVariant::oracle,
                 PolicyVariant::uniform_random})
    if (to_string(v) == s) return v;
  throw ConfigError("variant", "unknown policy variant '" + s + "'");
}

namespace {
bool uses_margins(PolicyVariant v) {
  return v == PolicyVariant::dtr_bandit || v == PolicyVariant::k_armed_dtr ||
         v == PolicyVariant::static_ols || v == PolicyVariant::recourse;
}
}  // namespace

void PolicyConfig::validate(const std::string& field) const {
  if (q < 1) throw ConfigError(field + "/q", "must be >= 1");
  if (uses_margins(variant)) {
    if (!(h1 > 0.0) || !std::isfinite(h1)) throw ConfigError(field + "/h1", "must be > 0");
    if (!(h2 > 0.0) || !std::isfinite(h2)) throw ConfigError(field + "/h2", "must be > 0");
  }
  if (d < 1) throw ConfigError(field + "/d", "must be >= 1");
  if (k1 < 2 || k2 < 2) throw ConfigError(field, "k1 and k2 must be >= 2");
  if (known_arm) {
    if (*known_arm < 1 || *known_arm > k2) throw ConfigError(field + "/known_arm", "out of range");
    if (variant != PolicyVariant::dtr_bandit && variant != PolicyVariant::k_armed_dtr &&
        variant != PolicyVariant::greedy)
      throw ConfigError(field + "/known_arm", "only supported by DTR and greedy policies");
    if (k2 < 3) throw ConfigError(field + "/known_arm", "needs k2 >= 3");
  }
  if (variant == PolicyVariant::dtr_bandit) {
    const int explored2 = k2 - (known_arm ? 1 : 0);
    if (k1 != 2 || explored2 != 2)
      throw ConfigError(field + "/variant", "dtr_bandit needs two arms per stage; use k_armed_dtr");
  }
}

PolicyConfig policy_config_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  PolicyConfig c;
  try {
    if (!j.contains("variant")) throw ConfigError(field + "/variant", "missing");
    try {
      c.variant = parse_policy_variant(j["variant"].get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(field + "/variant", e.what());
    }
    c.name = j.value("name", to_string(c.variant));
    c.q = j.value("q", c.q);
    if (j.contains("h")) c.h1 = c.h2 = j["h"].get<double>();
    c.h1 = j.value("h1", c.h1);
    c.h2 = j.value("h2", c.h2);
    c.use_greedy_qhat = j.value("use_greedy_qhat", c.use_greedy_qhat);
    for (const char* key : {"known_arm", "known_arm_effects"})
      if (j.contains(key) && !j[key].is_null()) c.known_arm = j[key].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(field, e.what());
  }
  return c;
}

nlohmann::json policy_config_to_json(const PolicyConfig& c) {
  nlohmann::json j{{"name", c.name},   {"variant", to_string(c.variant)},
                   {"q", c.q},         {"h1", c.h1},
                   {"h2", c.h2},       {"use_greedy_qhat", c.use_greedy_qhat}};
  if (c.known_arm) j["known_arm"] = *c.known_arm;
  return j;
}

// ---- round protocol ----

int Policy::choose_stage1(const Vector& x1) {
  const Choice c = decide_stage1(t_ + 1, x1);
  pending_a1_ = c.arm;
  pending_a2_ = 0;
  pending_x1_ = x1;
  branch1_ = c.branch;
  branch2_ = Branch::none;
  return c.arm;
}

int Policy::choose_stage2(double y1, const Vector& x2) {
  DTR_REQUIRE(pending_a1_ != 0, "choose_stage2 called before choose_stage1");
  const Choice c = decide_stage2(t_ + 1, y1, x2);
  pending_a2_ = c.arm;
  branch2_ = c.branch;
  return c.arm;
}

void Policy::finish_round(const RoundRecord& record) {
  DTR_REQUIRE(pending_a1_ != 0 && pending_a2_ != 0, "finish_round: no completed choices this round");
  DTR_REQUIRE(record.a1 == pending_a1_ && record.a2 == pending_a2_,
              "finish_round: record actions do not match the choices issued this round");
  learn(t_ + 1, record);
  ++t_;
  pending_a1_ = pending_a2_ = 0;
}

std::uint64_t Policy::fingerprint() const {
  return 1469598103934665603ull ^ static_cast<std::uint64_t>(t_) * 1099511628211ull;
}

// ---- rules ----

namespace {

int argmax_hat(std::span<const QValue> hat, std::span<const int> candidates) {
  int best = candidates.front();
  for (int a : candidates)
    if (q_greater(hat[a - 1], hat[best - 1])) best = a;
  return best;
}

int argmax_values(std::span<const double> values, std::span<const int> candidates) {
  int best = candidates.front();
  for (int a : candidates)
    if (values[a - 1] > values[best - 1]) best = a;
  return best;
}

std::vector<int> all_arms(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i + 1;
  return v;
}

}  // namespace

RuleOutcome two_arm_rule(std::span<const double> tilde, std::span<const QValue> hat, double h) {
  DTR_REQUIRE(tilde.size() == 2 && hat.size() == 2, "two_arm_rule: needs two arms");
  if (std::abs(tilde[0] - tilde[1]) > h / 2) return {tilde[1] > tilde[0] ? 2 : 1, true};
  return {q_greater(hat[1], hat[0]) ? 2 : 1, false};
}

std::vector<int> margin_filter(std::span<const double> tilde, double h) {
  DTR_REQUIRE(!tilde.empty(), "margin_filter: no arms");
  const double best = *std::max_element(tilde.begin(), tilde.end());
  std::vector<int> kept;
  for (std::size_t a = 0; a < tilde.size(); ++a)
    if (best - tilde[a] <= h / 2) kept.push_back(static_cast<int>(a) + 1);
  return kept;
}

RuleOutcome filter_then_argmax(std::span<const double> tilde, std::span<const QValue> hat, double h) {
  DTR_REQUIRE(tilde.size() == hat.size(), "filter_then_argmax: size mismatch");
  const auto kept = margin_filter(tilde, h);
  if (kept.size() == 1) return {kept.front(), true};
  return {argmax_hat(hat, kept), false};
}

// ---- DTRBandit ----

namespace {

ForcedSchedule dtr_schedule(const PolicyConfig& c) {
  const int explored2 = c.k2 - (c.known_arm ? 1 : 0);
  if (c.variant == PolicyVariant::dtr_bandit) return ForcedSchedule::two_arm(c.q);
  return ForcedSchedule::k_arm(c.q, std::max(c.k1, explored2));
}

BankOptions bank_options(const PolicyConfig& c, std::optional<ForcedSchedule> schedule) {
  BankOptions o;
  o.d = c.d;
  o.k1 = c.k1;
  o.k2 = c.k2;
  o.schedule = schedule;
  o.known_arm = c.known_arm;
  return o;
}

}  // namespace

DtrBanditPolicy::DtrBanditPolicy(const PolicyConfig& config)
    : config_([&] {
        config.validate();
        DTR_REQUIRE(config.variant == PolicyVariant::dtr_bandit ||
                        config.variant == PolicyVariant::k_armed_dtr,
                    "DtrBanditPolicy: wrong variant");
        return config;
      }()),
      schedule_(dtr_schedule(config_)),
      bank_(bank_options(config_, schedule_)) {}

RuleOutcome DtrBanditPolicy::apply_rule(std::span<const double> tilde, std::span<const QValue> hat,
                                        double h) const {
  if (config_.variant == PolicyVariant::dtr_bandit && tilde.size() == 2) return two_arm_rule(tilde, hat, h);
  return filter_then_argmax(tilde, hat, h);
}

Policy::Choice DtrBanditPolicy::decide_stage1(long t, const Vector& x1) {
  forced_slot_ = schedule_.arm_at(t);
  gap_flag_ = false;
  if (forced_slot_) return {bank_.forced_stage1_arm(*forced_slot_), Branch::forced};

  const int k1 = config_.k1;
  std::vector<double> tilde(k1);
  try {
    for (int a = 1; a <= k1; ++a) tilde[a - 1] = bank_.q_tilde(1, x1, a);
  } catch (const EstimatorUnavailable&) {
    return {static_cast<int>((t - 1) % k1) + 1, Branch::fallback};
  }

  const auto kept = margin_filter(tilde, config_.h1);
  if (kept.size() == 1) {
    gap_flag_ = true;
    return {kept.front(), Branch::tilde};
  }
  std::vector<QValue> hat(k1, QValue::finite(0.0));
  try {
    for (int a : kept)
      hat[a - 1] = config_.use_greedy_qhat ? QValue::finite(bank_.q_hat_greedy(x1, a)) : bank_.q_hat(1, x1, a);
  } catch (const EstimatorUnavailable&) {
    return {argmax_values(tilde, kept), Branch::fallback};
  }
  const RuleOutcome r = apply_rule(tilde, hat, config_.h1);
  gap_flag_ = r.used_tilde;
  return {r.arm, r.used_tilde ? Branch::tilde : Branch::hat};
}

Policy::Choice DtrBanditPolicy::decide_stage2(long t, double y1, const Vector& x2) {
  if (forced_slot_) return {bank_.forced_stage2_arm(*forced_slot_), Branch::forced};

  const int k2 = config_.k2;
  const auto& estimated = bank_.estimated_stage2_arms();
  std::vector<double> tilde(k2, y1);
  std::vector<QValue> hat(k2, QValue::finite(y1));
  try {
    for (int a : estimated) tilde[a - 1] = bank_.q_tilde(2, x2, a);
  } catch (const EstimatorUnavailable&) {
    return {estimated[(t - 1) % estimated.size()], Branch::fallback};
  }
  const auto kept = margin_filter(tilde, config_.h2);
  if (kept.size() == 1) return {kept.front(), Branch::tilde};
  try {
    for (int a : kept)
      if (!bank_.is_known_arm(a)) hat[a - 1] = bank_.q_hat(2, x2, a);
  } catch (const EstimatorUnavailable&) {
    return {argmax_values(tilde, kept), Branch::fallback};
  }
  const RuleOutcome r = apply_rule(tilde, hat, config_.h2);
  return {r.arm, r.used_tilde ? Branch::tilde : Branch::hat};
}

void DtrBanditPolicy::learn(long t, const RoundRecord& record) {
  if (forced_slot_)
    bank_.record_forced(t, *forced_slot_, record);
  else
    bank_.record_regular(t, record, gap_flag_);
}

std::uint64_t DtrBanditPolicy::fingerprint() const { return bank_.fingerprint() ^ Policy::fingerprint(); }

// ---- Greedy ----

GreedyPolicy::GreedyPolicy(const PolicyConfig& config)
    : config_([&] {
        config.validate();
        return config;
      }()),
      bank_(bank_options(config_, std::nullopt)),
      init_slots_(std::max(config_.k1, static_cast<int>(bank_.estimated_stage2_arms().size()))),
      init_rounds_(static_cast<long>(config_.d) * init_slots_) {}

Policy::Choice GreedyPolicy::decide_stage1(long t, const Vector& x1) {
  if (t <= init_rounds_) {
    const int slot = static_cast<int>((t - 1) / config_.d) + 1;
    return {bank_.forced_stage1_arm(slot), Branch::forced};
  }
  const int k1 = config_.k1;
  std::vector<QValue> hat(k1);
  try {
    for (int a = 1; a <= k1; ++a) hat[a - 1] = QValue::finite(bank_.q_hat_greedy(x1, a));
  } catch (const EstimatorUnavailable&) {
    return {static_cast<int>((t - 1) % k1) + 1, Branch::fallback};
  }
  return {argmax_hat(hat, all_arms(k1)), Branch::hat};
}

Policy::Choice GreedyPolicy::decide_stage2(long t, double y1, const Vector& x2) {
  if (t <= init_rounds_) {
    const int slot = static_cast<int>((t - 1) / config_.d) + 1;
    return {bank_.forced_stage2_arm(slot), Branch::forced};
  }
  const auto& estimated = bank_.estimated_stage2_arms();
  std::vector<QValue> hat(config_.k2, QValue::finite(y1));
  try {
    for (int a : estimated) hat[a - 1] = bank_.q_hat(2, x2, a);
  } catch (const EstimatorUnavailable&) {
    return {estimated[(t - 1) % estimated.size()], Branch::fallback};
  }
  return {argmax_hat(hat, all_arms(config_.k2)), Branch::hat};
}

void GreedyPolicy::learn(long t, const RoundRecord& record) { bank_.record_regular(t, record, false); }

std::uint64_t GreedyPolicy::fingerprint() const { return bank_.fingerprint() ^ Policy::fingerprint(); }

// ---- OLSBandit ----

OlsBandit::OlsBandit(int d, int arms, int q, double h)
    : d_(d), arms_(arms), h_(h), schedule_(ForcedSchedule::k_arm(q, arms)) {
  for (int a = 0; a < arms; ++a) {
    forced_.emplace_back(d, 1);
    all_.emplace_back(d, 1);
  }
}

std::optional<Vector> OlsBandit::forced_estimate(int arm) const {
  const auto& s = forced_.at(arm - 1).solution();
  if (!s) return std::nullopt;
  return Vector(s->col(0));
}

std::optional<Vector> OlsBandit::all_estimate(int arm) const {
  const auto& s = all_.at(arm - 1).solution();
  if (!s) return std::nullopt;
  return Vector(s->col(0));
}

OlsBandit::Decision OlsBandit::choose(long t, const Vector& x) const {
  DTR_REQUIRE(x.size() == d_, "OlsBandit: context dimension mismatch");
  if (const auto slot = schedule_.arm_at(t)) return {*slot, Branch::forced, slot};

  std::vector<double> tilde(arms_);
  for (int a = 1; a <= arms_; ++a) {
    const auto& s = forced_[a - 1].solution();
    if (!s) return {static_cast<int>((t - 1) % arms_) + 1, Branch::fallback, std::nullopt};
    tilde[a - 1] = s->col(0).dot(x);
  }
  const auto kept = margin_filter(tilde, h_);
  if (kept.size() == 1) return {kept.front(), Branch::tilde, std::nullopt};
  std::vector<QValue> hat(arms_, QValue::finite(0.0));
  bool fallback = false;
  for (int a : kept) {
    const auto& s = all_[a - 1].solution();
    if (s) {
      hat[a - 1] = QValue::finite(s->col(0).dot(x));
    } else {
      hat[a - 1] = QValue::finite(tilde[a - 1]);
      fallback = true;
    }
  }
  return {argmax_hat(hat, kept), fallback ? Branch::fallback : Branch::hat, std::nullopt};
}

void OlsBandit::update(long t, int arm, const Vector& x, double y, bool forced) {
  DTR_REQUIRE(arm >= 1 && arm <= arms_, "OlsBandit: arm out of range");
  if (forced) {
    const auto slot = schedule_.arm_at(t);
    DTR_REQUIRE(slot && *slot == arm, "OlsBandit: forced update outside the schedule");
    forced_[arm - 1].update(x, y);
  }
  all_[arm - 1].update(x, y);
}

void OlsBandit::hash_into(std::uint64_t& h) const {
  const auto mix = [&](const linalg::OlsState& s) {
    const auto* p = reinterpret_cast<const unsigned char*>(s.cross().data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.cross().size()) * sizeof(double); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
    const auto* q = reinterpret_cast<const unsigned char*>(s.sigma().data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.sigma().size()) * sizeof(double); ++i) {
      h ^= q[i];
      h *= 1099511628211ull;
    }
    h ^= static_cast<std::uint64_t>(s.count());
    h *= 1099511628211ull;
  };
  for (const auto& s : forced_) mix(s.state());
  for (const auto& s : all_) mix(s.state());
}

// ---- Static / Recourse ----

CompositePolicy::CompositePolicy(const PolicyConfig& config, bool recourse)
    : config_([&] {
        config.validate();
        return config;
      }()),
      recourse_(recourse),
      composite_(config_.d, config_.k1 * config_.k2, config_.q, config_.h1) {
  if (recourse_) second_.emplace(config_.d, config_.k2, config_.q, config_.h2);
}

Policy::Choice CompositePolicy::decide_stage1(long t, const Vector& x1) {
  const auto dec = composite_.choose(t, x1);
  committed_ = dec.arm;
  composite_forced_ = dec.forced_slot.has_value();
  second_forced_ = false;
  return {decode_composite(committed_, config_.k2).first, dec.branch};
}

Policy::Choice CompositePolicy::decide_stage2(long t, double, const Vector& x2) {
  if (!recourse_) {
    return {decode_composite(committed_, config_.k2).second,
            composite_forced_ ? Branch::forced : Branch::fixed};
  }
  const auto dec = second_->choose(t, x2);
  second_forced_ = dec.forced_slot.has_value();
  return {dec.arm, dec.branch};
}

void CompositePolicy::learn(long t, const RoundRecord& r) {
  // Recourse: the committed composite learns the realised y1 + y2 even when
  // the second-stage bandit overrode its second component.
  composite_.update(t, committed_, r.x1, r.y1 + r.y2, composite_forced_);
  if (recourse_) second_->update(t, r.a2, r.x2, r.y2, second_forced_);
}

std::uint64_t CompositePolicy::fingerprint() const {
  std::uint64_t h = Policy::fingerprint();
  composite_.hash_into(h);
  if (second_) second_->hash_into(h);
  return h;
}

// ---- reference policies ----

OraclePolicy::OraclePolicy(std::string name, ProblemInstance instance, double precision)
    : name_(std::move(name)), instance_(std::move(instance)), precision_(precision) {}

Policy::Choice OraclePolicy::decide_stage1(long, const Vector& x1) {
  return {oracle_action(instance_, 1, x1, precision_).arm, Branch::fixed};
}

Policy::Choice OraclePolicy::decide_stage2(long, double, const Vector& x2) {
  return {oracle_action(instance_, 2, x2, precision_).arm, Branch::fixed};
}

FunctionPolicy::FunctionPolicy(std::string name, Stage1 stage1, Stage2 stage2, std::uint64_t seed)
    : name_(std::move(name)), stage1_(std::move(stage1)), stage2_(std::move(stage2)), rng_(seed) {}

Policy::Choice FunctionPolicy::decide_stage1(long, const Vector& x1) {
  return {stage1_(x1, rng_), Branch::fixed};
}

Policy::Choice FunctionPolicy::decide_stage2(long, double y1, const Vector& x2) {
  return {stage2_(pending_x1(), pending_a1(), y1, x2, rng_), Branch::fixed};
}

std::unique_ptr<Policy> make_uniform_random_policy(std::string name, int k1, int k2, std::uint64_t seed) {
  return std::make_unique<FunctionPolicy>(
      std::move(name),
      [k1](const Vector&, Rng& rng) { return std::uniform_int_distribution<int>(1, k1)(rng); },
      [k2](const Vector&, int, double, const Vector&, Rng& rng) {
        return std::uniform_int_distribution<int>(1, k2)(rng);
      },
      seed);
}

std::unique_ptr<Policy> make_policy(const PolicyConfig& config, const ProblemInstance* instance,
                                    std::uint64_t seed, double oracle_precision) {
  config.validate();
  switch (config.variant) {
    case PolicyVariant::dtr_bandit:
    case PolicyVariant::k_armed_dtr: return std::make_unique<DtrBanditPolicy>(config);
    case PolicyVariant::greedy: return std::make_unique<GreedyPolicy>(config);
    case PolicyVariant::static_ols: return std::make_unique<CompositePolicy>(config, false);
    case PolicyVariant::recourse: return std::make_unique<CompositePolicy>(config, true);
    case PolicyVariant::oracle:
      if (instance == nullptr) throw ConfigError("policy/variant", "oracle needs a problem instance");
      return std::make_unique<OraclePolicy>(config.name, *instance, oracle_precision);
    case PolicyVariant::uniform_random:
      return make_uniform_random_policy(config.name, config.k1, config.k2, seed);
  }
  throw ConfigError("policy/variant", "unhandled variant");
}

}  // namespace dtr
