#include <doctest.h>

#include <array>
#include <random>

#include "dtr/errors.hpp"
#include "dtr/policies.hpp"
#include "test_support.hpp"

using namespace dtr;
using dtr::testing::scalar;

namespace {

struct Played {
  RoundRecord record;
  Branch branch1, branch2;
};

Played play_round(Policy& p, const ProblemInstance& inst, Rng& rng) {
  RoundRecord r;
  r.x1 = sample_context(inst, rng);
  r.a1 = p.choose_stage1(r.x1);
  const auto s = step_stage1(inst, r.x1, r.a1, rng);
  r.y1 = s.y1;
  r.x2 = s.x2;
  r.a2 = p.choose_stage2(r.y1, r.x2);
  r.y2 = step_stage2(inst, r.x2, r.a2, rng);
  p.finish_round(r);
  return {r, p.last_branch(1), p.last_branch(2)};
}

PolicyConfig config(PolicyVariant v, int q = 20, double h = 0.5) {
  PolicyConfig c;
  c.name = to_string(v);
  c.variant = v;
  c.q = q;
  c.h1 = c.h2 = h;
  return c;
}

std::array<QValue, 2> hat2(double a, double b) { return {QValue::finite(a), QValue::finite(b)}; }

}  // namespace

TEST_SUITE("policies") {
  TEST_CASE("two-arm rule examples") {
    const std::array<double, 2> clear{1.0, 0.2};
    auto r = two_arm_rule(clear, hat2(0.0, 9.0), 1.0);
    CHECK(r.arm == 1);
    CHECK(r.used_tilde);

    const std::array<double, 2> close{0.6, 0.5};
    r = two_arm_rule(close, hat2(0.1, 0.9), 1.0);
    CHECK(r.arm == 2);
    CHECK_FALSE(r.used_tilde);

    // a gap of exactly h/2 does not exceed the margin
    const std::array<double, 2> edge{1.0, 0.5};
    r = two_arm_rule(edge, hat2(0.0, 1.0), 1.0);
    CHECK(r.arm == 2);
    CHECK_FALSE(r.used_tilde);

    // ties go to the lower arm
    r = two_arm_rule(close, hat2(0.3, 0.3), 1.0);
    CHECK(r.arm == 1);
  }

  TEST_CASE("K-arm filter example") {
    const std::array<double, 3> tilde{1.0, 0.9, 0.2};
    const std::array<QValue, 3> hat{QValue::finite(0.5), QValue::finite(0.7), QValue::finite(9.9)};
    CHECK(margin_filter(tilde, 0.4) == std::vector<int>{1, 2});
    const auto r = filter_then_argmax(tilde, hat, 0.4);
    CHECK(r.arm == 2);
    CHECK_FALSE(r.used_tilde);
    const auto only = filter_then_argmax(tilde, hat, 0.1);
    CHECK(only.arm == 1);
    CHECK(only.used_tilde);
  }

  TEST_CASE("infinite sentinel wins the hat comparison") {
    const std::array<double, 2> close{0.6, 0.5};
    std::array<QValue, 2> hat{QValue::finite(100.0), QValue::plus_infinity()};
    CHECK(two_arm_rule(close, hat, 1.0).arm == 2);
    hat = {QValue::plus_infinity(), QValue::plus_infinity()};
    CHECK(two_arm_rule(close, hat, 1.0).arm == 1);
    CHECK(q_greater(QValue::plus_infinity(), QValue::finite(1e300)));
    CHECK_FALSE(q_greater(QValue::plus_infinity(), QValue::plus_infinity()));
  }

  TEST_CASE("rules are invariant to scaling values and margin together") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-2, 2), pos(0.1, 3.0);
    for (int trial = 0; trial < 2000; ++trial) {
      const std::array<double, 3> tilde{u(rng), u(rng), u(rng)};
      const std::array<QValue, 3> hat{QValue::finite(u(rng)), QValue::finite(u(rng)), QValue::finite(u(rng))};
      const double h = pos(rng), c = pos(rng);
      std::array<double, 3> st;
      std::array<QValue, 3> sh;
      for (int i = 0; i < 3; ++i) {
        st[i] = c * tilde[i];
        sh[i] = QValue::finite(c * hat[i].value);
      }
      const auto a = filter_then_argmax(tilde, hat, h);
      const auto b = filter_then_argmax(st, sh, c * h);
      REQUIRE(a.arm == b.arm);
      const std::span<const double> t2(tilde.data(), 2);
      const std::span<const QValue> h2(hat.data(), 2);
      const std::span<const double> st2(st.data(), 2);
      const std::span<const QValue> sh2(sh.data(), 2);
      REQUIRE(two_arm_rule(t2, h2, h).arm == two_arm_rule(st2, sh2, c * h).arm);
      // with two arms the generic filter agrees with the two-arm rule
      REQUIRE(two_arm_rule(t2, h2, h).arm == filter_then_argmax(t2, h2, h).arm);
    }
  }

  TEST_CASE("composite arm encoding") {
    CHECK(encode_composite(2, 1, 2) == 3);
    CHECK(decode_composite(3, 2) == std::pair{2, 1});
    for (int c = 1; c <= 12; ++c) {
      const auto [a1, a2] = decode_composite(c, 4);
      CHECK(encode_composite(a1, a2, 4) == c);
    }
  }

  TEST_CASE("DTR forced rounds follow the schedule") {
    const auto inst = ProblemInstance::synthetic_1d();
    DtrBanditPolicy p(config(PolicyVariant::dtr_bandit, 1));
    Rng rng(5);
    const auto sched = ForcedSchedule::two_arm(1);
    for (long t = 1; t <= 3000; ++t) {
      const auto played = play_round(p, inst, rng);
      if (const auto slot = sched.arm_at(t)) {
        REQUIRE(played.branch1 == Branch::forced);
        REQUIRE(played.record.a1 == *slot);
        REQUIRE(played.record.a2 == *slot);
      } else {
        REQUIRE(played.branch1 != Branch::forced);
      }
    }
    CHECK(p.round() == 3000);
    CHECK(static_cast<long>(p.bank().forced_pairs(1).size()) == sched.count(1, 3000));
  }

  TEST_CASE("DTR picks forced arm 1 at round 3 with q = 1") {
    const auto inst = ProblemInstance::synthetic_1d();
    DtrBanditPolicy p(config(PolicyVariant::dtr_bandit, 1));
    Rng rng(6);
    play_round(p, inst, rng);
    play_round(p, inst, rng);
    const auto third = play_round(p, inst, rng);
    CHECK(third.record.a1 == 1);
    CHECK(third.branch1 == Branch::forced);
  }

  TEST_CASE("two-arm and K-armed DTR coincide on two arms") {
    const auto inst = ProblemInstance::synthetic_1d();
    DtrBanditPolicy a(config(PolicyVariant::dtr_bandit, 5, 0.4));
    DtrBanditPolicy b(config(PolicyVariant::k_armed_dtr, 5, 0.4));
    Rng ra(8), rb(8);
    for (int t = 0; t < 3000; ++t) {
      const auto pa = play_round(a, inst, ra);
      const auto pb = play_round(b, inst, rb);
      REQUIRE(pa.record.a1 == pb.record.a1);
      REQUIRE(pa.record.a2 == pb.record.a2);
    }
    CHECK(a.bank().fingerprint() == b.bank().fingerprint());
  }

  TEST_CASE("DTR gap flag marks the tilde branch") {
    const auto inst = ProblemInstance::synthetic_1d();
    DtrBanditPolicy p(config(PolicyVariant::dtr_bandit, 2, 0.5));
    Rng rng(9);
    int tilde = 0, hat = 0;
    for (int t = 0; t < 4000; ++t) {
      const auto played = play_round(p, inst, rng);
      REQUIRE(p.last_gap_flag() == (played.branch1 == Branch::tilde));
      tilde += played.branch1 == Branch::tilde;
      hat += played.branch1 == Branch::hat;
    }
    CHECK(tilde > 0);
    CHECK(hat > 0);
    CHECK(p.bank().restricted_pairs(1).size() + p.bank().restricted_pairs(2).size() ==
          static_cast<std::size_t>(tilde));
  }

  TEST_CASE("greedy initialisation order") {
    const auto inst = ProblemInstance::synthetic_1d();
    auto c = config(PolicyVariant::greedy);
    GreedyPolicy p(c);
    CHECK(p.init_rounds() == 2);
    Rng rng(10);
    auto r = play_round(p, inst, rng);
    CHECK(r.record.a1 == 1);
    CHECK(r.record.a2 == 1);
    r = play_round(p, inst, rng);
    CHECK(r.record.a1 == 2);
    CHECK(r.record.a2 == 2);
    r = play_round(p, inst, rng);
    CHECK(r.branch1 == Branch::hat);

    c.d = 3;
    c.k1 = 3;
    c.k2 = 2;
    CHECK(GreedyPolicy(c).init_rounds() == 9);
  }

  TEST_CASE("static decodes the committed composite") {
    const auto inst = ProblemInstance::synthetic_1d();
    CompositePolicy p(config(PolicyVariant::static_ols, 1), false);
    Rng rng(11);
    const std::array<std::pair<int, int>, 4> want{{{1, 1}, {1, 2}, {2, 1}, {2, 2}}};
    for (const auto& [a1, a2] : want) {
      const auto r = play_round(p, inst, rng);
      CHECK(r.record.a1 == a1);
      CHECK(r.record.a2 == a2);
    }
    for (int t = 0; t < 500; ++t) {
      const auto r = play_round(p, inst, rng);
      REQUIRE(encode_composite(r.record.a1, r.record.a2, 2) == p.committed_composite());
    }
  }

  TEST_CASE("recourse second stage follows its own schedule") {
    const auto inst = ProblemInstance::synthetic_1d();
    CompositePolicy p(config(PolicyVariant::recourse, 1), true);
    Rng rng(12);
    const auto second = ForcedSchedule::k_arm(1, 2);
    for (long t = 1; t <= 400; ++t) {
      const auto r = play_round(p, inst, rng);
      if (const auto slot = second.arm_at(t)) {
        REQUIRE(r.record.a2 == *slot);
        REQUIRE(r.branch2 == Branch::forced);
      }
    }
  }

  TEST_CASE("same seed gives the same learned state") {
    const auto inst = ProblemInstance::synthetic_1d();
    for (auto v : {PolicyVariant::dtr_bandit, PolicyVariant::greedy, PolicyVariant::static_ols,
                   PolicyVariant::recourse, PolicyVariant::uniform_random}) {
      auto a = make_policy(config(v, 3), &inst, 77);
      auto b = make_policy(config(v, 3), &inst, 77);
      Rng ra(13), rb(13);
      for (int t = 0; t < 1500; ++t) {
        play_round(*a, inst, ra);
        play_round(*b, inst, rb);
      }
      CHECK(a->fingerprint() == b->fingerprint());
      CHECK(a->round() == 1500);
    }
  }

  TEST_CASE("round protocol contract") {
    const auto inst = ProblemInstance::synthetic_1d();
    DtrBanditPolicy p(config(PolicyVariant::dtr_bandit, 1));
    CHECK_THROWS_AS(p.choose_stage2(0.0, scalar(0.1)), ContractViolation);
    const int a1 = p.choose_stage1(scalar(0.2));
    const int a2 = p.choose_stage2(1.0, scalar(0.3));
    RoundRecord wrong{scalar(0.2), 3 - a1, 1.0, scalar(0.3), a2, 0.0};
    CHECK_THROWS_AS(p.finish_round(wrong), ContractViolation);
    RoundRecord right{scalar(0.2), a1, 1.0, scalar(0.3), a2, 0.0};
    const auto before = p.fingerprint();
    p.finish_round(right);
    CHECK(p.round() == 1);
    CHECK(p.fingerprint() != before);

    // abandoning a pending round leaves the state alone
    const auto mid = p.fingerprint();
    p.choose_stage1(scalar(0.4));
    p.choose_stage1(scalar(-0.4));
    CHECK(p.fingerprint() == mid);
    CHECK(p.round() == 1);
  }

  TEST_CASE("oracle policy plays the oracle arms") {
    const auto inst = ProblemInstance::synthetic_1d();
    OraclePolicy p("oracle", inst, 1e-8);
    CHECK(p.choose_stage1(scalar(0.5)) == 1);
    CHECK(p.choose_stage2(0.0, scalar(0.5)) == 2);
    CHECK(p.choose_stage1(scalar(-0.5)) == 2);
    CHECK(p.choose_stage2(0.0, scalar(-0.5)) == 1);
  }

  TEST_CASE("known second-stage arm is exploited but never forced") {
    // third arm's reward equals the stage-1 reward
    auto inst = ProblemInstance::synthetic_1d();
    auto c = config(PolicyVariant::dtr_bandit, 2);
    c.k2 = 3;
    c.known_arm = 3;
    DtrBanditPolicy p(c);
    CHECK(p.bank().estimated_stage2_arms() == std::vector<int>{1, 2});
    Rng rng(14);
    int known_picks = 0;
    for (long t = 1; t <= 3000; ++t) {
      RoundRecord r;
      r.x1 = sample_context(inst, rng);
      r.a1 = p.choose_stage1(r.x1);
      const auto s = step_stage1(inst, r.x1, r.a1, rng);
      r.y1 = s.y1;
      r.x2 = s.x2;
      r.a2 = p.choose_stage2(r.y1, r.x2);
      r.y2 = r.a2 == 3 ? r.y1 : step_stage2(inst, r.x2, r.a2, rng);
      if (p.last_branch(2) == Branch::forced) REQUIRE(r.a2 != 3);
      known_picks += r.a2 == 3;
      p.finish_round(r);
    }
    CHECK(known_picks > 100);
  }

  TEST_CASE("config parsing and validation") {
    using nlohmann::json;
    auto c = policy_config_from_json(json{{"variant", "static"}, {"q", 5}, {"h", 0.3}}, "p");
    CHECK(c.variant == PolicyVariant::static_ols);
    CHECK(c.name == "static");
    CHECK(c.h1 == 0.3);
    CHECK(c.h2 == 0.3);
    c = policy_config_from_json(json{{"variant", "greedy"}, {"known_arm_effects", 3}}, "p");
    CHECK(c.known_arm == 3);
    CHECK_THROWS_AS(policy_config_from_json(json{{"q", 5}}, "p"), ConfigError);
    CHECK_THROWS_AS(policy_config_from_json(json{{"variant", "bogus"}}, "p"), ConfigError);
    CHECK_THROWS_AS(policy_config_from_json(json{{"variant", "greedy"}, {"q", "x"}}, "p"), ConfigError);

    auto bad = config(PolicyVariant::dtr_bandit);
    bad.q = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = config(PolicyVariant::recourse, 20, 0.0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = config(PolicyVariant::dtr_bandit);
    bad.k1 = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.variant = PolicyVariant::k_armed_dtr;
    CHECK_NOTHROW(bad.validate());
    bad = config(PolicyVariant::static_ols);
    bad.k2 = 3;
    bad.known_arm = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(make_policy(config(PolicyVariant::oracle), nullptr, 1), ConfigError);

    const auto round = policy_config_from_json(policy_config_to_json(config(PolicyVariant::recourse, 7, 0.25)), "p");
    CHECK(round.q == 7);
    CHECK(round.h2 == 0.25);
  }
}
