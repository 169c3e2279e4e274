#include <doctest.h>

#include <cmath>
#include <random>

#include "dtr/environment.hpp"
#include "dtr/errors.hpp"
#include "test_support.hpp"

using namespace dtr;
using dtr::testing::noiseless_1d;
using dtr::testing::scalar;
using dtr::testing::vec;

namespace {

// E[max(z, 5z)] for z ~ U(m - 1, m + 1), integrated by hand.
double expected_max_1d(double m) {
  if (m >= 1.0) return 5.0 * m;
  if (m <= -1.0) return m;
  return m * m + 3.0 * m + 1.0;
}

double closed_form_q1(double x, int a) {
  return a == 1 ? 5.0 * x + expected_max_1d(x) : expected_max_1d(2.0 * x);
}

}  // namespace

TEST_SUITE("environment") {
  TEST_CASE("contexts stay in the box and average to zero") {
    const auto inst = ProblemInstance::synthetic_1d();
    Rng rng(1);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double x = sample_context(inst, rng)(0);
      REQUIRE(x >= -1.0);
      REQUIRE(x <= 1.0);
      sum += x;
    }
    CHECK(std::abs(sum / n) < 0.02);
  }

  TEST_CASE("point-mass context") {
    auto inst = ProblemInstance::synthetic_1d();
    inst.d = 2;
    inst.beta1 = {vec({1, 0}), vec({0, 1})};
    inst.beta2 = {vec({1, 0}), vec({0, 1})};
    inst.bmat = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    const UniformBox box{vec({-1, -1}), vec({1, 1})};
    inst.eps = {box, box};
    inst.x_dist = FiniteSupport{{vec({1, 0})}, {1.0}};
    inst.validate();
    Rng rng(2);
    for (int i = 0; i < 10; ++i) CHECK(sample_context(inst, rng) == vec({1, 0}));
  }

  TEST_CASE("noiseless transitions and rewards") {
    const auto inst = noiseless_1d();
    Rng rng(3);
    auto s = step_stage1(inst, scalar(0.5), 1, rng);
    CHECK(s.y1 == doctest::Approx(2.5));
    CHECK(s.x2(0) == doctest::Approx(0.5));
    s = step_stage1(inst, scalar(0.5), 2, rng);
    CHECK(s.y1 == doctest::Approx(0.0));
    CHECK(s.x2(0) == doctest::Approx(1.0));
    CHECK(step_stage2(inst, scalar(0.5), 2, rng) == doctest::Approx(2.5));
    CHECK(step_stage2(inst, scalar(0.0), 1, rng) == 0.0);
    CHECK(step_stage2(inst, scalar(0.0), 2, rng) == 0.0);
  }

  TEST_CASE("noisy rewards average to their means") {
    const auto inst = ProblemInstance::synthetic_1d();
    Rng rng(4);
    double s1 = 0.0, s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      s1 += step_stage1(inst, scalar(0.5), 1, rng).y1;
      s2 += step_stage2(inst, scalar(1.0), 1, rng);
    }
    CHECK(std::abs(s1 / n - 2.5) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.01);
  }

  TEST_CASE("arm range is enforced") {
    const auto inst = ProblemInstance::synthetic_1d();
    Rng rng(5);
    CHECK_THROWS_AS(step_stage1(inst, scalar(0.1), 3, rng), ContractViolation);
    CHECK_THROWS_AS(step_stage2(inst, scalar(0.1), 0, rng), ContractViolation);
    CHECK_THROWS_AS(oracle_q2(inst, scalar(0.1), 3), ContractViolation);
  }

  TEST_CASE("second-stage oracle values") {
    const auto inst = ProblemInstance::synthetic_1d();
    CHECK(oracle_q2(inst, scalar(0.5), 2) == doctest::Approx(2.5));
    CHECK(oracle_q2(inst, scalar(0.0), 1) == 0.0);
    CHECK(oracle_q2(inst, scalar(-0.3), 1) == doctest::Approx(-0.3));
  }

  TEST_CASE("first-stage oracle hand values") {
    const auto inst = ProblemInstance::synthetic_1d();
    CHECK(std::abs(oracle_q1(inst, scalar(0.0), 1).value - 1.0) < 1e-6);
    CHECK(std::abs(oracle_q1(inst, scalar(1.0 / 3.0), 1).value - 34.0 / 9.0) < 1e-6);
    const auto deg = noiseless_1d();
    CHECK(oracle_q1(deg, scalar(0.5), 1).value == doctest::Approx(5.0));
  }

  TEST_CASE("first-stage oracle matches the piecewise closed form") {
    const auto inst = ProblemInstance::synthetic_1d();
    for (int i = -20; i <= 20; ++i) {
      const double x = i / 20.0;
      for (int a = 1; a <= 2; ++a) {
        const auto q = oracle_q1(inst, scalar(x), a);
        CHECK(q.within_precision);
        CHECK(std::abs(q.value - closed_form_q1(x, a)) < 1e-6);
      }
    }
  }

  TEST_CASE("point-mass transition noise is summed exactly") {
    auto inst = noiseless_1d();
    inst.eps = {FiniteSupport{{scalar(0.3)}, {1.0}}, FiniteSupport{{scalar(-0.2), scalar(0.2)}, {0.5, 0.5}}};
    // validate() rejects non-zero-mean noise; oracle arithmetic itself is exact.
    for (double x : {-0.7, 0.1, 0.9}) {
      const double q1 = inst.beta1[0](0) * x + std::max(x + 0.3, 5 * (x + 0.3));
      CHECK(oracle_q1(inst, scalar(x), 1).value == doctest::Approx(q1));
      const double z1 = 2 * x - 0.2, z2 = 2 * x + 0.2;
      const double q2 = 0.5 * std::max(z1, 5 * z1) + 0.5 * std::max(z2, 5 * z2);
      CHECK(oracle_q1(inst, scalar(x), 2).value == doctest::Approx(q2));
    }
  }

  TEST_CASE("multi-dimensional oracle agrees with Monte Carlo") {
    ProblemInstance inst;
    inst.d = 2;
    inst.k1 = 2;
    inst.k2 = 3;
    inst.beta1 = {vec({1, 0.5}), vec({-0.5, 1})};
    inst.beta2 = {vec({1, 0}), vec({0, 1}), vec({-1, -1})};
    Matrix b1(2, 2), b2(2, 2);
    b1 << 1, 0.2, 0, 1;
    b2 << 0.5, 0, 0.3, -1;
    inst.bmat = {b1, b2};
    inst.eta_sigma = 0.1;
    const UniformBox box{vec({-1, -1}), vec({1, 1})};
    inst.eps = {box, box};
    inst.x_dist = box;
    inst.validate();
    Rng rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    const Vector x = vec({0.3, -0.4});
    for (int a = 1; a <= 2; ++a) {
      const auto q = oracle_q1(inst, x, a, 1e-4);
      const int n = 400000;
      double sum = 0, sq = 0;
      const Vector center = inst.bmat[a - 1].transpose() * x;
      for (int i = 0; i < n; ++i) {
        const Vector z = center + vec({u(rng), u(rng)});
        double best = inst.beta2[0].dot(z);
        for (int k = 1; k < 3; ++k) best = std::max(best, inst.beta2[k].dot(z));
        sum += best;
        sq += best * best;
      }
      const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
      const double mc = inst.beta1[a - 1].dot(x) + mean;
      CHECK(std::abs(q.value - mc) < 3.0 * std::sqrt(se * se + q.error * q.error));
    }
  }

  TEST_CASE("oracle actions") {
    const auto inst = ProblemInstance::synthetic_1d();
    CHECK(oracle_action(inst, 2, scalar(-0.5)).arm == 1);
    CHECK(oracle_action(inst, 2, scalar(0.5)).arm == 2);
    CHECK(oracle_action(inst, 1, scalar(0.3)).arm == 1);
    CHECK(oracle_action(inst, 1, scalar(-0.5)).arm == 2);
    CHECK(oracle_action(inst, 2, scalar(0.0)).arm == 1);  // tie goes low
  }

  TEST_CASE("first-stage decision boundary is computed, not assumed") {
    const auto inst = ProblemInstance::synthetic_1d();
    const auto sw = stage1_decision_switches(inst);
    REQUIRE(sw.size() == 1);
    CHECK(std::abs(sw[0].x) < 1e-6);
    CHECK(sw[0].left_arm == 2);
    CHECK(sw[0].right_arm == 1);
    // Between 2/3 and 1 arm 1 keeps its edge: Q1(x,1) - Q1(x,2) = (x - 1)^2.
    for (double x : {0.7, 0.8, 0.95}) {
      CHECK(oracle_action(inst, 1, scalar(x)).arm == 1);
      const double gap = oracle_q1(inst, scalar(x), 1).value - oracle_q1(inst, scalar(x), 2).value;
      CHECK(gap == doctest::Approx((x - 1) * (x - 1)).epsilon(1e-6));
    }
  }

  TEST_CASE("per-step regret examples") {
    const auto deg = noiseless_1d();
    RoundRecord r{scalar(0.5), 1, 2.5, scalar(0.5), 1, 0.5};
    CHECK(per_step_regret(deg, r).regret == doctest::Approx(2.0));
    r.a2 = 2;
    CHECK(per_step_regret(deg, r).regret == doctest::Approx(0.0));
  }

  TEST_CASE("per-step regret is non-negative under random play") {
    const auto inst = ProblemInstance::synthetic_1d();
    Rng rng(7);
    std::uniform_int_distribution<int> arm(1, 2);
    for (int i = 0; i < 2000; ++i) {
      RoundRecord r;
      r.x1 = sample_context(inst, rng);
      r.a1 = arm(rng);
      auto s = step_stage1(inst, r.x1, r.a1, rng);
      r.y1 = s.y1;
      r.x2 = s.x2;
      r.a2 = arm(rng);
      r.y2 = step_stage2(inst, r.x2, r.a2, rng);
      const auto reg = per_step_regret(inst, r);
      REQUIRE(reg.regret >= -reg.error - 1e-12);
    }
  }

  TEST_CASE("instance JSON round trip and validation") {
    const auto inst = ProblemInstance::synthetic_1d();
    const auto back = instance_from_json(instance_to_json(inst));
    CHECK(back.d == 1);
    CHECK(back.beta2[1](0) == 5.0);
    CHECK(back.bmat[1](0, 0) == 2.0);
    CHECK(oracle_q1(back, scalar(0.2), 2).value == doctest::Approx(oracle_q1(inst, scalar(0.2), 2).value));

    auto j = instance_to_json(inst);
    j["eps"] = {{"kind", "finite"}, {"points", {{1.0}}}, {"weights", {1.0}}};
    CHECK_THROWS_AS(instance_from_json(j), SchemaError);  // mean not zero
    j = instance_to_json(inst);
    j.erase("x_dist");
    CHECK_THROWS_AS(instance_from_json(j), SchemaError);
    j = instance_to_json(inst);
    j["beta1"] = {{1.0}};
    CHECK_THROWS_AS(instance_from_json(j), SchemaError);
    j = instance_to_json(inst);
    j["eps"] = {{"kind", "uniform_box"}, {"low", {-1.0}}, {"high", {2.0}}};
    CHECK_THROWS_AS(instance_from_json(j), SchemaError);
  }

  TEST_CASE("shipped instance file loads") {
    const auto inst = load_instance(std::string(DTR_DOCS_DIR) + "/synthetic1d.json");
    CHECK(inst.k1 == 2);
    CHECK(std::abs(oracle_q1(inst, scalar(1.0 / 3.0), 1).value - 34.0 / 9.0) < 1e-6);
  }
}
