#pragma once

#include <filesystem>
#include <random>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dtr/linalg.hpp"

namespace dtr {

using linalg::Matrix;
using linalg::Vector;
using Rng = std::mt19937_64;

// Axis-aligned box [low_i, high_i].
struct UniformBox {
  Vector low;
  Vector high;
};

// Finite mixture of point masses. weights are normalised on construction.
struct FiniteSupport {
  std::vector<Vector> points;
  std::vector<double> weights;
};

using Distribution = std::variant<UniformBox, FiniteSupport>;

enum class RewardNoise { gaussian, uniform };

struct ProblemInstance {
  int d = 0;
  int k1 = 0;
  int k2 = 0;
  std::vector<Vector> beta1;  // k1 entries, reward coefficients of stage-1 arms
  std::vector<Vector> beta2;  // k2 entries
  std::vector<Matrix> bmat;   // k1 entries, x2 = bmat[a]^T x1 + eps
  double eta_sigma = 0.0;     // standard deviation of the reward noise
  RewardNoise eta_kind = RewardNoise::gaussian;
  std::vector<Distribution> eps;  // k1 entries, zero-mean transition noise
  Distribution x_dist;

  // Throws SchemaError on inconsistent dimensions, k < 2, unbounded or
  // non-zero-mean noise, or bad weights.
  void validate() const;

  // d = 1, two arms per stage: beta1 = (5, 0), beta2 = (1, 5), B = (1, 2),
  // eta ~ N(0, 0.1^2), eps ~ U(-1, 1), x1 ~ U(-1, 1).
  static ProblemInstance synthetic_1d();
};

ProblemInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const ProblemInstance& inst);
ProblemInstance load_instance(const std::filesystem::path& path);

// One unit's trajectory. Arms are 1-based.
struct RoundRecord {
  Vector x1;
  int a1 = 0;
  double y1 = 0.0;
  Vector x2;
  int a2 = 0;
  double y2 = 0.0;
};

Vector sample_from(const Distribution& dist, int d, Rng& rng);
Vector sample_context(const ProblemInstance& inst, Rng& rng);

struct Stage1Outcome {
  double y1;
  Vector x2;
};

Stage1Outcome step_stage1(const ProblemInstance& inst, const Vector& x1, int a1, Rng& rng);
double step_stage2(const ProblemInstance& inst, const Vector& x2, int a2, Rng& rng);

double oracle_q2(const ProblemInstance& inst, const Vector& x2, int a);

// Q1 value with an error estimate. `within_precision` is false when the
// numerical budget ran out before the requested precision was reached.
struct OracleValue {
  double value = 0.0;
  double error = 0.0;
  bool within_precision = true;
};

inline constexpr double kDefaultOraclePrecision = 1e-6;

// beta_{a,1}^T x1 + E_eps[max_{a2} beta_{a2,2}^T (B_a^T x1 + eps)].
// Finite-support noise is summed exactly; d = 1 uniform noise uses Gauss-Legendre
// panels split at the kinks of the max, doubled until two refinements agree;
// d > 1 uniform noise uses randomly shifted Halton points with a standard error.
OracleValue oracle_q1(const ProblemInstance& inst, const Vector& x1, int a,
                      double precision = kDefaultOraclePrecision);

struct OracleAction {
  int arm = 0;
  // The Q gap to the runner-up is below the combined numerical error.
  bool near_tie = false;
};

// argmax over arms of Q1 (stage 1) or Q2 (stage 2); ties go to the lowest arm.
OracleAction oracle_action(const ProblemInstance& inst, int stage, const Vector& context,
                           double precision = kDefaultOraclePrecision);

struct StepRegret {
  double regret = 0.0;
  double error = 0.0;
  bool within_precision = true;
};

// [Q1(x1, a1*) - Q1(x1, a1)] + [Q2(x2, a2hat*) - Q2(x2, a2)] with a2hat* the
// oracle action at the realised x2.
StepRegret per_step_regret(const ProblemInstance& inst, const RoundRecord& record,
                           double precision = kDefaultOraclePrecision);

// Points in the context box of a d = 1, two-arm instance where the stage-1
// oracle switches arm, located by grid scan plus bisection.
struct DecisionSwitch {
  double x;
  int left_arm;
  int right_arm;
};
std::vector<DecisionSwitch> stage1_decision_switches(const ProblemInstance& inst,
                                                     int grid = 2000,
                                                     double precision = 1e-9);

}  // namespace dtr
