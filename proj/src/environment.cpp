#include "dtr/environment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "dtr/errors.hpp"

namespace dtr {

namespace {

void check_arm(int arm, int arms, const char* what) {
  DTR_REQUIRE(arm >= 1 && arm <= arms, std::string(what) + ": arm " + std::to_string(arm) +
                                           " out of range [1, " + std::to_string(arms) + "]");
}

void check_dim(const Vector& v, int d, const char* what) {
  DTR_REQUIRE(v.size() == d, std::string(what) + ": expected dimension " + std::to_string(d) +
                                 ", got " + std::to_string(v.size()));
}

void validate_distribution(const Distribution& dist, int d, bool zero_mean, const std::string& name) {
  if (const auto* box = std::get_if<UniformBox>(&dist)) {
    if (box->low.size() != d || box->high.size() != d)
      throw SchemaError(name + ": box dimension does not match d");
    for (int i = 0; i < d; ++i) {
      if (!std::isfinite(box->low(i)) || !std::isfinite(box->high(i)))
        throw SchemaError(name + ": box must be bounded");
      if (box->low(i) > box->high(i)) throw SchemaError(name + ": box low > high");
      if (zero_mean && std::abs(box->low(i) + box->high(i)) > 1e-12)
        throw SchemaError(name + ": noise box must be symmetric about 0");
    }
    return;
  }
  const auto& fin = std::get<FiniteSupport>(dist);
  if (fin.points.empty()) throw SchemaError(name + ": finite support is empty");
  if (fin.points.size() != fin.weights.size())
    throw SchemaError(name + ": points and weights differ in length");
  double total = 0.0;
  Vector mean = Vector::Zero(d);
  for (std::size_t i = 0; i < fin.points.size(); ++i) {
    if (fin.points[i].size() != d) throw SchemaError(name + ": support point dimension mismatch");
    if (!(fin.weights[i] >= 0.0) || !std::isfinite(fin.points[i].sum()))
      throw SchemaError(name + ": weights must be non-negative and points finite");
    total += fin.weights[i];
    mean += fin.weights[i] * fin.points[i];
  }
  if (!(std::abs(total - 1.0) < 1e-9)) throw SchemaError(name + ": weights must sum to 1");
  if (zero_mean && mean.cwiseAbs().maxCoeff() > 1e-9)
    throw SchemaError(name + ": noise support must have mean 0");
}

// ---- numerical expectation of the stage-2 value under transition noise ----

// max_{a2} beta_{a2,2}^T z
inline double best_stage2(const ProblemInstance& inst, const Vector& z) {
  double best = inst.beta2[0].dot(z);
  for (int a = 1; a < inst.k2; ++a) best = std::max(best, inst.beta2[a].dot(z));
  return best;
}

constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665,
                                                 0.5688888888888889, 0.4786286704993665,
                                                 0.2369268850561891};

// d = 1: integrand is max_i (alpha_i + gamma_i e) over e in [lo, hi].
template <class F>
double gauss_panels(F&& f, double lo, double hi, int panels) {
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * width;
    double s = 0.0;
    for (std::size_t k = 0; k < kGaussNodes.size(); ++k)
      s += kGaussWeights[k] * f(mid + 0.5 * width * kGaussNodes[k]);
    total += 0.5 * width * s;
  }
  return total;
}

OracleValue expect_uniform_1d(const ProblemInstance& inst, double center, double lo, double hi,
                              double precision) {
  if (hi - lo <= 0.0) return {best_stage2(inst, Vector::Constant(1, center + lo)), 0.0, true};

  std::vector<double> alpha(inst.k2), gamma(inst.k2);
  for (int a = 0; a < inst.k2; ++a) {
    gamma[a] = inst.beta2[a](0);
    alpha[a] = gamma[a] * center;
  }
  auto f = [&](double e) {
    double best = alpha[0] + gamma[0] * e;
    for (int a = 1; a < inst.k2; ++a) best = std::max(best, alpha[a] + gamma[a] * e);
    return best;
  };

  std::vector<double> cuts = {lo, hi};
  for (int i = 0; i < inst.k2; ++i)
    for (int j = i + 1; j < inst.k2; ++j) {
      if (gamma[i] == gamma[j]) continue;
      const double e = (alpha[j] - alpha[i]) / (gamma[i] - gamma[j]);
      if (e > lo && e < hi) cuts.push_back(e);
    }
  std::sort(cuts.begin(), cuts.end());

  constexpr int kMaxPanels = 1 << 16;
  double integral = 0.0;
  double error = 0.0;
  bool ok = true;
  const double piece_tol = precision * (hi - lo) / static_cast<double>(cuts.size() - 1);
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c];
    const double b = cuts[c + 1];
    if (b <= a) continue;
    double coarse = gauss_panels(f, a, b, 1);
    double piece_err = 0.0;
    for (int panels = 2;; panels *= 2) {
      const double fine = gauss_panels(f, a, b, panels);
      piece_err = std::abs(fine - coarse);
      coarse = fine;
      if (piece_err <= piece_tol) break;
      if (panels >= kMaxPanels) {
        ok = false;
        break;
      }
    }
    integral += coarse;
    error += piece_err;
  }
  const double width = hi - lo;
  return {integral / width, error / width, ok};
}

// Radical inverse in base b.
double radical_inverse(unsigned long i, unsigned base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

constexpr std::array<unsigned, 20> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                              31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

OracleValue expect_uniform_qmc(const ProblemInstance& inst, const Vector& center, const UniformBox& box,
                               double precision) {
  const int d = inst.d;
  DTR_REQUIRE(d <= static_cast<int>(kPrimes.size()), "oracle_q1: QMC supports d <= 20");
  constexpr int kShifts = 16;
  constexpr unsigned long kMaxPoints = 1ul << 16;
  Rng shift_rng(0x5eed0fu);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vector> shifts(kShifts, Vector(d));
  for (auto& s : shifts)
    for (int i = 0; i < d; ++i) s(i) = unif(shift_rng);

  const Vector width = box.high - box.low;
  std::vector<double> sums(kShifts, 0.0);
  unsigned long used = 0;
  Vector z(d);
  for (unsigned long target = 1024;; target *= 2) {
    for (unsigned long i = used; i < target; ++i) {
      for (int r = 0; r < kShifts; ++r) {
        for (int k = 0; k < d; ++k) {
          double u = radical_inverse(i + 1, kPrimes[k]) + shifts[r](k);
          u -= std::floor(u);
          z(k) = center(k) + box.low(k) + width(k) * u;
        }
        sums[r] += best_stage2(inst, z);
      }
    }
    used = target;
    double mean = 0.0;
    for (double s : sums) mean += s / static_cast<double>(used);
    mean /= kShifts;
    double var = 0.0;
    for (double s : sums) {
      const double m = s / static_cast<double>(used);
      var += (m - mean) * (m - mean);
    }
    const double se = std::sqrt(var / (kShifts - 1) / kShifts);
    if (se <= precision) return {mean, se, true};
    if (target >= kMaxPoints) return {mean, se, false};
  }
}

OracleValue expect_next_value(const ProblemInstance& inst, const Vector& center, int a,
                              double precision) {
  const Distribution& eps = inst.eps[a - 1];
  if (const auto* fin = std::get_if<FiniteSupport>(&eps)) {
    double total = 0.0;
    for (std::size_t i = 0; i < fin->points.size(); ++i)
      total += fin->weights[i] * best_stage2(inst, center + fin->points[i]);
    return {total, 0.0, true};
  }
  const auto& box = std::get<UniformBox>(eps);
  if (inst.d == 1) return expect_uniform_1d(inst, center(0), box.low(0), box.high(0), precision);
  if ((box.high - box.low).cwiseAbs().maxCoeff() == 0.0)
    return {best_stage2(inst, center + box.low), 0.0, true};
  return expect_uniform_qmc(inst, center, box, precision);
}

// ---- JSON helpers ----

Vector vector_from_json(const nlohmann::json& j, int d, const std::string& field) {
  if (j.is_number()) {
    if (d != 1) throw SchemaError(field + ": expected an array of length " + std::to_string(d));
    return Vector::Constant(1, j.get<double>());
  }
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw SchemaError(field + ": expected an array of length " + std::to_string(d));
  Vector v(d);
  for (int i = 0; i < d; ++i) {
    if (!j[i].is_number()) throw SchemaError(field + ": entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

Vector box_side(const nlohmann::json& j, int d, const std::string& field) {
  if (j.is_number()) return Vector::Constant(d, j.get<double>());
  return vector_from_json(j, d, field);
}

// Row-major: nested rows [[r0...], ...] or a flat array of d*d values.
Matrix matrix_from_json(const nlohmann::json& j, int d, const std::string& field) {
  Matrix m(d, d);
  if (j.is_number() && d == 1) {
    m(0, 0) = j.get<double>();
    return m;
  }
  if (!j.is_array()) throw SchemaError(field + ": expected a matrix");
  if (static_cast<int>(j.size()) == d * d && (d == 1 ? !j[0].is_array() : j[0].is_number())) {
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = j[r * d + c].get<double>();
    return m;
  }
  if (static_cast<int>(j.size()) != d) throw SchemaError(field + ": expected " + std::to_string(d) + " rows");
  for (int r = 0; r < d; ++r) m.row(r) = vector_from_json(j[r], d, field + "/" + std::to_string(r)).transpose();
  return m;
}

Distribution distribution_from_json(const nlohmann::json& j, int d, const std::string& field) {
  if (!j.is_object() || !j.contains("kind")) throw SchemaError(field + ": expected an object with 'kind'");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "uniform_box") {
    UniformBox box;
    if (j.contains("half_width")) {
      box.high = box_side(j["half_width"], d, field + "/half_width");
      box.low = -box.high;
    } else {
      if (!j.contains("low") || !j.contains("high")) throw SchemaError(field + ": uniform_box needs half_width or low/high");
      box.low = box_side(j["low"], d, field + "/low");
      box.high = box_side(j["high"], d, field + "/high");
    }
    return box;
  }
  if (kind == "finite") {
    FiniteSupport fin;
    if (!j.contains("points") || !j["points"].is_array()) throw SchemaError(field + ": finite needs points");
    for (std::size_t i = 0; i < j["points"].size(); ++i)
      fin.points.push_back(vector_from_json(j["points"][i], d, field + "/points/" + std::to_string(i)));
    if (j.contains("weights")) {
      for (const auto& w : j["weights"]) fin.weights.push_back(w.get<double>());
    } else {
      fin.weights.assign(fin.points.size(), 1.0 / static_cast<double>(fin.points.size()));
    }
    const double total = std::accumulate(fin.weights.begin(), fin.weights.end(), 0.0);
    if (total > 0)
      for (double& w : fin.weights) w /= total;
    return fin;
  }
  throw SchemaError(field + ": unknown distribution kind '" + kind + "'");
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

nlohmann::json distribution_to_json(const Distribution& dist) {
  if (const auto* box = std::get_if<UniformBox>(&dist))
    return {{"kind", "uniform_box"}, {"low", vector_to_json(box->low)}, {"high", vector_to_json(box->high)}};
  const auto& fin = std::get<FiniteSupport>(dist);
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : fin.points) pts.push_back(vector_to_json(p));
  return {{"kind", "finite"}, {"points", pts}, {"weights", fin.weights}};
}

}  // namespace

void ProblemInstance::validate() const {
  if (d < 1) throw SchemaError("d must be >= 1");
  if (k1 < 2 || k2 < 2) throw SchemaError("k1 and k2 must be >= 2");
  if (static_cast<int>(beta1.size()) != k1) throw SchemaError("beta1 must have k1 entries");
  if (static_cast<int>(beta2.size()) != k2) throw SchemaError("beta2 must have k2 entries");
  if (static_cast<int>(bmat.size()) != k1) throw SchemaError("B must have k1 entries");
  if (static_cast<int>(eps.size()) != k1) throw SchemaError("eps must have k1 entries");
  for (const auto& b : beta1)
    if (b.size() != d) throw SchemaError("beta1 entry dimension mismatch");
  for (const auto& b : beta2)
    if (b.size() != d) throw SchemaError("beta2 entry dimension mismatch");
  for (const auto& b : bmat)
    if (b.rows() != d || b.cols() != d) throw SchemaError("B entry must be d x d");
  if (!(eta_sigma >= 0.0) || !std::isfinite(eta_sigma)) throw SchemaError("eta_sigma must be >= 0");
  for (int a = 0; a < k1; ++a) validate_distribution(eps[a], d, true, "eps/" + std::to_string(a));
  validate_distribution(x_dist, d, false, "x_dist");
}

ProblemInstance ProblemInstance::synthetic_1d() {
  ProblemInstance inst;
  inst.d = 1;
  inst.k1 = 2;
  inst.k2 = 2;
  inst.beta1 = {Vector::Constant(1, 5.0), Vector::Constant(1, 0.0)};
  inst.beta2 = {Vector::Constant(1, 1.0), Vector::Constant(1, 5.0)};
  inst.bmat = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  inst.eta_sigma = 0.1;
  const UniformBox unit{Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  inst.eps = {unit, unit};
  inst.x_dist = unit;
  return inst;
}

ProblemInstance instance_from_json(const nlohmann::json& j) {
  try {
    ProblemInstance inst;
    for (const char* key : {"d", "k1", "k2", "beta1", "beta2", "B", "eps", "x_dist"})
      if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    inst.d = j["d"].get<int>();
    inst.k1 = j["k1"].get<int>();
    inst.k2 = j["k2"].get<int>();
    if (inst.d < 1) throw SchemaError("d must be >= 1");
    const auto read_vectors = [&](const char* key, int count) {
      const auto& arr = j[key];
      if (!arr.is_array() || static_cast<int>(arr.size()) != count)
        throw SchemaError(std::string(key) + ": expected " + std::to_string(count) + " entries");
      std::vector<Vector> out;
      for (int a = 0; a < count; ++a)
        out.push_back(vector_from_json(arr[a], inst.d, std::string(key) + "/" + std::to_string(a)));
      return out;
    };
    inst.beta1 = read_vectors("beta1", inst.k1);
    inst.beta2 = read_vectors("beta2", inst.k2);
    const auto& bj = j["B"];
    if (!bj.is_array() || static_cast<int>(bj.size()) != inst.k1)
      throw SchemaError("B: expected k1 matrices");
    for (int a = 0; a < inst.k1; ++a)
      inst.bmat.push_back(matrix_from_json(bj[a], inst.d, "B/" + std::to_string(a)));
    inst.eta_sigma = j.value("eta_sigma", 0.0);
    const auto noise = j.value("eta_noise", std::string("gaussian"));
    if (noise == "gaussian")
      inst.eta_kind = RewardNoise::gaussian;
    else if (noise == "uniform")
      inst.eta_kind = RewardNoise::uniform;
    else
      throw SchemaError("eta_noise must be 'gaussian' or 'uniform'");
    const auto& ej = j["eps"];
    if (ej.is_array()) {
      if (static_cast<int>(ej.size()) != inst.k1) throw SchemaError("eps: expected k1 entries");
      for (int a = 0; a < inst.k1; ++a)
        inst.eps.push_back(distribution_from_json(ej[a], inst.d, "eps/" + std::to_string(a)));
    } else {
      inst.eps.assign(inst.k1, distribution_from_json(ej, inst.d, "eps"));
    }
    inst.x_dist = distribution_from_json(j["x_dist"], inst.d, "x_dist");
    inst.validate();
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("instance JSON: ") + e.what());
  }
}

nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json j;
  j["d"] = inst.d;
  j["k1"] = inst.k1;
  j["k2"] = inst.k2;
  for (const auto& b : inst.beta1) j["beta1"].push_back(vector_to_json(b));
  for (const auto& b : inst.beta2) j["beta2"].push_back(vector_to_json(b));
  for (const auto& b : inst.bmat) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < inst.d; ++r) rows.push_back(vector_to_json(b.row(r).transpose()));
    j["B"].push_back(rows);
  }
  j["eta_sigma"] = inst.eta_sigma;
  j["eta_noise"] = inst.eta_kind == RewardNoise::gaussian ? "gaussian" : "uniform";
  for (const auto& e : inst.eps) j["eps"].push_back(distribution_to_json(e));
  j["x_dist"] = distribution_to_json(inst.x_dist);
  return j;
}

ProblemInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open instance file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return instance_from_json(j);
}

Vector sample_from(const Distribution& dist, int d, Rng& rng) {
  if (const auto* box = std::get_if<UniformBox>(&dist)) {
    Vector v(d);
    for (int i = 0; i < d; ++i) {
      std::uniform_real_distribution<double> u(box->low(i), box->high(i));
      v(i) = box->low(i) == box->high(i) ? box->low(i) : u(rng);
    }
    return v;
  }
  const auto& fin = std::get<FiniteSupport>(dist);
  if (fin.points.size() == 1) return fin.points.front();
  std::discrete_distribution<std::size_t> pick(fin.weights.begin(), fin.weights.end());
  return fin.points[pick(rng)];
}

Vector sample_context(const ProblemInstance& inst, Rng& rng) {
  return sample_from(inst.x_dist, inst.d, rng);
}

namespace {
double reward_noise(const ProblemInstance& inst, Rng& rng) {
  if (inst.eta_sigma == 0.0) return 0.0;
  if (inst.eta_kind == RewardNoise::gaussian) {
    std::normal_distribution<double> n(0.0, inst.eta_sigma);
    return n(rng);
  }
  const double half = inst.eta_sigma * std::sqrt(3.0);
  std::uniform_real_distribution<double> u(-half, half);
  return u(rng);
}
}  // namespace

Stage1Outcome step_stage1(const ProblemInstance& inst, const Vector& x1, int a1, Rng& rng) {
  check_arm(a1, inst.k1, "step_stage1");
  check_dim(x1, inst.d, "step_stage1");
  Stage1Outcome out;
  out.y1 = inst.beta1[a1 - 1].dot(x1) + reward_noise(inst, rng);
  out.x2 = inst.bmat[a1 - 1].transpose() * x1 + sample_from(inst.eps[a1 - 1], inst.d, rng);
  return out;
}

double step_stage2(const ProblemInstance& inst, const Vector& x2, int a2, Rng& rng) {
  check_arm(a2, inst.k2, "step_stage2");
  check_dim(x2, inst.d, "step_stage2");
  return inst.beta2[a2 - 1].dot(x2) + reward_noise(inst, rng);
}

double oracle_q2(const ProblemInstance& inst, const Vector& x2, int a) {
  check_arm(a, inst.k2, "oracle_q2");
  check_dim(x2, inst.d, "oracle_q2");
  return inst.beta2[a - 1].dot(x2);
}

OracleValue oracle_q1(const ProblemInstance& inst, const Vector& x1, int a, double precision) {
  check_arm(a, inst.k1, "oracle_q1");
  check_dim(x1, inst.d, "oracle_q1");
  const Vector center = inst.bmat[a - 1].transpose() * x1;
  OracleValue v = expect_next_value(inst, center, a, precision);
  v.value += inst.beta1[a - 1].dot(x1);
  return v;
}

OracleAction oracle_action(const ProblemInstance& inst, int stage, const Vector& context,
                           double precision) {
  DTR_REQUIRE(stage == 1 || stage == 2, "oracle_action: stage must be 1 or 2");
  const int arms = stage == 1 ? inst.k1 : inst.k2;
  std::vector<double> values(arms), errors(arms, 0.0);
  for (int a = 1; a <= arms; ++a) {
    if (stage == 1) {
      const auto q = oracle_q1(inst, context, a, precision);
      values[a - 1] = q.value;
      errors[a - 1] = q.error;
    } else {
      values[a - 1] = oracle_q2(inst, context, a);
    }
  }
  OracleAction out;
  out.arm = 1;
  for (int a = 2; a <= arms; ++a)
    if (values[a - 1] > values[out.arm - 1]) out.arm = a;
  for (int a = 1; a <= arms; ++a) {
    if (a == out.arm) continue;
    if (values[out.arm - 1] - values[a - 1] < errors[out.arm - 1] + errors[a - 1]) out.near_tie = true;
  }
  return out;
}

StepRegret per_step_regret(const ProblemInstance& inst, const RoundRecord& record, double precision) {
  check_arm(record.a1, inst.k1, "per_step_regret");
  check_arm(record.a2, inst.k2, "per_step_regret");
  StepRegret out;

  double best1 = 0.0, best1_err = 0.0, taken1 = 0.0, taken1_err = 0.0;
  for (int a = 1; a <= inst.k1; ++a) {
    const auto q = oracle_q1(inst, record.x1, a, precision);
    out.within_precision = out.within_precision && q.within_precision;
    if (a == 1 || q.value > best1) {
      best1 = q.value;
      best1_err = q.error;
    }
    if (a == record.a1) {
      taken1 = q.value;
      taken1_err = q.error;
    }
  }
  double best2 = oracle_q2(inst, record.x2, 1);
  for (int a = 2; a <= inst.k2; ++a) best2 = std::max(best2, oracle_q2(inst, record.x2, a));
  const double taken2 = oracle_q2(inst, record.x2, record.a2);

  out.regret = (best1 - taken1) + (best2 - taken2);
  out.error = best1_err + taken1_err;
  return out;
}

std::vector<DecisionSwitch> stage1_decision_switches(const ProblemInstance& inst, int grid,
                                                     double precision) {
  DTR_REQUIRE(inst.d == 1, "stage1_decision_switches: d must be 1");
  DTR_REQUIRE(grid >= 2, "stage1_decision_switches: grid too small");
  double lo = 0.0, hi = 0.0;
  if (const auto* box = std::get_if<UniformBox>(&inst.x_dist)) {
    lo = box->low(0);
    hi = box->high(0);
  } else {
    const auto& fin = std::get<FiniteSupport>(inst.x_dist);
    lo = hi = fin.points.front()(0);
    for (const auto& p : fin.points) {
      lo = std::min(lo, p(0));
      hi = std::max(hi, p(0));
    }
  }
  const auto arm_at = [&](double x) {
    return oracle_action(inst, 1, Vector::Constant(1, x), precision).arm;
  };
  std::vector<DecisionSwitch> out;
  double prev_x = lo;
  int prev_arm = arm_at(lo);
  for (int i = 1; i <= grid; ++i) {
    const double x = lo + (hi - lo) * i / grid;
    const int arm = arm_at(x);
    if (arm != prev_arm) {
      double l = prev_x, r = x;
      for (int it = 0; it < 60 && r - l > 1e-12; ++it) {
        const double m = 0.5 * (l + r);
        (arm_at(m) == prev_arm ? l : r) = m;
      }
      out.push_back({0.5 * (l + r), prev_arm, arm});
    }
    prev_x = x;
    prev_arm = arm;
  }
  return out;
}

}  // namespace dtr
