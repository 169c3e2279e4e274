#include "dtr/estimators.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "dtr/errors.hpp"
#include "dtr/kernels.hpp"

namespace dtr {

void PairStore::push(const Vector& x1, const Vector& x2) {
  DTR_REQUIRE(x1.size() == d_ && x2.size() == d_, "PairStore: pair dimension mismatch");
  x1_.insert(x1_.end(), x1.data(), x1.data() + d_);
  x2_.insert(x2_.end(), x2.data(), x2.data() + d_);
}

const std::optional<Matrix>& CachedOls::solution() const {
  if (!fresh_) {
    solution_ = state_.try_solve();
    fresh_ = true;
  }
  return solution_;
}

EstimatorBank::EstimatorBank(BankOptions options) : opts_(std::move(options)) {
  DTR_REQUIRE(opts_.d >= 1, "EstimatorBank: d must be >= 1");
  DTR_REQUIRE(opts_.k1 >= 1 && opts_.k2 >= 1, "EstimatorBank: arm counts must be positive");
  if (opts_.known_arm)
    DTR_REQUIRE(*opts_.known_arm >= 1 && *opts_.known_arm <= opts_.k2,
                "EstimatorBank: known arm out of range");
  const int d = opts_.d;
  for (int a = 0; a < opts_.k1; ++a) {
    forced1_.emplace_back(d, 1 + d);
    all1_.emplace_back(d, 1 + d);
    forced_pairs_.emplace_back(d);
    restricted_pairs_.emplace_back(d);
    all_pairs_.emplace_back(d);
  }
  for (int a = 1; a <= opts_.k2; ++a) {
    forced2_.emplace_back(d, 1);
    all2_.emplace_back(d, 1);
    if (!is_known_arm(a)) estimated2_.push_back(a);
  }
  DTR_REQUIRE(!estimated2_.empty(), "EstimatorBank: no second-stage arm left to estimate");
}

int EstimatorBank::forced_stage2_arm(int slot) const {
  const int n = static_cast<int>(estimated2_.size());
  return estimated2_[(slot - 1) % n];
}

void EstimatorBank::check_record(const RoundRecord& record) const {
  DTR_REQUIRE(record.a1 >= 1 && record.a1 <= opts_.k1, "EstimatorBank: a1 out of range");
  DTR_REQUIRE(record.a2 >= 1 && record.a2 <= opts_.k2, "EstimatorBank: a2 out of range");
  DTR_REQUIRE(record.x1.size() == opts_.d && record.x2.size() == opts_.d,
              "EstimatorBank: record dimension mismatch");
}

void EstimatorBank::update_all(const RoundRecord& r) {
  Vector target(1 + opts_.d);
  target(0) = r.y1;
  target.tail(opts_.d) = r.x2;
  all1_[r.a1 - 1].update(r.x1, target);
  if (!is_known_arm(r.a2)) all2_[r.a2 - 1].update(r.x2, r.y2);
  all_pairs_[r.a1 - 1].push(r.x1, r.x2);
}

void EstimatorBank::record_forced(long t, int slot, const RoundRecord& r) {
  check_record(r);
  DTR_REQUIRE(t == t_ + 1, "record_forced: rounds must be recorded in order");
  DTR_REQUIRE(opts_.schedule.has_value(), "record_forced: bank has no forced schedule");
  const auto scheduled = opts_.schedule->arm_at(t);
  DTR_REQUIRE(scheduled && *scheduled == slot,
              "record_forced: round " + std::to_string(t) + " is not forced for slot " +
                  std::to_string(slot));
  DTR_REQUIRE(r.a1 == forced_stage1_arm(slot) && r.a2 == forced_stage2_arm(slot),
              "record_forced: record arms do not match the forced slot");

  Vector target(1 + opts_.d);
  target(0) = r.y1;
  target.tail(opts_.d) = r.x2;
  forced1_[r.a1 - 1].update(r.x1, target);
  forced2_[r.a2 - 1].update(r.x2, r.y2);
  forced_pairs_[r.a1 - 1].push(r.x1, r.x2);
  update_all(r);
  t_ = t;
}

void EstimatorBank::record_regular(long t, const RoundRecord& r, bool stage1_gap_flag) {
  check_record(r);
  DTR_REQUIRE(t == t_ + 1, "record_regular: rounds must be recorded in order");
  if (opts_.schedule)
    DTR_REQUIRE(!opts_.schedule->arm_at(t).has_value(),
                "record_regular: round " + std::to_string(t) + " is a forced round");
  update_all(r);
  if (stage1_gap_flag) restricted_pairs_[r.a1 - 1].push(r.x1, r.x2);
  t_ = t;
}

const Matrix& EstimatorBank::solved(const CachedOls& ols, const char* what) const {
  const auto& sol = ols.solution();
  if (!sol) throw EstimatorUnavailable(std::string(what) + " is not identifiable yet");
  return *sol;
}

Vector EstimatorBank::beta_tilde(int stage, int a) const {
  DTR_REQUIRE(stage == 1 || stage == 2, "beta_tilde: stage must be 1 or 2");
  if (stage == 1) {
    DTR_REQUIRE(a >= 1 && a <= opts_.k1, "beta_tilde: arm out of range");
    return solved(forced1_[a - 1], "forced-sample stage-1 fit").col(0);
  }
  DTR_REQUIRE(a >= 1 && a <= opts_.k2 && !is_known_arm(a), "beta_tilde: arm out of range");
  return solved(forced2_[a - 1], "forced-sample stage-2 fit").col(0);
}

Matrix EstimatorBank::b_tilde(int a) const {
  DTR_REQUIRE(a >= 1 && a <= opts_.k1, "b_tilde: arm out of range");
  return solved(forced1_[a - 1], "forced-sample transition fit").rightCols(opts_.d);
}

Vector EstimatorBank::beta_hat(int stage, int a) const {
  DTR_REQUIRE(stage == 1 || stage == 2, "beta_hat: stage must be 1 or 2");
  if (stage == 1) {
    DTR_REQUIRE(a >= 1 && a <= opts_.k1, "beta_hat: arm out of range");
    return solved(all1_[a - 1], "all-sample stage-1 fit").col(0);
  }
  DTR_REQUIRE(a >= 1 && a <= opts_.k2 && !is_known_arm(a), "beta_hat: arm out of range");
  return solved(all2_[a - 1], "all-sample stage-2 fit").col(0);
}

Matrix EstimatorBank::b_hat(int a) const {
  DTR_REQUIRE(a >= 1 && a <= opts_.k1, "b_hat: arm out of range");
  return solved(all1_[a - 1], "all-sample transition fit").rightCols(opts_.d);
}

double EstimatorBank::stage1_value(Source src, const PairStore& pairs, const Vector& x, int a) const {
  DTR_REQUIRE(a >= 1 && a <= opts_.k1, "stage-1 Q estimate: arm out of range");
  DTR_REQUIRE(x.size() == opts_.d, "stage-1 Q estimate: context dimension mismatch");
  if (pairs.empty()) throw EstimatorUnavailable("stage-1 Q estimate: no residual pairs");
  const auto& s1 = src == Source::forced ? forced1_ : all1_;
  const auto& s2 = src == Source::forced ? forced2_ : all2_;
  const Matrix& fit1 = solved(s1[a - 1], "stage-1 fit");
  const int d = opts_.d;
  const auto beta1 = fit1.col(0);
  const auto bmat = fit1.rightCols(d);
  const double reward1 = beta1.dot(x);

  const std::size_t k = estimated2_.size() + (opts_.known_arm ? 1 : 0);
  std::vector<double> offset, u, w;
  offset.reserve(k);
  u.reserve(k * d);
  w.reserve(k * d);
  for (int a2 : estimated2_) {
    const Vector b2 = solved(s2[a2 - 1], "stage-2 fit").col(0);
    const Vector bb = bmat * b2;
    offset.push_back(bb.dot(x));
    u.insert(u.end(), b2.data(), b2.data() + d);
    w.insert(w.end(), bb.data(), bb.data() + d);
  }
  if (opts_.known_arm) {
    offset.push_back(reward1);
    u.insert(u.end(), d, 0.0);
    w.insert(w.end(), d, 0.0);
  }
  kernels::ResidualTerm term{pairs.x1(), pairs.x2(), offset, u, w, d};
  return reward1 + kernels::residual_max_mean(term);
}

double EstimatorBank::q_tilde(int stage, const Vector& x, int a) const {
  DTR_REQUIRE(stage == 1 || stage == 2, "q_tilde: stage must be 1 or 2");
  if (stage == 1) return stage1_value(Source::forced, forced_pairs(a), x, a);
  DTR_REQUIRE(x.size() == opts_.d, "q_tilde: context dimension mismatch");
  return beta_tilde(2, a).dot(x);
}

QValue EstimatorBank::q_hat(int stage, const Vector& x, int a) const {
  DTR_REQUIRE(stage == 1 || stage == 2, "q_hat: stage must be 1 or 2");
  if (stage == 1) {
    DTR_REQUIRE(a >= 1 && a <= opts_.k1, "q_hat: arm out of range");
    if (restricted_pairs(a).empty()) return QValue::plus_infinity();
    return QValue::finite(stage1_value(Source::all, restricted_pairs(a), x, a));
  }
  DTR_REQUIRE(x.size() == opts_.d, "q_hat: context dimension mismatch");
  return QValue::finite(beta_hat(2, a).dot(x));
}

double EstimatorBank::q_hat_greedy(const Vector& x, int a) const {
  DTR_REQUIRE(a >= 1 && a <= opts_.k1, "q_hat_greedy: arm out of range");
  return stage1_value(Source::all, all_pairs(a), x, a);
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  void doubles(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
  void ols(const linalg::OlsState& s) {
    doubles(s.sigma().data(), static_cast<std::size_t>(s.sigma().size()));
    doubles(s.cross().data(), static_cast<std::size_t>(s.cross().size()));
    const long n = s.count();
    bytes(&n, sizeof n);
  }
  void pairs(const PairStore& p) {
    doubles(p.x1().data(), p.x1().size());
    doubles(p.x2().data(), p.x2().size());
    const std::size_t n = p.size();
    bytes(&n, sizeof n);
  }
};

}  // namespace

std::uint64_t EstimatorBank::fingerprint() const {
  Fnv f;
  f.bytes(&t_, sizeof t_);
  for (const auto& s : forced1_) f.ols(s.state());
  for (const auto& s : all1_) f.ols(s.state());
  for (const auto& s : forced2_) f.ols(s.state());
  for (const auto& s : all2_) f.ols(s.state());
  for (const auto& p : forced_pairs_) f.pairs(p);
  for (const auto& p : restricted_pairs_) f.pairs(p);
  for (const auto& p : all_pairs_) f.pairs(p);
  return f.h;
}

}  // namespace dtr
