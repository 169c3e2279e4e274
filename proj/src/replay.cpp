#include "dtr/replay.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dtr/errors.hpp"
#include "dtr/format.hpp"

namespace dtr {

void ReplayDataset::validate() const {
  if (d < 1) throw SchemaError("dataset: d must be >= 1");
  if (k1 < 1 || k2 < 1) throw SchemaError("dataset: arm counts must be positive");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i].round;
    const std::string where = "dataset record " + std::to_string(i + 1) + ": ";
    if (r.x1.size() != d || r.x2.size() != d) throw SchemaError(where + "context dimension differs from d");
    if (r.a1 < 1 || r.a1 > k1) throw SchemaError(where + "a1 outside 1.." + std::to_string(k1));
    if (r.a2 < 1 || r.a2 > k2) throw SchemaError(where + "a2 outside 1.." + std::to_string(k2));
    if (const auto& p = records[i].propensity; p && !(*p > 0.0 && *p <= 1.0))
      throw SchemaError(where + "propensity outside (0, 1]");
  }
}

bool ReplayDataset::all_have_propensity() const {
  return std::all_of(records.begin(), records.end(), [](const LoggedRecord& r) { return r.propensity.has_value(); });
}

// ---- CSV ----

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t row, std::size_t col, const std::string& name) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError(row, col, name + ": expected a finite number, got '" + std::string(s) + "'");
  return v;
}

int parse_arm(std::string_view s, std::size_t row, std::size_t col, const std::string& name) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 1)
    throw ParseError(row, col, name + ": expected a positive integer arm, got '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> expected_header(int d, bool with_p) {
  std::vector<std::string> h;
  for (int i = 0; i < d; ++i) h.push_back("x1_" + std::to_string(i));
  h.push_back("a1");
  h.push_back("y1");
  for (int i = 0; i < d; ++i) h.push_back("x2_" + std::to_string(i));
  h.push_back("a2");
  h.push_back("y2");
  if (with_p) h.push_back("p");
  return h;
}

}  // namespace

ReplayDataset parse_dataset(std::istream& in, const DatasetSchema& schema, std::vector<std::string>* warnings) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 1, "missing header row");
  const auto header = split(trim(line));
  int d = 0;
  while (d < static_cast<int>(header.size()) && header[d] == "x1_" + std::to_string(d)) ++d;
  if (d == 0) throw ParseError(1, 1, "header must start with x1_0");
  bool with_p = false;
  const auto plain = expected_header(d, false);
  const auto full = expected_header(d, true);
  const auto matches = [&](const std::vector<std::string>& want) {
    if (want.size() != header.size()) return false;
    for (std::size_t i = 0; i < want.size(); ++i)
      if (header[i] != want[i]) return false;
    return true;
  };
  if (matches(full))
    with_p = true;
  else if (!matches(plain))
    throw ParseError(1, 1, "header does not follow x1_0..x1_{d-1},a1,y1,x2_0..x2_{d-1},a2,y2[,p]");
  if (schema.d != 0 && schema.d != d)
    throw SchemaError("dataset has d = " + std::to_string(d) + " but " + std::to_string(schema.d) + " was expected");

  ReplayDataset data;
  data.d = d;
  const std::size_t ncol = header.size();
  std::size_t row = 1;
  int max_a1 = 0, max_a2 = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != ncol)
      throw ParseError(row, std::min(cells.size(), ncol) + 1,
                       "expected " + std::to_string(ncol) + " fields, found " + std::to_string(cells.size()));
    LoggedRecord rec;
    RoundRecord& r = rec.round;
    r.x1.resize(d);
    r.x2.resize(d);
    std::size_t c = 0;
    const auto name = [&](std::size_t i) { return full[i]; };
    for (int i = 0; i < d; ++i, ++c) r.x1(i) = parse_double(cells[c], row, c + 1, name(c));
    r.a1 = parse_arm(cells[c], row, c + 1, name(c));
    ++c;
    r.y1 = parse_double(cells[c], row, c + 1, name(c));
    ++c;
    for (int i = 0; i < d; ++i, ++c) r.x2(i) = parse_double(cells[c], row, c + 1, name(c));
    r.a2 = parse_arm(cells[c], row, c + 1, name(c));
    ++c;
    r.y2 = parse_double(cells[c], row, c + 1, name(c));
    ++c;
    if (with_p) {
      const double p = parse_double(cells[c], row, c + 1, "p");
      if (!(p > 0.0 && p <= 1.0)) throw ParseError(row, c + 1, "p: propensity must lie in (0, 1]");
      rec.propensity = p;
    }
    max_a1 = std::max(max_a1, r.a1);
    max_a2 = std::max(max_a2, r.a2);
    data.records.push_back(std::move(rec));
  }
  data.k1 = schema.k1 != 0 ? schema.k1 : std::max(2, max_a1);
  data.k2 = schema.k2 != 0 ? schema.k2 : std::max(2, max_a2);
  if (data.records.empty() && warnings) warnings->push_back("dataset has a header but no records");
  data.validate();
  return data;
}

ReplayDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in, schema, warnings);
}

void write_dataset(std::ostream& out, const ReplayDataset& data, bool with_propensity) {
  const auto header = expected_header(data.d, with_propensity);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& rec : data.records) {
    const auto& r = rec.round;
    for (int i = 0; i < data.d; ++i) out << format_double(r.x1(i)) << ',';
    out << r.a1 << ',' << format_double(r.y1) << ',';
    for (int i = 0; i < data.d; ++i) out << format_double(r.x2(i)) << ',';
    out << r.a2 << ',' << format_double(r.y2);
    if (with_propensity) {
      DTR_REQUIRE(rec.propensity.has_value(), "write_dataset: record without propensity");
      out << ',' << format_double(*rec.propensity);
    }
    out << '\n';
  }
}

// ---- propensities ----

namespace {

ComponentSpec component_from_json(const nlohmann::json& j, const std::string& field) {
  ComponentSpec c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  c.columns = j.value("columns", std::vector<std::string>{});
  c.interactions = j.value("interactions", false);
  c.intercept = j.value("intercept", true);
  return c;
}

nlohmann::json component_to_json(const ComponentSpec& c) {
  return {{"columns", c.columns}, {"interactions", c.interactions}, {"intercept", c.intercept}};
}

double column_value(const std::string& name, const RoundRecord& r) {
  if (name == "y1") return r.y1;
  if (name == "a1") return static_cast<double>(r.a1);
  const auto parse_index = [&](std::string_view prefix, const Vector& v) -> std::optional<double> {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    int i = -1;
    const auto s = std::string_view(name).substr(prefix.size());
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
    if (ec != std::errc() || ptr != s.data() + s.size() || i < 0 || i >= v.size())
      throw ConfigError("propensity/columns", "unknown column '" + name + "'");
    return v(i);
  };
  if (auto v = parse_index("x1_", r.x1)) return *v;
  if (auto v = parse_index("x2_", r.x2)) return *v;
  throw ConfigError("propensity/columns", "unknown column '" + name + "'");
}

}  // namespace

PropensitySpec propensity_spec_from_json(const nlohmann::json& j, const std::string& field) {
  PropensitySpec s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  try {
    if (j.contains("stage1")) s.stage1 = component_from_json(j["stage1"], field + "/stage1");
    if (j.contains("stay")) s.stay = component_from_json(j["stay"], field + "/stay");
    if (j.contains("stage2")) s.stage2 = component_from_json(j["stage2"], field + "/stage2");
    if (j.contains("absent_arm") && !j["absent_arm"].is_null()) s.absent_arm = j["absent_arm"].get<int>();
    s.floor = j.value("floor", s.floor);
    s.override_supplied = j.value("override", s.override_supplied);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(field, e.what());
  }
  if (!(s.floor > 0.0 && s.floor <= 1.0)) throw ConfigError(field + "/floor", "must lie in (0, 1]");
  return s;
}

nlohmann::json propensity_spec_to_json(const PropensitySpec& s) {
  nlohmann::json j{{"stage1", component_to_json(s.stage1)},
                   {"stay", component_to_json(s.stay)},
                   {"stage2", component_to_json(s.stage2)},
                   {"floor", s.floor},
                   {"override", s.override_supplied}};
  if (s.absent_arm) j["absent_arm"] = *s.absent_arm;
  return j;
}

Vector component_features(const ComponentSpec& spec, const RoundRecord& r) {
  std::vector<double> base;
  for (const auto& c : spec.columns) base.push_back(column_value(c, r));
  std::vector<double> f;
  if (spec.intercept) f.push_back(1.0);
  f.insert(f.end(), base.begin(), base.end());
  if (spec.interactions)
    for (std::size_t i = 0; i < base.size(); ++i)
      for (std::size_t k = i + 1; k < base.size(); ++k) f.push_back(base[i] * base[k]);
  if (f.empty()) throw ConfigError("propensity", "a component needs an intercept or at least one column");
  return Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
}

PropensityReport fit_propensities(ReplayDataset& data, const PropensitySpec& spec) {
  PropensityReport report;
  if (!spec.override_supplied && !data.records.empty() && data.all_have_propensity()) {
    report.warnings.push_back("every record carries a propensity; fit skipped");
    return report;
  }
  report.fitted = true;
  if (spec.absent_arm && (*spec.absent_arm < 1 || *spec.absent_arm > data.k2))
    throw ConfigError("propensity/absent_arm", "outside the second-stage arm range");
  if (data.k1 != 2)
    throw SchemaError("propensity fitting models binary stage-1 treatment; supply a p column for k1 = " +
                      std::to_string(data.k1));
  const int treated2 = data.k2 - (spec.absent_arm ? 1 : 0);
  if (treated2 != 2)
    throw SchemaError("propensity fitting models a binary stage-2 treatment; supply a p column");
  int first2 = 1;
  if (spec.absent_arm && *spec.absent_arm == 1) first2 = 2;

  const auto stays = [&](const RoundRecord& r) { return !spec.absent_arm || r.a2 != *spec.absent_arm; };
  const auto& recs = data.records;
  std::vector<double> prob(recs.size(), 1.0);
  const char* names[3] = {"stage1", "stay", "stage2"};

  // component index, row filter, label
  const auto fit_component = [&](int idx, const ComponentSpec& cs, auto&& include, auto&& label) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < recs.size(); ++i)
      if (include(recs[i].round)) rows.push_back(i);
    ComponentReport& rep = report.components[idx];
    if (rows.empty()) {
      report.warnings.push_back(std::string(names[idx]) + " component has no applicable rows; factor 1 used");
      return;
    }
    const Eigen::Index p = component_features(cs, recs[rows[0]].round).size();
    if (static_cast<Eigen::Index>(rows.size()) < p) {
      report.warnings.push_back(std::string(names[idx]) + " component has fewer rows than features; factor 1 used");
      return;
    }
    Matrix features(static_cast<Eigen::Index>(rows.size()), p);
    Vector labels(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      features.row(static_cast<Eigen::Index>(k)) = component_features(cs, recs[rows[k]].round).transpose();
      labels(static_cast<Eigen::Index>(k)) = label(recs[rows[k]].round) ? 1.0 : 0.0;
    }
    const auto fit = linalg::logistic_fit(features, labels);
    rep.applied = true;
    rep.separation = fit.separation;
    rep.converged = fit.converged;
    rep.coefficients = fit.coefficients;
    if (fit.separation)
      report.warnings.push_back(std::string(names[idx]) + " component: logistic separation, coefficients clamped");
    else if (!fit.converged)
      report.warnings.push_back(std::string(names[idx]) + " component: logistic fit did not converge");
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double s = linalg::sigmoid(features.row(static_cast<Eigen::Index>(k)).dot(fit.coefficients));
      prob[rows[k]] *= labels(static_cast<Eigen::Index>(k)) == 1.0 ? s : 1.0 - s;
    }
  };

  fit_component(0, spec.stage1, [](const RoundRecord&) { return true; },
                [](const RoundRecord& r) { return r.a1 == 1; });
  if (spec.absent_arm) {
    fit_component(1, spec.stay, [](const RoundRecord&) { return true; }, stays);
  } else {
    report.warnings.push_back("stay component disabled (no absent_arm); factor 1 used");
  }
  fit_component(2, spec.stage2, stays, [&](const RoundRecord& r) { return r.a2 == first2; });

  for (std::size_t i = 0; i < recs.size(); ++i) data.records[i].propensity = std::max(prob[i], spec.floor);
  return report;
}

// ---- bootstrap and replay ----

long duplication_count(double p, double floor_value) {
  DTR_REQUIRE(p > 0.0 && p <= 1.0, "duplication_count: propensity must lie in (0, 1]");
  DTR_REQUIRE(floor_value > 0.0 && floor_value <= 1.0, "duplication_count: floor must lie in (0, 1]");
  return static_cast<long>(std::floor(1.0 / std::max(p, floor_value)));
}

std::vector<LoggedRecord> bootstrap_uniformize(const ReplayDataset& data, Rng& rng, double floor_value) {
  std::vector<LoggedRecord> out;
  for (const auto& rec : data.records) {
    DTR_REQUIRE(rec.propensity.has_value(), "bootstrap_uniformize: record without propensity");
    const long copies = duplication_count(*rec.propensity, floor_value);
    for (long c = 0; c < copies; ++c) out.push_back(rec);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

ReplayResult replay(Policy& policy, std::span<const LoggedRecord> stream, long T) {
  DTR_REQUIRE(T >= 1, "replay: T must be >= 1");
  ReplayResult res;
  double total = 0.0;
  for (const auto& rec : stream) {
    if (res.matched == T) break;
    ++res.consumed;
    const RoundRecord& r = rec.round;
    if (policy.choose_stage1(r.x1) != r.a1) continue;
    if (policy.choose_stage2(r.y1, r.x2) != r.a2) continue;
    policy.finish_round(r);
    total += r.y1 + r.y2;
    ++res.matched;
  }
  if (res.matched == 0)
    throw EvaluationFailed("replay: no logged record matched the policy's choices (" +
                           std::to_string(res.consumed) + " consumed)");
  res.partial = res.matched < T;
  res.average = total / static_cast<double>(res.matched);
  return res;
}

}  // namespace dtr
