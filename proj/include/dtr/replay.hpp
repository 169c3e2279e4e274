#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtr/environment.hpp"
#include "dtr/linalg.hpp"
#include "dtr/policies.hpp"

namespace dtr {

struct LoggedRecord {
  RoundRecord round;
  std::optional<double> propensity;  // in (0, 1] when present
};

struct ReplayDataset {
  int d = 1;
  int k1 = 2;
  int k2 = 2;
  std::vector<LoggedRecord> records;

  // Throws SchemaError on shape or arm-range inconsistencies.
  void validate() const;
  bool all_have_propensity() const;
};

// Shape hints for loading. A zero field is inferred from the file: d from
// the header, arm counts from the largest arm seen (at least 2).
struct DatasetSchema {
  int d = 0;
  int k1 = 0;
  int k2 = 0;
};

// CSV with header `x1_0..x1_{d-1},a1,y1,x2_0..x2_{d-1},a2,y2[,p]`. ParseError
// rows are file line numbers (the header is line 1). Warnings, such as an empty
// file, are appended to `warnings` when given.
ReplayDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema = {},
                           std::vector<std::string>* warnings = nullptr);
ReplayDataset parse_dataset(std::istream& in, const DatasetSchema& schema = {},
                            std::vector<std::string>* warnings = nullptr);
void write_dataset(std::ostream& out, const ReplayDataset& data, bool with_propensity);

// One logistic component. `columns` name record fields (x1_i, x2_i, y1, a1);
// `interactions` adds every pairwise product of the listed columns.
struct ComponentSpec {
  std::vector<std::string> columns;
  bool interactions = false;
  bool intercept = true;
};

// Stage-1 treatment, stay (a2 differs from `absent_arm`) and stage-2
// treatment models. Binary components only: the modelled event is a1 == 1,
// a2 != absent_arm, and a2 == lowest non-absent arm respectively.
struct PropensitySpec {
  ComponentSpec stage1;
  ComponentSpec stay;
  ComponentSpec stage2;
  std::optional<int> absent_arm;
  double floor = 0.01;
  // Refit even if every record already carries a propensity.
  bool override_supplied = false;
};

PropensitySpec propensity_spec_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json propensity_spec_to_json(const PropensitySpec& spec);

struct ComponentReport {
  bool applied = false;
  bool separation = false;
  bool converged = true;
  Vector coefficients;
};

struct PropensityReport {
  bool fitted = false;  // false when supplied values were passed through
  std::array<ComponentReport, 3> components;  // stage1, stay, stage2
  std::vector<std::string> warnings;
};

// Feature row of a component for one record; exposed for tests.
Vector component_features(const ComponentSpec& spec, const RoundRecord& r);

// Fills every record's propensity with the product of the component
// probabilities of its observed actions, clamped below at spec.floor.
PropensityReport fit_propensities(ReplayDataset& data, const PropensitySpec& spec);

inline constexpr double kDefaultPropensityFloor = 0.01;

// floor(1 / max(p, floor_value)). p must lie in (0, 1].
long duplication_count(double p, double floor_value = kDefaultPropensityFloor);

// Every record repeated duplication_count(p) times, then uniformly shuffled.
std::vector<LoggedRecord> bootstrap_uniformize(const ReplayDataset& data, Rng& rng,
                                               double floor_value = kDefaultPropensityFloor);

struct ReplayResult {
  double average = 0.0;  // accumulated y1 + y2 divided by matched
  long matched = 0;
  long consumed = 0;
  bool partial = false;  // stream ran out before T matches
};

// Exact-match replay. Stage 2 is only queried once stage 1 agrees with the
// log; only accepted records reach finish_round. Throws EvaluationFailed when
// nothing matched.
ReplayResult replay(Policy& policy, std::span<const LoggedRecord> stream, long T);

}  // namespace dtr
