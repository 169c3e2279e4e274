#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtr {

// Caller broke a documented precondition (dimension mismatch, arm out of
// range, schedule mismatch, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An OLS solve needed by an estimator is singular or has no data yet.
class EstimatorUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ", column " +
                           std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment or instance configuration. `field` is a JSON-pointer-ish
// path to the offending entry ("policies/2/q").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class EvaluationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DTR_REQUIRE(cond, msg)                                      \
  do {                                                              \
    if (!(cond)) throw ::dtr::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace dtr
