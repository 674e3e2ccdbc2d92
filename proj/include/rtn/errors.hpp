#pragma once

#include <stdexcept>
#include <string>

namespace rtn {

/// Shape contract violated (e.g. matmul with a.cols != b.rows).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Index outside its valid range (class index, target index, position).
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// API called in a state or with arguments it does not accept.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input text. `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A record parsed fine but breaks a domain invariant; `field` names the culprit.
class ValidationError : public std::runtime_error {
public:
    ValidationError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Inconsistent or infeasible configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rtn
