#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nvmag {

/// Bad input: out-of-range parameters, malformed files, unknown config keys.
/// The CLI maps this family to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file could not be parsed. Carries the path and 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : ValidationError(path + ":" + std::to_string(line) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// A configuration document violates its schema. Carries the offending key.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string key, const std::string& what)
      : ValidationError("config key '" + key + "': " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Field too strong for the low-field labelling of spin eigenstates.
class OutOfRegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace nvmag
