#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ambical {

// Base error. The kind tag is machine readable and ends up in the CLI's
// error JSON, so keep the set small and stable.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Malformed caller input: wrong sizes, labels out of range, invalid config.
struct InputError : Error {
  explicit InputError(const std::string& m) : Error("input", m) {}
};

// Mathematically invalid argument (e.g. non-positive temperature).
struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

// Optimizer failure: non-finite objective or gradient.
struct OptimError : Error {
  explicit OptimError(const std::string& m) : Error("optimization", m) {}
};

// Dataset / model file parsing problems, with location where possible.
struct LoadError : Error {
  explicit LoadError(const std::string& m) : Error("load", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace ambical
