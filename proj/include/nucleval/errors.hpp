#pragma once

#include <stdexcept>
#include <string>

namespace nucleval {

// Malformed on-disk data: bad magic, unsupported header, truncated payload.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally well-formed data that violates a label-map invariant.
class IntegrityError : public std::runtime_error {
 public:
  explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nucleval
