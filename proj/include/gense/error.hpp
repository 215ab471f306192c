#pragma once

#include <stdexcept>
#include <string>

namespace gense {

// Precondition violations raise std::invalid_argument. The types below cover
// failures that originate outside the caller's arguments.

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is structurally wrong (bad JSON-lines, bad checkpoint, ...).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gense
