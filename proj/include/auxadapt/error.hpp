// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace auxadapt {

/// Library error. The kind is stable and is what the CLI prints as the
/// machine-readable category on failure.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    shape,
    argument,
    io,
    format,
    numeric,
    config,
    missing_checkpoint,
    empty_selection,
  };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline const char* kind_name(Error::Kind kind) noexcept {
  switch (kind) {
    case Error::Kind::shape: return "shape";
    case Error::Kind::argument: return "argument";
    case Error::Kind::io: return "io";
    case Error::Kind::format: return "format";
    case Error::Kind::numeric: return "numeric";
    case Error::Kind::config: return "config";
    case Error::Kind::missing_checkpoint: return "missing_checkpoint";
    case Error::Kind::empty_selection: return "empty_selection";
  }
  return "unknown";
}

[[noreturn]] inline void fail(Error::Kind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace auxadapt
