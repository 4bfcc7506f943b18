#pragma once

#include <stdexcept>
#include <string>

namespace pairx {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Io = 2,         // unreadable / unwritable files, malformed containers
  Numerical = 3,  // degenerate embeddings, undefined metrics
  Contract = 4,   // caller violated a precondition
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace pairx
