// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace layoutgen {

/// Error categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
  Domain,             // numeric argument outside its domain
  Capacity,           // more elements than the configured maximum
  Schema,             // category or id unknown to the schema
  IncompleteSequence, // decode saw a residual MASK
  MalformedSequence,  // token id inconsistent with its slot
  Precondition,
  RetrievalMiss,
  Config,
  Data,
  Invariant,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace layoutgen
