// Copyright 2026 The bckd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bckd {

enum class ErrorKind {
  config,          // malformed or incompatible configuration
  domain,          // argument outside an operation's domain
  data_integrity,  // non-finite or corrupt data
  numeric,         // training produced a non-finite loss
  io,              // filesystem or archive failure
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

}  // namespace bckd
