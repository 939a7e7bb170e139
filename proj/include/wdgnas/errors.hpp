// SPDX-License-Identifier: Apache-2.0
//
// Error hierarchy shared by all modules. The CLI maps each family onto a
// process exit code (usage 1, data 2, numeric/runtime 3).

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wdgnas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (summary files, datasets, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Summary-file syntax error; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what, const std::string& source = {})
      : DataError((source.empty() ? "" : source + ": ") +
                  (line == 0 ? what : "line " + std::to_string(line) + ": " + what)),
        line_(line),
        detail_(what) {}
  std::size_t line() const noexcept { return line_; }
  /// Message without location prefixes.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

/// Lookup of a node, parameter or entry that does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure: divergence, non-finite gradients, degenerate scores.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A candidate could not be turned into an executable network.
class CompileError : public Error {
 public:
  CompileError(std::ptrdiff_t layer_index, const std::string& what)
      : Error(layer_index < 0 ? what : "layer " + std::to_string(layer_index) + ": " + what),
        layer_index_(layer_index) {}
  /// Index of the offending candidate layer, or -1 when not attributable.
  std::ptrdiff_t layer_index() const noexcept { return layer_index_; }

 private:
  std::ptrdiff_t layer_index_;
};

}  // namespace wdgnas
