// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mrvox {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed mesh input. `line()` is 1-based, 0 when the format has no lines.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyMeshError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class OverflowedBufferError : public Error {
 public:
  using Error::Error;
};

/// Bad binary container (MRVX, dense grid, checkpoint). Carries the section
/// that failed to decode.
class FormatError : public Error {
 public:
  FormatError(const std::string& section, const std::string& what)
      : Error(section + ": " + what), section_(section) {}
  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class CacheError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrvox
