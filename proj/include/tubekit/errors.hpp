#pragma once

#include <stdexcept>
#include <string>

namespace tubekit {

// Exit codes used by the CLI: 0 success, 1 validation, 2 data, 3 internal.
enum class ErrorKind { validation = 1, data = 2, internal = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad configuration, bad CLI arguments, violated preconditions.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string msg) : Error(ErrorKind::validation, std::move(msg)) {}
};

// Unreadable, malformed or inconsistent input data.
class DataError : public Error {
 public:
  explicit DataError(std::string msg) : Error(ErrorKind::data, std::move(msg)) {}
};

// Parse failure with location context (path, line, field).
class ParseError : public DataError {
 public:
  ParseError(std::string path, long line, std::string field, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": field '" + field + "': " + what),
        path_(std::move(path)),
        line_(line),
        field_(std::move(field)) {}

  const std::string& path() const { return path_; }
  long line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string path_;
  long line_;
  std::string field_;
};

// A broken internal invariant; always a bug.
class InternalError : public Error {
 public:
  explicit InternalError(std::string msg) : Error(ErrorKind::internal, std::move(msg)) {}
};

#define TK_CHECK(cond, msg)                                                             \
  do {                                                                                  \
    if (!(cond)) throw ::tubekit::InternalError(std::string("invariant failed: ") + (msg)); \
  } while (0)

}  // namespace tubekit
