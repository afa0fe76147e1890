#pragma once

#include <stdexcept>
#include <string>

namespace awelab {

// Base of every error raised by the library. Callers that only care about
// success/failure can catch this; the CLI maps it to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class DuplicateId : public Error {
 public:
  using Error::Error;
};
class OverLength : public Error {
 public:
  using Error::Error;
};
class ConfigInvalid : public Error {
 public:
  using Error::Error;
};
class InfeasibleSplit : public Error {
 public:
  using Error::Error;
};
class NonFinite : public Error {
 public:
  using Error::Error;
};
class VersionMismatch : public Error {
 public:
  using Error::Error;
};
class EmptyArchive : public Error {
 public:
  using Error::Error;
};
class EmptyRelevant : public Error {
 public:
  using Error::Error;
};
class QueryWithoutRelevant : public Error {
 public:
  using Error::Error;
};
class MissingEmbedding : public Error {
 public:
  using Error::Error;
};
class UnknownWord : public Error {
 public:
  using Error::Error;
};
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace awelab
