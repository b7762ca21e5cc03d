#pragma once

#include <stdexcept>
#include <string>

namespace simcond {

// Every error raised by the library derives from Error so callers can catch
// one type; the subclasses mirror the failure classes of the public contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MappingError : public Error {
 public:
  using Error::Error;
};

class DegenerateCenterError : public Error {
 public:
  using Error::Error;
};

// Raised by run_pipeline; carries the name of the failing stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

#define SIMCOND_CHECK(cond, ErrorType, msg) \
  do {                                      \
    if (!(cond)) throw ErrorType(msg);      \
  } while (0)

}  // namespace simcond
