#pragma once

#include <stdexcept>
#include <string>

namespace catsearch {

/// Root of every error raised by the library. Callers that do not care about
/// the specific failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CATSEARCH_DEFINE_ERROR(Name)        \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
    Name() : Error(#Name) {}                \
  };

// core / search
CATSEARCH_DEFINE_ERROR(EmptyCandidateSet)
CATSEARCH_DEFINE_ERROR(BudgetExhausted)
// env
CATSEARCH_DEFINE_ERROR(PathTerminal)
CATSEARCH_DEFINE_ERROR(PathNotComplete)
// nn / prm
CATSEARCH_DEFINE_ERROR(ShapeMismatch)
CATSEARCH_DEFINE_ERROR(StaleCache)
CATSEARCH_DEFINE_ERROR(TrainingDiverged)
CATSEARCH_DEFINE_ERROR(EmptyModel)
// theory
CATSEARCH_DEFINE_ERROR(InvalidSampleSize)
CATSEARCH_DEFINE_ERROR(InvalidPrior)
CATSEARCH_DEFINE_ERROR(DegenerateInputs)
CATSEARCH_DEFINE_ERROR(VacuousBound)
// harness
CATSEARCH_DEFINE_ERROR(EmptyResults)
CATSEARCH_DEFINE_ERROR(BackendUnavailable)
CATSEARCH_DEFINE_ERROR(ProtocolError)

#undef CATSEARCH_DEFINE_ERROR

/// Invalid configuration. `field` carries the dotted path of the offending key
/// when one is known.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  explicit ConfigError(const std::string& message) : ConfigError("", message) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace catsearch
