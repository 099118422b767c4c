#pragma once

#include <stdexcept>
#include <string>

namespace fesmc {

// Base of every error raised by the library. `module()` names the component
// that detected the problem so the CLI can report provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define FESMC_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    Name(std::string module, const std::string& what)              \
        : Error(std::move(module), what) {}                        \
  }

FESMC_DEFINE_ERROR(DegenerateSystemError);
FESMC_DEFINE_ERROR(InsufficientSampleError);
FESMC_DEFINE_ERROR(InvalidWeightsError);
FESMC_DEFINE_ERROR(ModelEvaluationError);
FESMC_DEFINE_ERROR(InvalidScheduleError);
FESMC_DEFINE_ERROR(DominationError);
FESMC_DEFINE_ERROR(InvalidCoordinateError);
FESMC_DEFINE_ERROR(IncompatibleGridsError);
FESMC_DEFINE_ERROR(DegenerateDataError);
FESMC_DEFINE_ERROR(InvalidHyperError);
FESMC_DEFINE_ERROR(InvalidConfigError);
FESMC_DEFINE_ERROR(ParseError);

#undef FESMC_DEFINE_ERROR

}  // namespace fesmc
