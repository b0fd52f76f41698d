#pragma once

#include <stdexcept>
#include <string>

namespace hmmva {

enum class ErrorCode {
  // model validation
  NonStochasticRow,
  NegativeEntry,
  NonStationaryInitial,
  BadEmissionParam,
  BadDimensions,
  TooManyStates,
  // chain structure
  Reducible,
  Periodic,
  // estimation
  EmptyClass,
  DegenerateVariance,
  // decoding
  AllPathsImpossible,
  InstanceTooLarge,
  // corrections / limits
  CorrectionUnavailable,
  EmptyCell,
  EmptyClassInAllReplicas,
  NoRegenerations,
  // harness
  ConfigError,
  NumericalFailure,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hmmva
