// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wyner {

/// Base of every error raised by the library. Each subclass names one failure
/// mode so callers can catch exactly what they can recover from.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define WYNER_DEFINE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

// tensor / autodiff
WYNER_DEFINE_ERROR(ShapeMismatch);
WYNER_DEFINE_ERROR(NonFiniteValue);
WYNER_DEFINE_ERROR(NonScalarOutput);

// gaussian / models
WYNER_DEFINE_ERROR(DimensionMismatch);
WYNER_DEFINE_ERROR(InvalidSpec);

// dataset
WYNER_DEFINE_ERROR(LabelOutOfRange);
WYNER_DEFINE_ERROR(EmptyDataset);

// training
WYNER_DEFINE_ERROR(NonFiniteGradient);
WYNER_DEFINE_ERROR(DivergenceDetected);
WYNER_DEFINE_ERROR(FrozenParamTouched);
WYNER_DEFINE_ERROR(NotApplicable);

// estimators / sampling
WYNER_DEFINE_ERROR(EmptyTestSet);
WYNER_DEFINE_ERROR(NonFiniteWeight);
WYNER_DEFINE_ERROR(MarginalEncoderMissing);
WYNER_DEFINE_ERROR(SideMismatch);

// harness
WYNER_DEFINE_ERROR(ConfigInvalid);
WYNER_DEFINE_ERROR(TooFewValues);
WYNER_DEFINE_ERROR(CorruptCheckpoint);
WYNER_DEFINE_ERROR(VersionMismatch);
WYNER_DEFINE_ERROR(NoMetricsFound);

#undef WYNER_DEFINE_ERROR

}  // namespace wyner
