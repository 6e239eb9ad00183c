#pragma once

#include <stdexcept>
#include <string>

namespace stylescope {

// Base of every error the library raises. Subclasses name the failure so
// callers (and the CLI's exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define STYLESCOPE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// tokenizer
STYLESCOPE_ERROR(VocabError);
STYLESCOPE_ERROR(UnknownTokenId);
STYLESCOPE_ERROR(InvalidUtf8);

// model-core
STYLESCOPE_ERROR(CheckpointFormatError);
STYLESCOPE_ERROR(MissingTensor);
STYLESCOPE_ERROR(ShapeMismatch);
STYLESCOPE_ERROR(NonFiniteWeight);
STYLESCOPE_ERROR(SequenceTooLong);
STYLESCOPE_ERROR(InvalidHookPoint);
STYLESCOPE_ERROR(MissingCapture);

// corpus
STYLESCOPE_ERROR(EmptyCorpus);
STYLESCOPE_ERROR(InvalidOverlap);

// neuron-stats
STYLESCOPE_ERROR(DegenerateVariance);
STYLESCOPE_ERROR(EmptySample);
STYLESCOPE_ERROR(SingleClass);
STYLESCOPE_ERROR(ZeroVariance);

// intervene
STYLESCOPE_ERROR(InvalidIntervention);
STYLESCOPE_ERROR(ContextOverflow);

// styleval
STYLESCOPE_ERROR(EmptyText);
STYLESCOPE_ERROR(ZeroReference);
STYLESCOPE_ERROR(ZeroBaseline);
STYLESCOPE_ERROR(InsufficientPairs);

// cli / pipeline
STYLESCOPE_ERROR(ConfigError);
STYLESCOPE_ERROR(StageError);
STYLESCOPE_ERROR(IoError);

#undef STYLESCOPE_ERROR

}  // namespace stylescope
