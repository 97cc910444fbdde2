#pragma once
// Exception hierarchy. DataError maps to CLI exit code 2, ModelError to 3.

#include <stdexcept>
#include <string>

namespace pffp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with inputs: raw records, manifests, feature files, config.
class DataError : public Error {
 public:
  using Error::Error;
};

// Problems with trained models and their persistence.
class ModelError : public Error {
 public:
  using Error::Error;
};

// --- signal ---

class NoImpactFound final : public DataError {
 public:
  using DataError::DataError;
  NoImpactFound() : DataError("no sediment impact found in record") {}
};

class TooShort final : public DataError {
 public:
  using DataError::DataError;
  TooShort() : DataError("record ends before deceleration settles") {}
};

class NonPositiveImpactVelocity final : public DataError {
 public:
  using DataError::DataError;
  NonPositiveImpactVelocity() : DataError("impact velocity must be positive") {}
};

class VelocityNeverReachesZero final : public DataError {
 public:
  using DataError::DataError;
  VelocityNeverReachesZero() : DataError("probe did not stop within the record") {}
};

class DepthExceedsRange final : public DataError {
 public:
  using DataError::DataError;
  DepthExceedsRange() : DataError("penetration depth exceeds the 2.11 m binning range") {}
};

// --- corpus ---

class Unclassifiable final : public DataError {
 public:
  using DataError::DataError;
  Unclassifiable() : DataError("gradation/plasticity values match no behavior class") {}
};

class ClassTooSmall final : public DataError {
 public:
  using DataError::DataError;
  ClassTooSmall() : DataError("a class is too small for a stratified split") {}
};

class TooFewNeighbors final : public DataError {
 public:
  using DataError::DataError;
  TooFewNeighbors() : DataError("minority class smaller than k+1, cannot oversample") {}
};

class EmptySet final : public DataError {
 public:
  using DataError::DataError;
  EmptySet() : DataError("evaluation set is empty") {}
};

// --- models ---

class EmptyHistogram final : public ModelError {
 public:
  using ModelError::ModelError;
  EmptyHistogram() : ModelError("class histogram sums to zero") {}
};

class GridEmpty final : public ModelError {
 public:
  using ModelError::ModelError;
  GridEmpty() : ModelError("hyperparameter grid is empty") {}
};

class UntrainedModel final : public ModelError {
 public:
  using ModelError::ModelError;
  UntrainedModel() : ModelError("model has no trained trees") {}
};

class Diverged final : public ModelError {
 public:
  using ModelError::ModelError;
  Diverged() : ModelError("training loss became non-finite") {}
};

class NotAProbabilityVector final : public ModelError {
 public:
  using ModelError::ModelError;
  NotAProbabilityVector() : ModelError("vector is not a probability distribution") {}
};

class DegenerateProduct final : public ModelError {
 public:
  using ModelError::ModelError;
  DegenerateProduct() : ModelError("prior-likelihood product underflowed to zero") {}
};

class VersionMismatch final : public ModelError {
 public:
  using ModelError::ModelError;
  VersionMismatch() : ModelError("unsupported bundle format version") {}
};

class CorruptBundle final : public ModelError {
 public:
  using ModelError::ModelError;
  CorruptBundle() : ModelError("bundle file is corrupt") {}
};

class SplitMismatch final : public ModelError {
 public:
  using ModelError::ModelError;
  SplitMismatch() : ModelError("bundle provenance lacks the split seed") {}
};

}  // namespace pffp
