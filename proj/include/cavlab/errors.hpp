#pragma once

#include <stdexcept>
#include <string>

namespace cavlab {

// Config errors are caller mistakes (bad input files, bad flags); the CLI maps
// them to exit code 2. Domain errors are legitimate runtime failures of the
// physics/numerics (exit code 3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoSolutions : DomainError {
  using DomainError::DomainError;
};
struct ClassTooSmall : DomainError {
  using DomainError::DomainError;
};
struct Case5Found : DomainError {
  using DomainError::DomainError;
};
struct NoSymmetry : DomainError {
  using DomainError::DomainError;
};
struct AsymmetryTooLarge : DomainError {
  using DomainError::DomainError;
};
struct DegenerateSplitting : DomainError {
  using DomainError::DomainError;
};
struct OverlapTooSmall : DomainError {
  using DomainError::DomainError;
};
struct MappingNotInvertible : DomainError {
  using DomainError::DomainError;
};
struct SolverFailure : DomainError {
  using DomainError::DomainError;
};
struct ClusterAmbiguous : DomainError {
  using DomainError::DomainError;
};
struct GridNotReflectionSymmetric : DomainError {
  using DomainError::DomainError;
};

}  // namespace cavlab
