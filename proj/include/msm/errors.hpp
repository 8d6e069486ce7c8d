#pragma once

#include <stdexcept>
#include <string>

namespace msm {

// Thrown by topology construction when spheres overlap or a transmitter
// sits inside a receiver.
struct InvalidGeometryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Zero molecule counts make the sampled channel matrix rank deficient.
struct InvalidCountError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bit stream does not tile into whole symbols.
struct LengthMismatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FitFailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Identical or coincident distributions where an intersection or a
// threshold ordering is required.
struct DegenerateInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InfeasibleError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace msm
