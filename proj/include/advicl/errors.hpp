#pragma once

#include <stdexcept>
#include <string>

namespace advicl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : Error { using Error::Error; };
struct InvalidInit : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct PreconditionViolated : Error { using Error::Error; };
struct SingularRegime : Error { using Error::Error; };
struct DivisionByZero : Error { using Error::Error; };
struct Diverged : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace advicl
