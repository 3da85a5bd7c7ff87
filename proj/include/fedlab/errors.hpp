#pragma once

#include <stdexcept>
#include <string>

namespace fedlab {

// Base for everything the library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad shapes, invalid experiment settings, layout mismatches.
struct ConfigError : Error {
  using Error::Error;
};

// Out-of-range labels/targets and similar caller mistakes.
struct InputError : Error {
  using Error::Error;
};

// Malformed files (IDX, PGM, config documents).
struct FormatError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace fedlab
