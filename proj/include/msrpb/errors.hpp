#pragma once

#include <stdexcept>
#include <string>

namespace msrpb {

/// Base of all library errors. The CLI maps the subclasses to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a precondition on shapes or sizes.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Input data is unusable (non-finite values, constant images, ...).
class InputError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or hyper-shape. Exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Missing, unreadable or corrupt files. Exit code 3.
class IoError : public Error {
public:
  using Error::Error;
};

/// Non-finite objective or loss. Exit code 4.
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// A metric has a zero denominator or an empty region.
class UndefinedMetricError : public Error {
public:
  using Error::Error;
};

} // namespace msrpb
