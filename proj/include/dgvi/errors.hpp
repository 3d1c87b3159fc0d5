#pragma once

#include <stdexcept>
#include <string>

namespace dgvi {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// The polyhedral feasible set is empty.
class Infeasible : public Error {
public:
    using Error::Error;
};

class InvalidSplitting : public Error {
public:
    using Error::Error;
};

class NotStronglyMonotone : public Error {
public:
    using Error::Error;
};

/// Riccati or fixed-point iteration stagnated or diverged.
class NoConvergence : public Error {
public:
    using Error::Error;
};

class SingularA : public Error {
public:
    using Error::Error;
};

/// Malformed scenario description (cyclic precedence, bad sizes...).
class SpecError : public Error {
public:
    using Error::Error;
};

/// Solver configuration outside the admissible range.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace dgvi
