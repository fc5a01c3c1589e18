#pragma once

#include <stdexcept>
#include <string>

namespace csformer {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/axis mismatches (wrong inner dimension, bad last axis, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// A caller violated a documented precondition (non-scalar loss, invalid
// permutation, backward without reset, missing gradient).
class ContractError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values (heads not dividing dim, both stages off).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Problems with input files or table geometry (CSV parse, windowing).
class DataError : public Error {
public:
    using Error::Error;
};

// NaN/divergence during computation, or a non-invertible transform.
class NumericsError : public Error {
public:
    using Error::Error;
};

// Bad command-line usage.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace csformer
