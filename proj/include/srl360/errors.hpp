#pragma once

#include <stdexcept>
#include <string>

namespace srl360 {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or vector dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An argument is outside its documented domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Optimization produced a non-finite value.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// A predictor could not produce output for the given task.
class PredictionError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration (empty trace, bad manifest, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller violated the environment's step protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace srl360
