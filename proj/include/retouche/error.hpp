#pragma once

#include <stdexcept>
#include <string>

namespace retouche {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A forward value, gradient or probe came out NaN/Inf.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
public:
    using Error::Error;
};

// A configuration value lies outside its documented range.
class ConfigError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

// A stored model cannot serve the requested operation (e.g. inspecting an MLP block).
class IncompatibleModelError : public Error {
public:
    using Error::Error;
};

}  // namespace retouche
