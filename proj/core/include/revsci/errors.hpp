#pragma once

#include <stdexcept>
#include <string>

namespace revsci {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched or invalid tensor/spec shapes. Message names the offending axis.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Bad argument values (negative extents, slope out of range, unknown enum names).
class ValueError : public Error {
public:
    explicit ValueError(const std::string& what) : Error(what) {}
};

// NaN/Inf encountered, divergence, division by zero at an uncovered pixel.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what) {}
};

// File format or filesystem problems.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace revsci
