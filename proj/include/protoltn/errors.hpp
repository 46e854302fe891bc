#pragma once

#include <stdexcept>
#include <string>

namespace protoltn {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or axis mismatch between tensors.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

// Input outside the mathematical domain of an operation (log of a
// non-positive value, fractional power of a negative value, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

// A caller violated a documented precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(what) {}
};

// A query label has no matching prototype.
class MissingPrototypeError : public Error {
public:
    explicit MissingPrototypeError(const std::string& what) : Error(what) {}
};

// Episode sampling could not satisfy the requested way/shot counts.
class SamplingError : public Error {
public:
    explicit SamplingError(const std::string& what) : Error(what) {}
};

// Malformed input file; carries a line number when one is known.
class ParseError : public Error {
public:
    ParseError(const std::string& file, long line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what), line_(-1) {}
    long line() const { return line_; }

private:
    long line_;
};

// Filesystem / serialization failure.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace protoltn
