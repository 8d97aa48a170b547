#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rvolest {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a matrix expected to be symmetric positive definite is not.
/// `index()` carries the increment number j (1-based) when the failure
/// happened inside a likelihood sum, 0 otherwise.
class CholeskyFailure : public Error {
public:
    explicit CholeskyFailure(const std::string& what, std::size_t index = 0)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class UnknownModel : public Error {
public:
    using Error::Error;
};

class SingularGamma : public Error {
public:
    using Error::Error;
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

/// Malformed user input (files, configs, flags).
class InputError : public Error {
public:
    using Error::Error;
};

} // namespace rvolest
