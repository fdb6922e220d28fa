#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace proxlangevin {

// A model is missing the piece (prox, gradient, ...) an operation needs.
class UnsupportedModelError : public std::runtime_error {
public:
    explicit UnsupportedModelError(const std::string& what) : std::runtime_error(what) {}
};

class InvalidParameterError : public std::invalid_argument {
public:
    explicit InvalidParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite value produced while iterating; carries the iteration index.
class NumericalFailureError : public std::runtime_error {
public:
    NumericalFailureError(const std::string& what, std::int64_t iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration(iteration) {}
    std::int64_t iteration;
};

// Evaluation outside the model's domain, e.g. (Ax)_i + beta <= 0.
class DomainViolationError : public std::runtime_error {
public:
    explicit DomainViolationError(const std::string& what) : std::runtime_error(what) {}
};

class UndefinedMomentError : public std::runtime_error {
public:
    explicit UndefinedMomentError(const std::string& what) : std::runtime_error(what) {}
};

class DegenerateVarianceError : public std::runtime_error {
public:
    explicit DegenerateVarianceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace proxlangevin
