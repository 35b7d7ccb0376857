// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace moelab {

/// Base class for every error raised by the library. `kind()` is the short
/// machine-readable tag the CLI puts in its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error("shape_error", m) {}
};

class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& m) : Error("argument_error", m) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("config_error", m) {}
};

class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& m) : Error("evaluation_error", m) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& m) : Error("precondition_error", m) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& m) : Error("format_error", m) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& m) : Error("training_error", m) {}
};

} // namespace moelab
