#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace resotune {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the physical domain of a model (non-positive L, |M| >= L0, d < d_min, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Pin-coupling anchors that no model instance can reproduce.
class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Configuration or input that violates a type invariant. `field` names the offending entry.
class ValidationError : public Error {
public:
    ValidationError(std::string field, std::string reason)
        : Error(field + ": " + reason), field_(std::move(field)), reason_(std::move(reason)) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }
    [[nodiscard]] const std::string& reason() const noexcept { return reason_; }

private:
    std::string field_;
    std::string reason_;
};

/// File could not be read or parsed. `line` is 1-based, 0 when not tied to a line.
class IoError : public Error {
public:
    IoError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NoResonance : public Error {
public:
    using Error::Error;
};

/// A quality-factor combination with Q_L >= Q_e (implied infinite or negative Q_i).
class NonPhysicalFit : public Error {
public:
    using Error::Error;
};

class NoOscillation : public Error {
public:
    using Error::Error;
};

class StageStalled : public Error {
public:
    using Error::Error;
};

class MechanicalLimit : public Error {
public:
    using Error::Error;
};

}  // namespace resotune
