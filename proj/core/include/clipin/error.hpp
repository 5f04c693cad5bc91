#pragma once

#include <stdexcept>
#include <string>

namespace clipin {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad dimensions, invalid options, mismatched model/input geometry.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Token sequence exceeds the positional mode's context window.
class SequenceLengthError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Unreadable or incompatible checkpoint (bad magic, truncated payload,
// config-hash mismatch on resume).
class CheckpointError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or parameters during training; carries the step index.
class DivergenceError : public Error {
public:
    DivergenceError(int step, const std::string& what)
        : Error("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

}  // namespace clipin
