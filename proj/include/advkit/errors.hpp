#pragma once

#include <stdexcept>
#include <string>

namespace advkit {

/// Invalid configuration: bad architecture name, shape mismatch between a
/// model and its input, out-of-range hyperparameters.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or truncated on-disk data (IDX, CIFAR binary, containers).
/// Carries the byte offset at which parsing failed, -1 if not applicable.
class DataFormatError : public std::runtime_error {
public:
    explicit DataFormatError(const std::string& what, long long offset = -1)
        : std::runtime_error(offset >= 0 ? what + " (byte offset " + std::to_string(offset) + ")"
                                         : what),
          offset_(offset) {}

    long long byte_offset() const { return offset_; }

private:
    long long offset_;
};

/// Invalid runtime input: label out of class range, empty candidate set,
/// empty metric input.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss.
class TrainingDivergedError : public std::runtime_error {
public:
    explicit TrainingDivergedError(const std::string& what) : std::runtime_error(what) {}
};

/// Broken internal invariant (shape drift between parameters and gradients).
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

} // namespace advkit
