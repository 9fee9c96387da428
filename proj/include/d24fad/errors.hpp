#pragma once

#include <stdexcept>
#include <string>

namespace d24fad {

// Error taxonomy shared by the library and the CLI. The CLI maps kinds to
// process exit codes: config/shape/data/precondition -> 2, io/state -> 3,
// numeric -> 4.
enum class ErrorKind {
    config,
    io,
    shape,
    data,
    numeric,
    state,
    precondition,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(ErrorKind::shape, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(ErrorKind::state, msg) {}
};

struct PreconditionError : Error {
    explicit PreconditionError(const std::string& msg) : Error(ErrorKind::precondition, msg) {}
};

// Thrown by auroc() when only one class is present.
struct UndefinedMetricError : DataError {
    explicit UndefinedMetricError(const std::string& msg) : DataError(msg) {}
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io:
        case ErrorKind::state:
            return 3;
        case ErrorKind::numeric:
            return 4;
        default:
            return 2;
    }
}

}  // namespace d24fad
