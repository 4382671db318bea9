#pragma once

#include <stdexcept>
#include <string>

namespace salfuse {

// Error taxonomy shared by the whole library. The C API maps each kind to a
// stable status code, the CLI maps it to an exit code.
enum class ErrorKind {
    config,    // bad shapes, bad hyperparameters, incompatible checkpoints
    data,      // broken datasets, missing ids, unreadable samples
    usage,     // API misuse (non-scalar loss, out-of-range threshold, ...)
    training,  // non-finite gradients and friends
    io,        // filesystem / PNG / serialization failures
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    static Error config(const std::string& msg) { return Error(ErrorKind::config, msg); }
    static Error data(const std::string& msg) { return Error(ErrorKind::data, msg); }
    static Error usage(const std::string& msg) { return Error(ErrorKind::usage, msg); }
    static Error training(const std::string& msg) { return Error(ErrorKind::training, msg); }
    static Error io(const std::string& msg) { return Error(ErrorKind::io, msg); }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::usage: return "usage";
        case ErrorKind::training: return "training";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace salfuse
