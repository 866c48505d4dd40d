#pragma once

#include <stdexcept>
#include <string>

namespace flowvoc {

// Error categories map 1:1 onto the CLI's machine-parsable exit line.
enum class ErrorKind {
    Usage,     // bad flags / arguments
    Config,    // inconsistent configuration (hop ratios, profile mismatch)
    Contract,  // precondition violated by a caller (shape mismatch, non-scalar loss)
    Io,        // filesystem / file access
    Format,    // malformed file contents (WAV header, checkpoint magic)
    Numeric,   // NaN or divergence detected mid-computation
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Config: return "config";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::Numeric: return "numeric";
    }
    return "unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) raise(kind, msg);
}

}  // namespace flowvoc
