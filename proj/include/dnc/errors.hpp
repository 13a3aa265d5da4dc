#pragma once

#include <stdexcept>
#include <string>

namespace dnc {

enum class ErrorKind {
    Domain,     // argument outside its mathematical domain
    Shape,      // dimension or size mismatch
    Config,     // invalid experiment configuration
    Data,       // malformed or missing input data
    Numerical,  // non-finite values, singular matrices
    Format,     // corrupt or truncated persisted files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};

/// Throws the Error subclass matching kind.
[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& what) {
    switch (kind) {
        case ErrorKind::Domain: throw DomainError(what);
        case ErrorKind::Shape: throw ShapeError(what);
        case ErrorKind::Config: throw ConfigError(what);
        case ErrorKind::Data: throw DataError(what);
        case ErrorKind::Numerical: throw NumericalError(what);
        case ErrorKind::Format: throw FormatError(what);
    }
    throw Error(kind, what);
}

/// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Data:
        case ErrorKind::Format:
        case ErrorKind::Shape: return 3;
        case ErrorKind::Domain:
        case ErrorKind::Numerical: return 4;
    }
    return 1;
}

}  // namespace dnc
