#pragma once

#include <stdexcept>
#include <string>

namespace medcorpus {

// Error categories map onto the CLI exit-code contract:
// usage → 1, data → 2, internal → 3.
enum class ErrorKind { usage, data, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

}  // namespace medcorpus
