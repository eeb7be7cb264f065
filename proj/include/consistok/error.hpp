#pragma once

#include <stdexcept>
#include <string>

namespace consistok {

enum class ErrorKind {
    Usage,  // bad arguments or API preconditions
    Data,   // malformed or inconsistent input data
    Io,     // unreadable or unwritable files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace consistok
