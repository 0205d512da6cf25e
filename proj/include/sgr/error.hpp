#pragma once

#include <stdexcept>
#include <string>

namespace sgr {

// Contract errors map to CLI exit code 1, I/O errors to exit code 2.
enum class ErrorKind { Contract, IO };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void contract_fail(const std::string& msg) { throw Error(ErrorKind::Contract, msg); }
[[noreturn]] inline void io_fail(const std::string& msg) { throw Error(ErrorKind::IO, msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) contract_fail(msg);
}

} // namespace sgr
