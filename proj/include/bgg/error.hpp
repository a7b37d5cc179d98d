#pragma once
// Error taxonomy shared by the C++ core and mirrored by the C API status codes.

#include <stdexcept>
#include <string>

namespace bgg {

enum class ErrorKind {
    config,      // invalid configuration
    argument,    // bad argument value (out of range, non-divisible, ...)
    shape,       // tensor/image dimension mismatch
    lookup,      // unknown id (category, record, experiment)
    parse,       // malformed manifest/checkpoint/config text
    io,          // filesystem failure
    degenerate,  // degenerate input (all-ones mask, zero-norm embedding, ...)
    runtime,     // everything else (NaN loss, incompatible checkpoint, ...)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

inline void require(bool cond, ErrorKind k, const std::string& msg) {
    if (!cond) fail(k, msg);
}

}  // namespace bgg
