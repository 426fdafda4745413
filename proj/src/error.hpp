#pragma once

// Error taxonomy shared by the whole toolkit.  Everything internal throws
// snnzip::Error; the C ABI boundary translates the code into a status int and
// the CLI maps it onto its exit-code contract (0 ok / 1 usage / 2 config or
// parse / 3 runtime).

#include <stdexcept>
#include <string>

namespace snnzip {

enum class Errc {
    invalid_argument,   // bad value or shape handed to an operation
    parse,              // malformed config / dataset / checkpoint input
    io,                 // filesystem trouble (open/read/write)
    degenerate_input,   // input that makes the requested statistic meaningless
    unsupported_layer,  // operation asked of a layer kind it is not defined for
    invalid_state,      // object used out of order (e.g. stale trace)
    training_failure,   // optimization diverged (non-finite loss or gradient)
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace snnzip
