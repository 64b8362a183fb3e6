#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace condiff {

/// Raised when an operation is called with arguments that violate its contract
/// (shape mismatch, indivisible groups, out-of-range parameters).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a value becomes NaN/Inf. The message names the producing operation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// I/O and format failures (PNG, checkpoints, config files).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <class... Args>
std::string concat_message(Args&&... args) {
    std::ostringstream os;
    (os << ... << std::forward<Args>(args));
    return os.str();
}

} // namespace detail

template <class... Args>
[[noreturn]] void fail_precondition(Args&&... args) {
    throw PreconditionError(detail::concat_message(std::forward<Args>(args)...));
}

template <class... Args>
inline void require(bool cond, Args&&... args) {
    if (!cond) fail_precondition(std::forward<Args>(args)...);
}

} // namespace condiff
