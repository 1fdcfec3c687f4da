#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kittensim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid machine/pipeline/kernel configuration (bad shapes, footprint over
// budget, unsupported tile widths, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Shape or layout-major mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Index outside a tile, tensor, or access-pattern range.
struct BoundsError : Error {
    using Error::Error;
};

// A kernel stage broke the arrive contract (double arrive, missing arrive).
struct ContractViolation : Error {
    using Error::Error;
};

// File / serialization problems.
struct IoError : Error {
    using Error::Error;
};

// No runnable worker while work remains. `blocked` describes what each
// stalled worker was waiting on.
struct DeadlockError : Error {
    std::vector<std::string> blocked;

    explicit DeadlockError(std::string msg, std::vector<std::string> blocked_ = {})
        : Error(std::move(msg)), blocked(std::move(blocked_)) {}
};

} // namespace kittensim
