#pragma once

#include <stdexcept>
#include <string>

namespace pfedgrp {

// A ParamVector used with an architecture it was not built for.
struct ArchitectureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition.
struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; the message names the byte offset.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad, unknown or inconsistent configuration; the message names the key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Local training diverged; the message carries the epoch index.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Replay requested for a class without a generator; the message names the class.
struct ReplayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A task stream demands more samples than the dataset pool holds.
struct DataBudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Server cache out of sync with a client upload.
struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Weight optimization hit a non-finite loss; the message carries the step index.
struct OptimizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pfedgrp
