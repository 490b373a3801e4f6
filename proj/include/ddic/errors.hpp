#ifndef DDIC_ERRORS_HPP
#define DDIC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ddic {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (bad schedule parameters, even median kernel, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Problems with input data: shape mismatches, missing metadata, unreadable files.
struct DataError : Error {
    using Error::Error;
};

// Timestep or coordinate outside the valid range.
struct IndexError : Error {
    using Error::Error;
};

// Non-finite values, singular matrices, degenerate denominators.
struct NumericError : Error {
    using Error::Error;
};

// Operation requested on an object that cannot provide it
// (e.g. input gradients from a non-differentiable denoiser).
struct CapabilityError : Error {
    using Error::Error;
};

// Degenerate histogram range in the mutual-information estimator.
struct HistogramError : Error {
    using Error::Error;
};

// Zero-variance input to the correlation coefficient.
struct DegenerateCorrelationError : Error {
    using Error::Error;
};

// Degenerate variance in a statistical test.
struct StatsError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; `step` is the offending optimization step.
struct TrainingDivergedError : NumericError {
    TrainingDivergedError(const std::string& msg, int step_)
        : NumericError(msg), step(step_) {}
    int step;
};

} // namespace ddic

#endif
