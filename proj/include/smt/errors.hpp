#pragma once

#include <stdexcept>
#include <string>

namespace smt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File has the wrong magic / layout.
struct FormatError : Error {
    using Error::Error;
};

// File ends early or payload is inconsistent with its header.
struct CorruptFileError : Error {
    using Error::Error;
};

// Loaded or constructed data violates a type invariant (NaN/Inf, bad shape).
struct ValidationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Model/pipeline wiring problem (e.g. V1 operation on a model without
// inverse networks).
struct ConfigError : Error {
    using Error::Error;
};

// Degenerate point configuration in homography estimation.
struct EstimationError : Error {
    using Error::Error;
};

// Homogeneous projection with zero depth.
struct ProjectionError : Error {
    using Error::Error;
};

// Non-finite loss or gradient during training.
struct DivergenceError : Error {
    using Error::Error;
};

} // namespace smt
