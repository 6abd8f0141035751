#pragma once
#include <stdexcept>
#include <string>

namespace heatrace {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// bad argument ranges (t <= 0, negative radius, ...)
struct DomainError : Error {
    using Error::Error;
};

// invalid geometric input, e.g. metric not SPD at some grid point
struct GeometryError : Error {
    int grid_point = -1;
    GeometryError(const std::string& msg, int p = -1) : Error(msg), grid_point(p) {}
};

// an identity that must hold numerically did not
struct ConsistencyError : Error {
    double residual = 0.0;
    ConsistencyError(const std::string& msg, double r) : Error(msg), residual(r) {}
};

// spectral truncation too coarse for the requested time
struct TruncationError : Error {
    int suggested_cutoff = 0;
    TruncationError(const std::string& msg, int suggest) : Error(msg), suggested_cutoff(suggest) {}
};

struct PreconditionError : Error {
    using Error::Error;
};

struct ConvergenceError : Error {
    using Error::Error;
};

// config problems carry the JSON path of the offending field
struct ConfigError : Error {
    std::string path;
    ConfigError(const std::string& p, const std::string& msg) : Error(p + ": " + msg), path(p) {}
};

} // namespace heatrace
