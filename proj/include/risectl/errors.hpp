#pragma once

#include <stdexcept>
#include <string>

namespace risectl {

// Base class for all recoverable controller errors so callers can catch one type.
class RisectlError : public std::runtime_error {
public:
    explicit RisectlError(const std::string& what) : std::runtime_error(what) {}
};

// No active contacts: a support region cannot be formed.
class NoSupportError : public RisectlError {
public:
    explicit NoSupportError(const std::string& what) : RisectlError(what) {}
};

// The limb-length bounds admit no CoM position for the requested geometry.
class InfeasibleConstraintsError : public RisectlError {
public:
    explicit InfeasibleConstraintsError(const std::string& what) : RisectlError(what) {}
};

// The planner exceeded its per-phase iteration budget without converging.
class StuckError : public RisectlError {
public:
    explicit StuckError(const std::string& what) : RisectlError(what) {}
};

// A contact pin was requested too far from the ground plane.
class PinTooFarError : public RisectlError {
public:
    explicit PinTooFarError(const std::string& what) : RisectlError(what) {}
};

// Simulation state exceeded sanity bounds (velocity blow-up / non-finite values).
class SimulationDivergedError : public RisectlError {
public:
    explicit SimulationDivergedError(const std::string& what) : RisectlError(what) {}
};

// Malformed configuration, manifest, character file, or CLI usage.
class ConfigError : public RisectlError {
public:
    explicit ConfigError(const std::string& what) : RisectlError(what) {}
};

// Malformed trace file; message carries the 1-based line number.
class TraceParseError : public RisectlError {
public:
    TraceParseError(const std::string& what, long line)
        : RisectlError(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
    long line_number;
};

} // namespace risectl
