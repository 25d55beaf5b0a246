#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bcnn {

// Shape or axis mismatch between tensors, or between a tensor and a layer.
class DimensionError : public std::invalid_argument {
public:
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Requested basis rank outside [1, min(P, L*D^2)], or basis/weight rank mismatch.
class RankError : public std::invalid_argument {
public:
    explicit RankError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure: non-convergent eigensolver, vanishing eigenvalue.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Spectrum with no mass at all; energy ratios are undefined.
class DegenerateSpectrumError : public NumericError {
public:
    explicit DegenerateSpectrumError(const std::string& msg) : NumericError(msg) {}
};

// Dataset or other input-content problem.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Compression plan does not match the network it is applied to.
class PlanError : public std::runtime_error {
public:
    explicit PlanError(const std::string& msg) : std::runtime_error(msg) {}
};

// Planning found nothing to compress.
class EmptyPlanError : public PlanError {
public:
    explicit EmptyPlanError(const std::string& msg) : PlanError(msg) {}
};

// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Model container parse failure. `offset` is the byte position of the fault.
class FormatError : public std::runtime_error {
public:
    enum class Kind {
        BadMagic,
        BadHeader,
        VersionMismatch,
        BadManifest,
        TruncatedPayload,
    };

    FormatError(Kind kind, std::uint64_t offset, const std::string& msg)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          kind_(kind),
          offset_(offset) {}

    Kind kind() const { return kind_; }
    std::uint64_t offset() const { return offset_; }

private:
    Kind kind_;
    std::uint64_t offset_;
};

}  // namespace bcnn
