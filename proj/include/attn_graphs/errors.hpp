#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace attn_graphs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes of two operands do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An input lies outside the domain where an operation is defined
/// (edgeless graph for edge homophily, empty id set, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A softmax row had no attendable entry.
class MaskedRowError : public Error {
public:
    MaskedRowError(std::size_t row)
        : Error("all entries of attention row " + std::to_string(row) + " are masked"), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Non-finite value reached the optimizer or the loss.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Base for errors raised while decoding a dataset file. Carries the byte
/// offset of the offending record (line number for text formats).
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class HeaderError : public FormatError {
public:
    using FormatError::FormatError;
};

class NodeIdRangeError : public FormatError {
public:
    using FormatError::FormatError;
};

class SelfLoopError : public FormatError {
public:
    using FormatError::FormatError;
};

class FeatureCountError : public FormatError {
public:
    using FormatError::FormatError;
};

class LabelRangeError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Manifest or experiment configuration is invalid (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace attn_graphs
