#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace casr {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An explicit scale plan broke the bound or product rule.
class PlanValidationError : public Error {
public:
    PlanValidationError(const std::string& what, std::size_t factor_index)
        : Error(what), factor_index_(factor_index) {}

    /// 1-based index of the offending factor, 0 when the product is at fault.
    std::size_t factor_index() const noexcept { return factor_index_; }

private:
    std::size_t factor_index_;
};

/// Malformed wire frame; offset is the byte position where decoding failed.
class FrameError : public Error {
public:
    FrameError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class BackboneFailure : public Error {
public:
    using Error::Error;
};

class NumericFailure : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace casr
