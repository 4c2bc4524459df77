#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace densityscan {

/// Base for every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor dimensions disagree; `axis` names the offending dimension.
class ShapeError : public Error {
public:
    ShapeError(std::string axis, const std::string& what)
        : Error(what + " (axis: " + axis + ")"), axis_(std::move(axis)) {}
    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

/// Malformed input file; `offset` is the byte (or line, see `unit`) where decoding failed.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t offset, const std::string& what,
               std::string unit = "byte")
        : Error(source + ": " + what + " at " + unit + " " + std::to_string(offset)),
          source_(std::move(source)), offset_(offset), unit_(std::move(unit)) {}
    const std::string& source() const noexcept { return source_; }
    std::size_t offset() const noexcept { return offset_; }
    const std::string& unit() const noexcept { return unit_; }

private:
    std::string source_;
    std::size_t offset_;
    std::string unit_;
};

/// Precondition violated by the caller (bad parameter, empty batch, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int iteration, double loss)
        : Error("training diverged at iteration " + std::to_string(iteration) +
                " (loss = " + std::to_string(loss) + ")"),
          iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace densityscan
