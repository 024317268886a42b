#pragma once

#include <stdexcept>
#include <string>

namespace ctwfe {

/// Bad input: malformed data, invalid configuration, violated preconditions.
/// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& message, std::string field = {})
        : std::runtime_error(message), field_(std::move(field)) {}

    /// Name of the offending column, key or argument, when there is one.
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// The computation itself failed (rank collapse, every restart degenerate).
/// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ctwfe
