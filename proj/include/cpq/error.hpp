#pragma once

#include <stdexcept>
#include <string>

namespace cpq {

enum class ErrorKind {
    invalid_parameter,
    invalid_input,
    undefined_estimate,
    unknown_label,
    parse_error,
    duplicate_id,
    oracle_io,
    infeasible_calibration,
    model_mismatch,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace cpq
