#pragma once

#include <stdexcept>
#include <string>

namespace varentropy {

enum class Errc {
    invalid_bounds,
    length_mismatch,
    grid_mismatch,
    nonpositive_floor,
    non_confining_model,
    invalid_model,
    invalid_density,
    linear_solve_failure,
    index_out_of_range,
    invalid_step,
    invalid_time_grid,
    no_defined_bins,
    time_mesh_mismatch,
    negative_time,
    config_validation,
    io_failure,
};

const char* to_string(Errc code) noexcept;

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace varentropy
