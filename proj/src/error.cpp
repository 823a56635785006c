#include "varentropy/error.hpp"

namespace varentropy {

const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_bounds: return "invalid-bounds";
        case Errc::length_mismatch: return "length-mismatch";
        case Errc::grid_mismatch: return "grid-mismatch";
        case Errc::nonpositive_floor: return "nonpositive-floor";
        case Errc::non_confining_model: return "non-confining-model";
        case Errc::invalid_model: return "invalid-model";
        case Errc::invalid_density: return "invalid-density";
        case Errc::linear_solve_failure: return "linear-solve-failure";
        case Errc::index_out_of_range: return "index-out-of-range";
        case Errc::invalid_step: return "invalid-step";
        case Errc::invalid_time_grid: return "invalid-time-grid";
        case Errc::no_defined_bins: return "no-defined-bins";
        case Errc::time_mesh_mismatch: return "time-mesh-mismatch";
        case Errc::negative_time: return "negative-time";
        case Errc::config_validation: return "config-validation";
        case Errc::io_failure: return "io-failure";
    }
    return "unknown";
}

}  // namespace varentropy
