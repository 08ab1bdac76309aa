#pragma once

#include <stdexcept>
#include <string>

namespace latdiff {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// config/parameter errors -> 2, input/data-quality errors -> 3, numeric
// failures -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid physics or fit parameters (out of the supported domain).
struct param_error : error {
    using error::error;
};

// Malformed or rejected configuration files / keys.
struct config_error : error {
    using error::error;
};

// Structurally bad inputs (degenerate curves, too few samples, bad grids).
struct input_error : error {
    using error::error;
};

// Data-quality failures on ingested measurement files.
struct data_error : error {
    using error::error;
};

// A run would exceed the configured memory budget.
struct resource_error : error {
    using error::error;
};

// Numerical accuracy loss; carries the achieved error estimate.
struct numeric_error : error {
    double achieved_error;
    numeric_error(const std::string& msg, double achieved)
        : error(msg), achieved_error(achieved) {}
};

// Optimizer failed to converge; carries the best iterate seen.
struct fit_error : error {
    double best_alpha, best_scale, best_location, best_amplitude, best_ssr;
    fit_error(const std::string& msg, double alpha, double scale, double location,
              double amplitude, double ssr)
        : error(msg), best_alpha(alpha), best_scale(scale), best_location(location),
          best_amplitude(amplitude), best_ssr(ssr) {}
};

} // namespace latdiff
