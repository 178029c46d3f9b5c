#pragma once

#include <stdexcept>
#include <string>

namespace dtn {

// Invalid user-supplied configuration (bad parameter values, unknown JSON
// keys, unsupported option combinations).  CLI exit status 1.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numeric quality gate failed (grid too coarse, solver non-convergence,
// non-finite integrand).  CLI exit status 2.
struct NumericGateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dtn
