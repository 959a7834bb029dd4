#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace spinglass {

struct NelderMeadOptions {
    std::size_t max_evaluations = 4000;
    double initial_step = 0.5;
    // Stop when the spread of simplex values and the simplex diameter both fall
    // below these.
    double value_tolerance = 1e-13;
    double point_tolerance = 1e-9;
};

struct NelderMeadResult {
    std::vector<double> point;
    double value = 0.0;
    std::size_t evaluations = 0;
    bool converged = false;
};

// Derivative-free minimization on R^n. Non-finite objective values are treated
// as +infinity, so infeasible regions can be signalled by returning NaN/inf.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                             std::vector<double> start, const NelderMeadOptions& options = {});

}  // namespace spinglass
