#pragma once
// Central finite-difference checks of the analytic backward rules, in double
// precision. Each registered case builds random inputs, reduces the op output
// to a scalar through a fixed random weighting, and compares the tape gradient
// with (f(x+h) − f(x−h)) / 2h for every input entry.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scg/nn.hpp"

namespace scg {

using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCase {
    std::vector<Tensor<double>> inputs; // all require grad
    GradFn fn;
};

/// ‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂ + ‖g_numeric‖₂, 1e-12) over all inputs.
double gradient_relative_error(const GradCase& c, Rng& rng, double step = 1e-5);

struct GradcheckReport {
    std::string op;
    std::size_t instances = 0;
    double worst = 0;
    bool passed = false;
};

/// Names of every registered check.
std::vector<std::string> gradcheck_ops();

/// Runs `instances` random cases of one op. RangeError for unknown names.
GradcheckReport run_gradcheck(const std::string& op, std::size_t instances, std::uint64_t seed,
                              double tolerance = 1e-4);

} // namespace scg
