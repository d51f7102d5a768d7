#pragma once

#include "kernest/core.hpp"
#include "kernest/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kernest {

enum class EntropyForm {
    paper,        // sum w ln(w / w0)
    generalized,  // sum [w ln(w / w0) - w + w0]; >= 0, zero exactly at w = w0
};

std::string_view to_string(EntropyForm form) noexcept;
EntropyForm parse_entropy_form(std::string_view name);

struct FitOptions {
    std::size_t max_iterations = 100000;
    double kkt_tol = 1e-8;
    double objective_rel_tol = 1e-10;
    EntropyForm entropy_form = EntropyForm::generalized;

    void validate() const;
};

struct Estimate {
    std::string method;  // "cls", "rme" or "me"
    CumulativeKernel kernel;
    std::vector<double> fitted_prices{};  // price_put(kernel, K_i)
    double objective = 0.0;
    double mse_term = 0.0;      // (1/N) sum (fitted - observed)^2
    double entropy_term = 0.0;  // divergence from the prior; 0 for CLS
    double lambda = 0.0;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    double identifiable_upper = 0.0;  // max strike
    // Per node: true when x_j lies above the identifiable region.
    std::vector<bool> extrapolated{};
    // Parameter indices (0 = base, j = increment of cell j) the data leave
    // undetermined: zero value with zero KKT multiplier.
    std::vector<std::size_t> nonunique_params{};
    // Cells where the prior has no mass but the data ask for some.
    std::vector<std::size_t> infinite_divergence_cells{};
    std::vector<std::string> warnings{};
    // Objective after each accepted iteration (RME only).
    std::vector<double> objective_trace{};

    // Upper end of the region on which error metrics are computed.
    double error_region_upper() const;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Estimate last, double residual)
        : Error(what), last_(std::move(last)), residual_(residual) {}

    const Estimate& last_iterate() const noexcept { return last_; }
    double residual() const noexcept { return residual_; }

private:
    Estimate last_;
    double residual_;
};

// Exact-constraint maximum entropy has no solution for these prices.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, double residual) : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// Rows are put_pricing_row(grid, K_i).
Eigen::MatrixXd put_pricing_matrix(const QuoteSet& quotes, const Grid& grid);

// Divergence of increments w from prior increments w0; +inf when w puts mass
// where w0 has none.
double divergence(std::span<const double> w, std::span<const double> w0, EntropyForm form);

// Least squares over the monotone cone {base >= 0, w >= 0}.
Estimate fit_cls(const QuoteSet& quotes, const Grid& grid, const FitOptions& opts = {});

// (1/N) sum (S(K_i) - S_i)^2 + lambda D(w || w0) over the monotone cone; the
// base P(0) is not penalized. lambda = 0 reduces to fit_cls.
Estimate fit_rme(const QuoteSet& quotes, const CumulativeKernel& prior, double lambda,
                 const Grid& grid, const FitOptions& opts = {});

// lambda_N = lambda0 N^-gamma.
double lambda_schedule(std::size_t n, double lambda0 = 0.1, double gamma = 0.5);

// min D(P || P0) subject to price_put(P, K_i) = S_i exactly, via the dual.
// P(0) is treated as an atom at x = 0 with prior mass P0(0).
// Throws InfeasibleError when the constraints admit no such kernel.
Estimate fit_me_exact(const QuoteSet& quotes, const CumulativeKernel& prior, const Grid& grid,
                      const FitOptions& opts = {});

} // namespace kernest
