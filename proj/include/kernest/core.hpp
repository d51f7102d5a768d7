#pragma once

#include "kernest/errors.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace kernest {

// Uniform discretization of the factor axis [0, B] into M cells.
class Grid {
public:
    static constexpr std::size_t kDefaultCells = 400;

    Grid(double upper, std::size_t cells);

    double upper() const noexcept { return upper_; }
    std::size_t cells() const noexcept { return cells_; }
    std::size_t num_nodes() const noexcept { return cells_ + 1; }
    double spacing() const noexcept { return upper_ / static_cast<double>(cells_); }

    // x_j = j B / M; exact at both ends.
    double node(std::size_t j) const noexcept {
        return j == cells_ ? upper_ : upper_ * static_cast<double>(j) / static_cast<double>(cells_);
    }
    std::vector<double> nodes() const;

    // Index of the cell [x_j, x_{j+1}] containing x, clamped to [0, M-1].
    std::size_t cell_of(double x) const noexcept;

    // Index of the last node with x_j <= x (+ rounding slack).
    std::size_t last_node_at_or_below(double x) const noexcept;

    bool operator==(const Grid& other) const noexcept {
        return upper_ == other.upper_ && cells_ == other.cells_;
    }

private:
    double upper_;
    std::size_t cells_;
};

// Non-decreasing, bounded, piecewise-linear P(x), stored as P(0) plus one
// non-negative increment per cell: P_j = base + sum_{l<=j} w_l.
class CumulativeKernel {
public:
    // Throws InputError when base or any increment is negative or non-finite,
    // or when the increment count differs from grid.cells().
    CumulativeKernel(Grid grid, double base, std::vector<double> increments);

    static CumulativeKernel zero(const Grid& grid);

    const Grid& grid() const noexcept { return grid_; }
    double base() const noexcept { return base_; }
    // increments()[j-1] is w_j, the rise of P over cell j.
    const std::vector<double>& increments() const noexcept { return increments_; }

    std::vector<double> node_values() const;
    double value_at(double x) const;
    double total_mass() const;  // P(B) - P(0)
    double sup_value() const;   // P(B)

    // a P1 + b P2 for a, b >= 0.
    static CumulativeKernel combine(double a, const CumulativeKernel& p1, double b,
                                    const CumulativeKernel& p2);

private:
    Grid grid_;
    double base_;
    std::vector<double> increments_;
};

// A payoff F(., theta) sampled at the grid nodes, with the regularity
// constants used by the continuity and consistency arguments.
struct Payoff {
    Grid grid;
    std::vector<double> values;  // F(x_j), j = 0..M; values.back() == 0
    double theta = 0.0;
    double lipschitz_const = 1.0;
    double variation_bound = 0.0;

    // Throws InputError if F(x_M) != 0 or the discrete total variation
    // exceeds variation_bound.
    void validate() const;
};

double total_variation(const Payoff& payoff);

// max(K - x, 0); Lipschitz constant 1 in K, variation bound K.
Payoff put_payoff(const Grid& grid, double strike);
// scale * max(K - x, 0) with caller-declared constants (used to exercise the
// family validator).
Payoff scaled_put_payoff(const Grid& grid, double strike, double scale,
                         double declared_lipschitz);
// 1_{x <= K}: a single unit down-jump at K. Requires K < B.
Payoff digital_payoff(const Grid& grid, double strike);

// Observed (strike, price) pairs. Prices are not clipped, so they may be
// negative after noise.
struct QuoteSet {
    std::vector<double> strikes;
    std::vector<double> prices;
    std::vector<double> sigmas;  // per-quote noise level; empty when unknown
    double strike_bound = 0.0;   // K-bar; defaults to max strike
    std::optional<std::uint64_t> seed;

    std::size_t size() const noexcept { return strikes.size(); }
    double max_strike() const;
    std::optional<double> noise_sigma() const;

    // Throws InputError on empty set, length mismatch, non-finite values or
    // strikes outside [0, strike_bound].
    void validate() const;
};

// Integral over [0, K] of the piecewise-linear interpolant of arbitrary node
// values (no monotonicity required).
double integrate_nodes(std::span<const double> node_values, const Grid& grid, double strike);

// Put price S(K) = int_0^K P(x) dx, exact for piecewise-linear P.
// Throws DomainError unless 0 <= K <= B.
double price_put(const CumulativeKernel& kernel, double strike);

// Coefficients of (base, w_1..w_M) in price_put at this strike; size M+1.
std::vector<double> put_pricing_row(const Grid& grid, double strike);

// -sum_j P(mid_j) (F(x_{j+1}) - F(x_j)). Throws ShapeError on grid mismatch.
double price_payoff(const CumulativeKernel& kernel, const Payoff& payoff);

// Distances over the nodes with x_j <= upper (all nodes by default).
// l2_distance integrates the squared node differences with the trapezoid rule.
double sup_distance(const CumulativeKernel& p1, const CumulativeKernel& p2,
                    double upper = std::numeric_limits<double>::infinity());
double l2_distance(const CumulativeKernel& p1, const CumulativeKernel& p2,
                   double upper = std::numeric_limits<double>::infinity());

struct PayoffFamilyReport {
    bool lipschitz_ok = true;
    bool variation_ok = true;
    // Largest observed sup_x |F1 - F2| / (C1 |theta1 - theta2|) over pairs.
    double worst_lipschitz_ratio = 0.0;
    // Largest observed TV(F) / variation_bound.
    double worst_variation_ratio = 0.0;
    double max_variation = 0.0;
    std::size_t pairs_checked = 0;

    bool passed() const noexcept { return lipschitz_ok && variation_ok; }
};

// Checks uniform Lipschitz continuity in theta (with the smallest declared
// constant) and the uniform variation bound. Violations are reported, not
// thrown.
PayoffFamilyReport validate_payoff_family(std::span<const Payoff> payoffs);

} // namespace kernest
