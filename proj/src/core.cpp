#include "kernest/core.hpp"

#include "kernest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kernest {

namespace {

constexpr double kFamilyTol = 1e-12;

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b)) {
        throw ShapeError(std::string(what) + ": grid mismatch (B=" + std::to_string(a.upper()) +
                         ", M=" + std::to_string(a.cells()) + " vs B=" +
                         std::to_string(b.upper()) + ", M=" + std::to_string(b.cells()) + ")");
    }
}

} // namespace

// ---------------------------------------------------------------- Grid

Grid::Grid(double upper, std::size_t cells) : upper_(upper), cells_(cells) {
    if (!(upper > 0.0) || !std::isfinite(upper)) {
        throw SpecError("grid upper bound must be positive and finite");
    }
    if (cells < 2) {
        throw SpecError("grid needs at least 2 cells");
    }
}

std::vector<double> Grid::nodes() const {
    std::vector<double> x(num_nodes());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = node(j);
    return x;
}

std::size_t Grid::cell_of(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const double pos = x / spacing();
    const auto j = static_cast<std::size_t>(std::floor(pos));
    return std::min(j, cells_ - 1);
}

std::size_t Grid::last_node_at_or_below(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    if (x >= upper_) return cells_;
    const double pos = x / spacing();
    auto j = static_cast<std::size_t>(std::floor(pos * (1.0 + 1e-14)));
    j = std::min(j, cells_);
    while (j > 0 && node(j) > x * (1.0 + 1e-14)) --j;
    return j;
}

// ---------------------------------------------------------------- CumulativeKernel

CumulativeKernel::CumulativeKernel(Grid grid, double base, std::vector<double> increments)
    : grid_(grid), base_(base), increments_(std::move(increments)) {
    if (increments_.size() != grid_.cells()) {
        throw InputError("kernel has " + std::to_string(increments_.size()) +
                         " increments, grid has " + std::to_string(grid_.cells()) + " cells");
    }
    if (!(base_ >= 0.0) || !std::isfinite(base_)) {
        throw InputError("kernel base P(0) must be finite and non-negative");
    }
    for (std::size_t j = 0; j < increments_.size(); ++j) {
        const double w = increments_[j];
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw InputError("kernel increment " + std::to_string(j + 1) +
                             " is negative or non-finite (" + std::to_string(w) + ")");
        }
    }
}

CumulativeKernel CumulativeKernel::zero(const Grid& grid) {
    return CumulativeKernel(grid, 0.0, std::vector<double>(grid.cells(), 0.0));
}

std::vector<double> CumulativeKernel::node_values() const {
    std::vector<double> p(grid_.num_nodes());
    double acc = base_;
    p[0] = acc;
    for (std::size_t j = 0; j < increments_.size(); ++j) {
        acc += increments_[j];
        p[j + 1] = acc;
    }
    return p;
}

double CumulativeKernel::value_at(double x) const {
    if (x <= 0.0) return base_;
    if (x >= grid_.upper()) return sup_value();
    const std::size_t j = grid_.cell_of(x);
    double left = base_;
    for (std::size_t l = 0; l < j; ++l) left += increments_[l];
    const double t = (x - grid_.node(j)) / grid_.spacing();
    return left + t * increments_[j];
}

double CumulativeKernel::total_mass() const {
    double s = 0.0;
    for (double w : increments_) s += w;
    return s;
}

double CumulativeKernel::sup_value() const { return base_ + total_mass(); }

CumulativeKernel CumulativeKernel::combine(double a, const CumulativeKernel& p1, double b,
                                           const CumulativeKernel& p2) {
    require_same_grid(p1.grid(), p2.grid(), "combine");
    if (a < 0.0 || b < 0.0) throw InputError("combine: coefficients must be non-negative");
    std::vector<double> w(p1.increments_.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = a * p1.increments_[j] + b * p2.increments_[j];
    }
    return CumulativeKernel(p1.grid_, a * p1.base_ + b * p2.base_, std::move(w));
}

// ---------------------------------------------------------------- Payoff

double total_variation(const Payoff& payoff) {
    double tv = 0.0;
    for (std::size_t j = 0; j + 1 < payoff.values.size(); ++j) {
        tv += std::abs(payoff.values[j + 1] - payoff.values[j]);
    }
    return tv;
}

void Payoff::validate() const {
    if (values.size() != grid.num_nodes()) {
        throw InputError("payoff has " + std::to_string(values.size()) + " samples, grid has " +
                         std::to_string(grid.num_nodes()) + " nodes");
    }
    if (values.back() != 0.0) {
        throw InputError("payoff must vanish at the upper grid bound");
    }
    const double tv = total_variation(*this);
    if (tv > variation_bound * (1.0 + kFamilyTol) + kFamilyTol) {
        throw InputError("payoff total variation " + std::to_string(tv) +
                         " exceeds declared bound " + std::to_string(variation_bound));
    }
}

Payoff scaled_put_payoff(const Grid& grid, double strike, double scale,
                         double declared_lipschitz) {
    if (strike < 0.0 || strike > grid.upper()) {
        throw DomainError("put strike " + std::to_string(strike) + " outside [0, B]");
    }
    Payoff f{grid, std::vector<double>(grid.num_nodes()), strike, declared_lipschitz,
             std::abs(scale) * strike};
    for (std::size_t j = 0; j < f.values.size(); ++j) {
        f.values[j] = scale * std::max(strike - grid.node(j), 0.0);
    }
    return f;
}

Payoff put_payoff(const Grid& grid, double strike) {
    return scaled_put_payoff(grid, strike, 1.0, 1.0);
}

Payoff digital_payoff(const Grid& grid, double strike) {
    if (strike < 0.0 || strike >= grid.upper()) {
        throw DomainError("digital strike must lie in [0, B)");
    }
    // Not Lipschitz in the strike; the declared constant is irrelevant here.
    Payoff f{grid, std::vector<double>(grid.num_nodes()), strike,
             std::numeric_limits<double>::infinity(), 1.0};
    for (std::size_t j = 0; j < f.values.size(); ++j) {
        f.values[j] = grid.node(j) <= strike ? 1.0 : 0.0;
    }
    return f;
}

// ---------------------------------------------------------------- QuoteSet

double QuoteSet::max_strike() const {
    if (strikes.empty()) throw InputError("empty quote set");
    return *std::max_element(strikes.begin(), strikes.end());
}

std::optional<double> QuoteSet::noise_sigma() const {
    if (sigmas.empty()) return std::nullopt;
    const double s0 = sigmas.front();
    for (double s : sigmas) {
        if (s != s0) return std::nullopt;
    }
    return s0;
}

void QuoteSet::validate() const {
    if (strikes.empty()) throw InputError("quote set is empty");
    if (prices.size() != strikes.size()) throw InputError("strike/price length mismatch");
    if (!sigmas.empty() && sigmas.size() != strikes.size()) {
        throw InputError("sigma column length mismatch");
    }
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        if (!std::isfinite(strikes[i]) || !std::isfinite(prices[i])) {
            throw InputError("quote " + std::to_string(i + 1) + " is not finite");
        }
        if (strikes[i] < 0.0 || strikes[i] > strike_bound) {
            throw InputError("strike " + std::to_string(strikes[i]) + " outside [0, " +
                             std::to_string(strike_bound) + "]");
        }
    }
}

// ---------------------------------------------------------------- pricing

double integrate_nodes(std::span<const double> p, const Grid& grid, double strike) {
    if (p.size() != grid.num_nodes()) {
        throw ShapeError("integrate_nodes: expected " + std::to_string(grid.num_nodes()) +
                         " node values, got " + std::to_string(p.size()));
    }
    if (!(strike >= 0.0) || strike > grid.upper()) {
        throw DomainError("strike " + std::to_string(strike) + " outside [0, " +
                          std::to_string(grid.upper()) + "]");
    }
    if (strike == 0.0) return 0.0;
    const double dx = grid.spacing();
    const std::size_t j = grid.cell_of(strike);
    double s = 0.0;
    for (std::size_t l = 0; l < j; ++l) s += 0.5 * dx * (p[l] + p[l + 1]);
    const double t = strike - grid.node(j);
    const double slope = (p[j + 1] - p[j]) / dx;
    return s + p[j] * t + 0.5 * slope * t * t;
}

double price_put(const CumulativeKernel& kernel, double strike) {
    const auto p = kernel.node_values();
    return integrate_nodes(p, kernel.grid(), strike);
}

std::vector<double> put_pricing_row(const Grid& grid, double strike) {
    if (!(strike >= 0.0) || strike > grid.upper()) {
        throw DomainError("strike " + std::to_string(strike) + " outside [0, " +
                          std::to_string(grid.upper()) + "]");
    }
    const double dx = grid.spacing();
    std::vector<double> row(grid.cells() + 1, 0.0);
    row[0] = strike;
    // w_l lifts P by the ramp clamp((x - x_{l-1}) / dx, 0, 1).
    for (std::size_t l = 1; l <= grid.cells(); ++l) {
        const double left = grid.node(l - 1);
        if (strike <= left) break;
        const double t = strike - left;
        row[l] = t <= dx ? 0.5 * t * t / dx : t - 0.5 * dx;
    }
    return row;
}

double price_payoff(const CumulativeKernel& kernel, const Payoff& payoff) {
    require_same_grid(kernel.grid(), payoff.grid, "price_payoff");
    if (payoff.values.size() != kernel.grid().num_nodes()) {
        throw ShapeError("price_payoff: payoff sample count does not match grid");
    }
    const auto p = kernel.node_values();
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
        const double mid = 0.5 * (p[j] + p[j + 1]);
        s -= mid * (payoff.values[j + 1] - payoff.values[j]);
    }
    return s;
}

// ---------------------------------------------------------------- distances

double sup_distance(const CumulativeKernel& p1, const CumulativeKernel& p2, double upper) {
    require_same_grid(p1.grid(), p2.grid(), "sup_distance");
    const auto a = p1.node_values();
    const auto b = p2.node_values();
    const std::size_t last = p1.grid().last_node_at_or_below(upper);
    double d = 0.0;
    for (std::size_t j = 0; j <= last; ++j) d = std::max(d, std::abs(a[j] - b[j]));
    return d;
}

double l2_distance(const CumulativeKernel& p1, const CumulativeKernel& p2, double upper) {
    require_same_grid(p1.grid(), p2.grid(), "l2_distance");
    const auto a = p1.node_values();
    const auto b = p2.node_values();
    const std::size_t last = p1.grid().last_node_at_or_below(upper);
    if (last == 0) return 0.0;
    const double dx = p1.grid().spacing();
    double s = 0.0;
    for (std::size_t j = 0; j <= last; ++j) {
        const double d = a[j] - b[j];
        const double weight = (j == 0 || j == last) ? 0.5 * dx : dx;
        s += weight * d * d;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------- payoff families

PayoffFamilyReport validate_payoff_family(std::span<const Payoff> payoffs) {
    PayoffFamilyReport report;
    for (const auto& f : payoffs) {
        const double tv = total_variation(f);
        report.max_variation = std::max(report.max_variation, tv);
        const double ratio = f.variation_bound > 0.0 ? tv / f.variation_bound
                                                     : (tv > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        report.worst_variation_ratio = std::max(report.worst_variation_ratio, ratio);
        if (ratio > 1.0 + kFamilyTol) report.variation_ok = false;
    }
    for (std::size_t a = 0; a < payoffs.size(); ++a) {
        for (std::size_t b = a + 1; b < payoffs.size(); ++b) {
            const auto& fa = payoffs[a];
            const auto& fb = payoffs[b];
            require_same_grid(fa.grid, fb.grid, "validate_payoff_family");
            const double dtheta = std::abs(fa.theta - fb.theta);
            double sup = 0.0;
            for (std::size_t j = 0; j < fa.values.size(); ++j) {
                sup = std::max(sup, std::abs(fa.values[j] - fb.values[j]));
            }
            ++report.pairs_checked;
            const double c = std::max(fa.lipschitz_const, fb.lipschitz_const);
            double ratio = 0.0;
            if (dtheta > 0.0) {
                ratio = sup / (c * dtheta);
            } else if (sup > 0.0) {
                ratio = std::numeric_limits<double>::infinity();
            }
            report.worst_lipschitz_ratio = std::max(report.worst_lipschitz_ratio, ratio);
            if (ratio > 1.0 + kFamilyTol) report.lipschitz_ok = false;
        }
    }
    return report;
}

} // namespace kernest
