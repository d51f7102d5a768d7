#include "kernest/synth.hpp"

#include "kernest/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace kernest {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Mass of the triangular density on [0, B] with peak at c, below x.
double triangular_cdf(double x, double upper, double c) {
    if (x <= 0.0) return 0.0;
    if (x >= upper) return 1.0;
    if (x <= c) return c > 0.0 ? x * x / (upper * c) : 0.0;
    const double r = upper - x;
    return 1.0 - r * r / (upper * (upper - c));
}

std::vector<double> scale_to_mass(std::vector<double> cells, double mass) {
    const double total = std::accumulate(cells.begin(), cells.end(), 0.0);
    if (!(total > 0.0)) {
        if (mass == 0.0) return std::vector<double>(cells.size(), 0.0);
        throw SpecError("kernel shape places no mass on the grid");
    }
    for (double& c : cells) c *= mass / total;
    return cells;
}

} // namespace

std::string_view to_string(KernelShape shape) noexcept {
    switch (shape) {
    case KernelShape::uniform: return "uniform";
    case KernelShape::triangular: return "triangular";
    case KernelShape::bimodal: return "bimodal";
    case KernelShape::table: return "table";
    }
    return "unknown";
}

KernelShape parse_kernel_shape(std::string_view name) {
    if (name == "uniform") return KernelShape::uniform;
    if (name == "triangular") return KernelShape::triangular;
    if (name == "bimodal") return KernelShape::bimodal;
    if (name == "table") return KernelShape::table;
    throw SpecError("unknown kernel shape '" + std::string(name) + "'");
}

KernelSpec KernelSpec::uniform(double mass, double base) {
    KernelSpec s;
    s.shape = KernelShape::uniform;
    s.total_mass = mass;
    s.base = base;
    s.modes.clear();
    s.weights.clear();
    return s;
}

KernelSpec KernelSpec::triangular(double mass, double mode, double base) {
    KernelSpec s;
    s.shape = KernelShape::triangular;
    s.total_mass = mass;
    s.base = base;
    s.modes = {mode};
    s.weights.clear();
    return s;
}

KernelSpec KernelSpec::bimodal(double mass, std::vector<double> modes, double width, double base) {
    KernelSpec s;
    s.shape = KernelShape::bimodal;
    s.total_mass = mass;
    s.base = base;
    s.weights.assign(modes.size(), 1.0 / static_cast<double>(modes.size()));
    s.modes = std::move(modes);
    s.width = width;
    return s;
}

KernelSpec KernelSpec::table(std::vector<double> increments, double base) {
    KernelSpec s;
    s.shape = KernelShape::table;
    s.total_mass = std::accumulate(increments.begin(), increments.end(), 0.0);
    s.base = base;
    s.modes.clear();
    s.weights.clear();
    s.increments = std::move(increments);
    return s;
}

void KernelSpec::validate() const {
    if (!(base >= 0.0) || !std::isfinite(base)) throw SpecError("kernel base must be >= 0");
    if (shape != KernelShape::table && (!(total_mass >= 0.0) || !std::isfinite(total_mass))) {
        throw SpecError("kernel total_mass must be finite and >= 0");
    }
    switch (shape) {
    case KernelShape::uniform:
        break;
    case KernelShape::triangular:
        if (modes.size() > 1) throw SpecError("triangular kernel takes at most one mode");
        break;
    case KernelShape::bimodal:
        if (modes.empty()) throw SpecError("bimodal kernel needs at least one mode");
        if (!(width > 0.0)) throw SpecError("bimodal width must be positive");
        if (!weights.empty() && weights.size() != modes.size()) {
            throw SpecError("bimodal weights must match modes");
        }
        for (double w : weights) {
            if (!(w >= 0.0)) throw SpecError("bimodal weights must be non-negative");
        }
        break;
    case KernelShape::table:
        if (increments.empty()) throw SpecError("table kernel needs increments");
        for (double w : increments) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw SpecError("table increments must be finite and non-negative");
            }
        }
        break;
    }
}

CumulativeKernel make_kernel(const KernelSpec& spec, const Grid& grid) {
    spec.validate();
    const std::size_t m = grid.cells();
    std::vector<double> cells(m, 0.0);
    switch (spec.shape) {
    case KernelShape::uniform:
        cells.assign(m, 1.0);
        break;
    case KernelShape::triangular: {
        const double c = spec.modes.empty() ? 0.5 * grid.upper() : spec.modes.front();
        if (c < 0.0 || c > grid.upper()) throw SpecError("triangular mode outside [0, B]");
        for (std::size_t j = 0; j < m; ++j) {
            cells[j] = triangular_cdf(grid.node(j + 1), grid.upper(), c) -
                       triangular_cdf(grid.node(j), grid.upper(), c);
        }
        break;
    }
    case KernelShape::bimodal: {
        std::vector<double> weights = spec.weights;
        if (weights.empty()) weights.assign(spec.modes.size(), 1.0);
        for (std::size_t j = 0; j < m; ++j) {
            double mass = 0.0;
            for (std::size_t k = 0; k < spec.modes.size(); ++k) {
                mass += weights[k] * (normal_cdf((grid.node(j + 1) - spec.modes[k]) / spec.width) -
                                      normal_cdf((grid.node(j) - spec.modes[k]) / spec.width));
            }
            cells[j] = mass;
        }
        break;
    }
    case KernelShape::table:
        if (spec.increments.size() != m) {
            throw SpecError("table kernel has " + std::to_string(spec.increments.size()) +
                            " increments, grid has " + std::to_string(m) + " cells");
        }
        return CumulativeKernel(grid, spec.base, spec.increments);
    }
    return CumulativeKernel(grid, spec.base, scale_to_mass(std::move(cells), spec.total_mass));
}

// ---------------------------------------------------------------- strikes

std::string_view to_string(StrikeDensityKind kind) noexcept {
    return kind == StrikeDensityKind::uniform ? "uniform" : "linear-tilt";
}

StrikeDensityKind parse_strike_density(std::string_view name) {
    if (name == "uniform") return StrikeDensityKind::uniform;
    if (name == "linear-tilt" || name == "linear_tilt") return StrikeDensityKind::linear_tilt;
    throw SpecError("unknown strike density '" + std::string(name) + "'");
}

StrikeDensitySpec StrikeDensitySpec::uniform_on(double upper) {
    return StrikeDensitySpec{StrikeDensityKind::uniform, 1.0 / upper, upper};
}

StrikeDensitySpec StrikeDensitySpec::linear_tilt(double k, double upper) {
    return StrikeDensitySpec{StrikeDensityKind::linear_tilt, k, upper};
}

void StrikeDensitySpec::validate() const {
    if (!(upper > 0.0) || !std::isfinite(upper)) throw SpecError("strike upper bound must be > 0");
    if (!(lower_bound_k > 0.0)) throw SpecError("strike density lower bound k must be > 0");
    // A density on [0, K-bar] cannot stay above 1/K-bar everywhere.
    if (lower_bound_k > (1.0 / upper) * (1.0 + 1e-12)) {
        throw SpecError("strike density lower bound k exceeds 1/K-bar");
    }
}

double StrikeDensitySpec::density(double x) const {
    if (x < 0.0 || x > upper) return 0.0;
    if (kind == StrikeDensityKind::uniform) return 1.0 / upper;
    const double slope = 2.0 * (1.0 / upper - lower_bound_k) / upper;
    return lower_bound_k + slope * x;
}

double StrikeDensitySpec::cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= upper) return 1.0;
    if (kind == StrikeDensityKind::uniform) return x / upper;
    const double slope = 2.0 * (1.0 / upper - lower_bound_k) / upper;
    return lower_bound_k * x + 0.5 * slope * x * x;
}

double StrikeDensitySpec::inverse_cdf(double u) const {
    if (kind == StrikeDensityKind::uniform) return u * upper;
    const double slope = 2.0 * (1.0 / upper - lower_bound_k) / upper;
    // Root of k x + slope x^2 / 2 = u in the cancellation-free form.
    const double x = 2.0 * u / (lower_bound_k + std::sqrt(lower_bound_k * lower_bound_k + 2.0 * slope * u));
    return std::clamp(x, 0.0, upper);
}

std::vector<double> sample_strikes(std::size_t n, const StrikeDensitySpec& spec, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw InputError("sample_strikes: n must be >= 1");
    Rng rng(seed);
    std::vector<double> strikes(n);
    for (auto& k : strikes) k = spec.inverse_cdf(rng.uniform());
    return strikes;
}

// ---------------------------------------------------------------- noise / quotes

std::string_view to_string(NoiseKind kind) noexcept {
    return kind == NoiseKind::gaussian ? "gaussian" : "uniform";
}

NoiseKind parse_noise_kind(std::string_view name) {
    if (name == "gaussian") return NoiseKind::gaussian;
    if (name == "uniform") return NoiseKind::uniform;
    throw SpecError("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw SpecError("noise sigma must be >= 0");
}

QuoteSet generate_quotes(const CumulativeKernel& kernel, const std::vector<double>& strikes,
                         const NoiseSpec& noise, double strike_bound) {
    noise.validate();
    QuoteSet q;
    q.strike_bound = strike_bound < 0.0 ? kernel.grid().upper() : strike_bound;
    q.seed = noise.seed;
    q.strikes = strikes;
    q.prices.resize(strikes.size());
    q.sigmas.assign(strikes.size(), noise.sigma);
    const auto nodes = kernel.node_values();
    Rng rng(noise.seed);
    const double half_width = std::sqrt(3.0) * noise.sigma;
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        double eps = 0.0;
        if (noise.sigma > 0.0) {
            eps = noise.kind == NoiseKind::gaussian ? noise.sigma * rng.normal()
                                                    : rng.uniform(-half_width, half_width);
        }
        q.prices[i] = integrate_nodes(nodes, kernel.grid(), strikes[i]) + eps;
    }
    return q;
}

CumulativeKernel random_feasible_kernel(const Grid& grid, Rng& rng, double max_mass, double max_base) {
    const std::size_t m = grid.cells();
    std::vector<double> w(m, 0.0);
    const double style = rng.uniform();
    if (style < 0.4) {
        for (auto& v : w) v = -std::log(rng.uniform_open());
    } else if (style < 0.7) {
        const std::size_t atoms = 1 + static_cast<std::size_t>(rng.uniform() * 6.0);
        for (std::size_t a = 0; a < atoms; ++a) {
            const auto j = std::min(m - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(m)));
            w[j] += rng.uniform_open();
        }
    } else {
        const double centre = rng.uniform(0.1, 0.9) * grid.upper();
        const double width = rng.uniform(0.03, 0.3) * grid.upper();
        for (std::size_t j = 0; j < m; ++j) {
            const double mid = 0.5 * (grid.node(j) + grid.node(j + 1));
            const double z = (mid - centre) / width;
            w[j] = std::exp(-0.5 * z * z);
        }
    }
    const double mass = rng.uniform() * max_mass;
    const double base = rng.uniform() * max_base;
    return CumulativeKernel(grid, base, scale_to_mass(std::move(w), mass));
}

} // namespace kernest
