#pragma once

#include "kernest/core.hpp"
#include "kernest/rng.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kernest {

enum class KernelShape { uniform, triangular, bimodal, table };

std::string_view to_string(KernelShape shape) noexcept;
KernelShape parse_kernel_shape(std::string_view name);  // throws SpecError

// Ground-truth (or prior) kernel description. Shape parameters are in
// factor units; unused fields are ignored for the chosen shape.
struct KernelSpec {
    KernelShape shape = KernelShape::bimodal;
    double total_mass = 0.95;  // P(B) - P(0)
    double base = 0.0;         // P(0)
    // bimodal: bump centres; triangular: modes[0] is the peak (default B/2)
    std::vector<double> modes{0.3, 0.7};
    double width = 0.08;       // bimodal bump standard deviation
    std::vector<double> weights{0.5, 0.5};
    std::vector<double> increments;  // table shape only; one per cell

    static KernelSpec uniform(double mass, double base = 0.0);
    static KernelSpec triangular(double mass, double mode, double base = 0.0);
    static KernelSpec bimodal(double mass, std::vector<double> modes, double width,
                              double base = 0.0);
    static KernelSpec table(std::vector<double> increments, double base = 0.0);

    void validate() const;
};

enum class StrikeDensityKind { uniform, linear_tilt };

std::string_view to_string(StrikeDensityKind kind) noexcept;
StrikeDensityKind parse_strike_density(std::string_view name);

// Strike sampling density on [0, K-bar]. For linear_tilt the density rises
// linearly from lower_bound_k at 0 to 2/K-bar - lower_bound_k at K-bar.
struct StrikeDensitySpec {
    StrikeDensityKind kind = StrikeDensityKind::uniform;
    double lower_bound_k = 1.0;
    double upper = 1.0;  // K-bar

    static StrikeDensitySpec uniform_on(double upper);
    static StrikeDensitySpec linear_tilt(double k, double upper);

    double density(double x) const;
    double cdf(double x) const;
    double inverse_cdf(double u) const;
    void validate() const;
};

enum class NoiseKind { gaussian, uniform };

std::string_view to_string(NoiseKind kind) noexcept;
NoiseKind parse_noise_kind(std::string_view name);

// Additive, zero-mean price noise with standard deviation sigma.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double sigma = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

CumulativeKernel make_kernel(const KernelSpec& spec, const Grid& grid);

// i.i.d. inverse-CDF draws; bit-identical for a given seed.
std::vector<double> sample_strikes(std::size_t n, const StrikeDensitySpec& spec,
                                   std::uint64_t seed);

// S_i = price_put(P, K_i) + eps_i, unclipped. strike_bound defaults to B.
QuoteSet generate_quotes(const CumulativeKernel& kernel, const std::vector<double>& strikes,
                         const NoiseSpec& noise, double strike_bound = -1.0);

// Random member of the monotone cone, used by the property checks. Mixes
// dense, sparse (atomic) and smooth increment patterns.
CumulativeKernel random_feasible_kernel(const Grid& grid, Rng& rng, double max_mass = 1.0,
                                        double max_base = 0.2);

} // namespace kernest
