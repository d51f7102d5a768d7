#pragma once

#include "kernest/core.hpp"
#include "kernest/estimators.hpp"
#include "kernest/synth.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kernest {

// ---------------------------------------------------------------- ill-posedness

struct IllposedResult {
    double alpha = 0.0;
    double beta = 0.0;
    double input_sup = 0.0;   // sup_x |alpha cos(beta x)|
    double output_sup = 0.0;  // sup_K |int_0^K alpha cos(beta x) dx|
    // input_sup / output_sup; empty when both vanish.
    std::optional<double> amplification;
};

// Pushes the perturbation alpha cos(beta x) through the unrestricted put
// pricing operator on the grid. Requires beta K_bar >= pi/2 and K_bar <= B.
IllposedResult illposed_demo(double alpha, double beta, double k_bar, const Grid& grid);

// ---------------------------------------------------------------- delta-entropy

struct EntropyReport {
    double delta = 0.0;
    std::size_t n = 0;
    std::size_t m_hat = 0;  // greedy internal covering count
    double n_hat = 0.0;     // ln(m_hat) / n
};

// Root-mean-square distance over the sample points.
double empirical_distance(std::span<const double> f, std::span<const double> g);

// family[k][i] = f_k(x_i). Greedy covering: take the first uncovered member as
// a centre and drop every member within delta of it.
EntropyReport empirical_entropy(const std::vector<std::vector<double>>& family, double delta);

// ---------------------------------------------------------------- lemma checks

struct ContinuityCheck {
    double lhs = 0.0;    // |S1 - S2|
    double bound = 0.0;  // TV(F) * sup |P1 - P2|
    bool holds = false;
};

ContinuityCheck check_continuity_bound(const CumulativeKernel& p1, const CumulativeKernel& p2,
                                       const Payoff& payoff);

struct DensityLemmaCheck {
    double empirical_mean = 0.0;  // (1/N) sum f(K_i)
    double integral = 0.0;        // int_0^B f dx
    double tolerance = 0.0;       // 3 sup f / sqrt(N)
    bool bound_holds = false;     // integral <= mean / k + tolerance
};

// f sampled at the grid nodes (linearly interpolated at the strikes).
DensityLemmaCheck check_density_lemma(std::span<const double> f_nodes,
                                      std::span<const double> strikes, double k,
                                      const Grid& grid);

struct ProjectionCheck {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double worst_slack = 0.0;  // min over trials of lhs - rhs
    double threshold = 0.0;    // -1e-8 N
    std::vector<double> slacks;

    bool passed() const noexcept { return violations == 0; }
};

// For each trial kernel R: sum (R_i - S_i)^2 >= sum (Shat_i - S_i)^2 +
// sum (R_i - Shat_i)^2 - 1e-8 N.
ProjectionCheck check_projection_inequality(const QuoteSet& quotes, const Estimate& cls_estimate,
                                            std::span<const CumulativeKernel> trial_kernels);

// ---------------------------------------------------------------- consistency study

enum class Method { cls, rme };
std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

struct StudyConfig {
    KernelSpec truth = KernelSpec::bimodal(0.95, {0.3, 0.7}, 0.08);
    KernelSpec prior = KernelSpec::uniform(1.0);
    double grid_upper = 1.0;
    std::size_t grid_cells = Grid::kDefaultCells;
    std::vector<std::size_t> n_schedule{100, 200, 400, 800, 1600};
    std::size_t replications = 20;
    NoiseSpec noise{NoiseKind::gaussian, 0.01, 0};  // seed derived per replication
    StrikeDensitySpec strikes = StrikeDensitySpec::uniform_on(1.0);
    std::vector<Method> methods{Method::cls, Method::rme};
    double lambda0 = 0.1;
    double gamma = 0.5;
    FitOptions fit{};
    std::uint64_t master_seed = 0;
    std::size_t threads = 0;  // 0: hardware concurrency

    void validate() const;
};

struct StudyRow {
    Method method = Method::cls;
    std::size_t n = 0;
    std::size_t replication = 0;
    bool ok = false;
    std::string error;
    double sup_error = 0.0;
    double l2_error = 0.0;
    double objective = 0.0;
    double lambda = 0.0;
    std::size_t iterations = 0;
    double runtime_ms = 0.0;  // wall clock; excluded from reproducibility

    bool same_result(const StudyRow& other) const;
};

struct StudyAggregate {
    Method method = Method::cls;
    std::size_t n = 0;
    std::size_t succeeded = 0;
    double median_sup_error = 0.0;
    double median_l2_error = 0.0;
};

struct StudyReport {
    std::vector<StudyRow> rows;  // ordered by (method, N, replication)
    std::vector<StudyAggregate> aggregates;
    std::size_t failures = 0;

    const StudyAggregate* find(Method m, std::size_t n) const;
    // Median error at the largest N below the median at the smallest N.
    bool sup_trend_decreasing(Method m) const;
    bool l2_trend_decreasing(Method m) const;
};

// Quotes for one (replication, N) cell; shared by every method.
QuoteSet study_quotes(const StudyConfig& config, const CumulativeKernel& truth, std::size_t n,
                      std::size_t replication);

// Throws StudyError when more than half the fits fail.
StudyReport run_consistency_study(const StudyConfig& config);

class StudyError : public Error {
public:
    using Error::Error;
};

double median(std::vector<double> values);

} // namespace kernest
