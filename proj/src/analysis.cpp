#include "kernest/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <limits>
#include <cmath>
#include <numbers>
#include <thread>

namespace kernest {

// ---------------------------------------------------------------- ill-posedness

IllposedResult illposed_demo(double alpha, double beta, double k_bar, const Grid& grid) {
    if (!(alpha >= 0.0)) throw PreconditionError("illposed_demo: alpha must be >= 0");
    if (!(beta > 0.0)) throw PreconditionError("illposed_demo: beta must be > 0");
    if (!(k_bar > 0.0) || k_bar > grid.upper()) {
        throw PreconditionError("illposed_demo: K_bar must lie in (0, B]");
    }
    if (beta * k_bar < 0.5 * std::numbers::pi) {
        throw PreconditionError("illposed_demo: beta * K_bar must be >= pi/2");
    }
    IllposedResult r;
    r.alpha = alpha;
    r.beta = beta;
    std::vector<double> perturbation(grid.num_nodes());
    for (std::size_t j = 0; j < perturbation.size(); ++j) {
        perturbation[j] = alpha * std::cos(beta * grid.node(j));
        r.input_sup = std::max(r.input_sup, std::abs(perturbation[j]));
    }
    // Running integral of the piecewise-linear interpolant, node by node.
    const std::size_t last = grid.last_node_at_or_below(k_bar);
    const double dx = grid.spacing();
    double s = 0.0;
    for (std::size_t j = 1; j <= last; ++j) {
        s += 0.5 * dx * (perturbation[j - 1] + perturbation[j]);
        r.output_sup = std::max(r.output_sup, std::abs(s));
    }
    if (grid.node(last) < k_bar) {
        r.output_sup = std::max(r.output_sup, std::abs(integrate_nodes(perturbation, grid, k_bar)));
    }
    if (r.output_sup > 0.0) r.amplification = r.input_sup / r.output_sup;
    return r;
}

// ---------------------------------------------------------------- delta-entropy

double empirical_distance(std::span<const double> f, std::span<const double> g) {
    if (f.size() != g.size() || f.empty()) throw InputError("empirical_distance: sample size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double d = f[i] - g[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(f.size()));
}

EntropyReport empirical_entropy(const std::vector<std::vector<double>>& family, double delta) {
    if (family.empty()) throw InputError("empirical_entropy: empty family");
    if (!(delta > 0.0)) throw InputError("empirical_entropy: delta must be > 0");
    const std::size_t n = family.front().size();
    if (n == 0) throw InputError("empirical_entropy: functions have no sample points");
    for (const auto& f : family) {
        if (f.size() != n) throw InputError("empirical_entropy: functions sampled at different points");
    }
    std::vector<char> covered(family.size(), 0);
    std::size_t centres = 0;
    for (std::size_t c = 0; c < family.size(); ++c) {
        if (covered[c]) continue;
        ++centres;
        for (std::size_t k = c; k < family.size(); ++k) {
            if (!covered[k] && empirical_distance(family[c], family[k]) <= delta) covered[k] = 1;
        }
    }
    return EntropyReport{delta, n, centres, std::log(static_cast<double>(centres)) / static_cast<double>(n)};
}

// ---------------------------------------------------------------- lemma checks

ContinuityCheck check_continuity_bound(const CumulativeKernel& p1, const CumulativeKernel& p2,
                                       const Payoff& payoff) {
    ContinuityCheck c;
    c.lhs = std::abs(price_payoff(p1, payoff) - price_payoff(p2, payoff));
    c.bound = total_variation(payoff) * sup_distance(p1, p2);
    c.holds = c.lhs <= c.bound + 1e-10;
    return c;
}

DensityLemmaCheck check_density_lemma(std::span<const double> f_nodes, std::span<const double> strikes,
                                      double k, const Grid& grid) {
    if (f_nodes.size() != grid.num_nodes()) throw ShapeError("check_density_lemma: f must be sampled at grid nodes");
    if (strikes.empty()) throw InputError("check_density_lemma: no strikes");
    if (!(k > 0.0)) throw InputError("check_density_lemma: k must be > 0");
    double sup = 0.0;
    for (double v : f_nodes) {
        if (!(v >= 0.0)) throw InputError("check_density_lemma: f must be non-negative");
        sup = std::max(sup, v);
    }
    DensityLemmaCheck out;
    const double dx = grid.spacing();
    for (std::size_t j = 0; j + 1 < f_nodes.size(); ++j) out.integral += 0.5 * dx * (f_nodes[j] + f_nodes[j + 1]);
    double sum = 0.0;
    for (double x : strikes) {
        if (x < 0.0 || x > grid.upper()) throw InputError("check_density_lemma: strike outside [0, B]");
        const std::size_t j = grid.cell_of(x);
        const double t = (x - grid.node(j)) / dx;
        sum += (1.0 - t) * f_nodes[j] + t * f_nodes[j + 1];
    }
    const auto n = static_cast<double>(strikes.size());
    out.empirical_mean = sum / n;
    out.tolerance = 3.0 * sup / std::sqrt(n);
    out.bound_holds = out.integral <= out.empirical_mean / k + out.tolerance;
    return out;
}

ProjectionCheck check_projection_inequality(const QuoteSet& quotes, const Estimate& cls_estimate,
                                            std::span<const CumulativeKernel> trial_kernels) {
    const std::size_t n = quotes.size();
    if (cls_estimate.fitted_prices.size() != n) {
        throw InputError("check_projection_inequality: estimate was not fitted to these quotes");
    }
    ProjectionCheck out;
    out.threshold = -1e-8 * static_cast<double>(n);
    out.worst_slack = std::numeric_limits<double>::infinity();
    const auto& fitted = cls_estimate.fitted_prices;
    for (const auto& r : trial_kernels) {
        if (r.base() < 0.0 ||
            std::any_of(r.increments().begin(), r.increments().end(), [](double w) { return w < 0.0; })) {
            throw InputError("check_projection_inequality: trial kernel is not monotone");
        }
        if (!(r.grid() == cls_estimate.kernel.grid())) throw ShapeError("trial kernel grid mismatch");
        const auto nodes = r.node_values();
        double lhs = 0.0, fit_err = 0.0, gap = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ri = integrate_nodes(nodes, r.grid(), quotes.strikes[i]);
            lhs += (ri - quotes.prices[i]) * (ri - quotes.prices[i]);
            fit_err += (fitted[i] - quotes.prices[i]) * (fitted[i] - quotes.prices[i]);
            gap += (ri - fitted[i]) * (ri - fitted[i]);
        }
        const double slack = lhs - (fit_err + gap);
        out.slacks.push_back(slack);
        out.worst_slack = std::min(out.worst_slack, slack);
        if (slack < out.threshold) ++out.violations;
        ++out.trials;
    }
    if (out.trials == 0) out.worst_slack = 0.0;
    return out;
}

// ---------------------------------------------------------------- consistency study

std::string_view to_string(Method m) noexcept { return m == Method::cls ? "cls" : "rme"; }

Method parse_method(std::string_view name) {
    if (name == "cls") return Method::cls;
    if (name == "rme") return Method::rme;
    throw SpecError("unknown study method '" + std::string(name) + "'");
}

void StudyConfig::validate() const {
    truth.validate();
    prior.validate();
    Grid(grid_upper, grid_cells);
    strikes.validate();
    noise.validate();
    fit.validate();
    if (strikes.upper > grid_upper) throw SpecError("strike upper bound exceeds grid bound");
    if (n_schedule.empty()) throw SpecError("N_schedule must not be empty");
    for (std::size_t i = 0; i < n_schedule.size(); ++i) {
        if (n_schedule[i] == 0) throw SpecError("N_schedule entries must be >= 1");
        if (i > 0 && n_schedule[i] <= n_schedule[i - 1]) throw SpecError("N_schedule must be strictly increasing");
    }
    if (replications == 0) throw SpecError("replications must be >= 1");
    if (methods.empty()) throw SpecError("methods must not be empty");
    if (!(lambda0 > 0.0) || !(gamma > 0.0)) throw SpecError("lambda0 and gamma must be positive");
}

bool StudyRow::same_result(const StudyRow& o) const {
    return method == o.method && n == o.n && replication == o.replication && ok == o.ok &&
           error == o.error && sup_error == o.sup_error && l2_error == o.l2_error &&
           objective == o.objective && lambda == o.lambda && iterations == o.iterations;
}

const StudyAggregate* StudyReport::find(Method m, std::size_t n) const {
    for (const auto& a : aggregates) {
        if (a.method == m && a.n == n) return &a;
    }
    return nullptr;
}

namespace {

template <typename Field>
bool trend_decreasing(const StudyReport& report, Method m, Field field) {
    const StudyAggregate* first = nullptr;
    const StudyAggregate* last = nullptr;
    for (const auto& a : report.aggregates) {
        if (a.method != m) continue;
        if (!first || a.n < first->n) first = &a;
        if (!last || a.n > last->n) last = &a;
    }
    return first && last && first != last && field(*last) < field(*first);
}

} // namespace

bool StudyReport::sup_trend_decreasing(Method m) const {
    return trend_decreasing(*this, m, [](const StudyAggregate& a) { return a.median_sup_error; });
}

bool StudyReport::l2_trend_decreasing(Method m) const {
    return trend_decreasing(*this, m, [](const StudyAggregate& a) { return a.median_l2_error; });
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

QuoteSet study_quotes(const StudyConfig& config, const CumulativeKernel& truth, std::size_t n,
                      std::size_t replication) {
    const std::uint64_t rep_seed = config.master_seed + replication;
    const auto strikes = sample_strikes(n, config.strikes, derive_seed(rep_seed, {n, 1}));
    NoiseSpec noise = config.noise;
    noise.seed = derive_seed(rep_seed, {n, 2});
    QuoteSet q = generate_quotes(truth, strikes, noise, config.strikes.upper);
    q.seed = rep_seed;
    return q;
}

StudyReport run_consistency_study(const StudyConfig& config) {
    config.validate();
    const Grid grid(config.grid_upper, config.grid_cells);
    const CumulativeKernel truth = make_kernel(config.truth, grid);
    const CumulativeKernel prior = make_kernel(config.prior, grid);

    std::vector<Method> methods = config.methods;
    std::sort(methods.begin(), methods.end());
    methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

    const std::size_t cells = config.n_schedule.size() * config.replications;
    const std::size_t per_method = cells;
    std::vector<StudyRow> rows(methods.size() * per_method);

    auto run_cell = [&](std::size_t cell) {
        const std::size_t ni = cell / config.replications;
        const std::size_t rep = cell % config.replications;
        const std::size_t n = config.n_schedule[ni];
        const QuoteSet quotes = study_quotes(config, truth, n, rep);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            StudyRow& row = rows[mi * per_method + cell];
            row.method = methods[mi];
            row.n = n;
            row.replication = rep;
            const auto start = std::chrono::steady_clock::now();
            try {
                Estimate est = methods[mi] == Method::cls
                                   ? fit_cls(quotes, grid, config.fit)
                                   : fit_rme(quotes, prior, lambda_schedule(n, config.lambda0, config.gamma),
                                             grid, config.fit);
                const double upper = est.error_region_upper();
                row.sup_error = sup_distance(est.kernel, truth, upper);
                row.l2_error = l2_distance(est.kernel, truth, upper);
                row.objective = est.objective;
                row.lambda = est.lambda;
                row.iterations = est.iterations;
                row.ok = std::isfinite(row.sup_error) && std::isfinite(row.l2_error) &&
                         std::isfinite(row.objective);
                if (!row.ok) row.error = "non-finite result";
            } catch (const Error& e) {
                row.ok = false;
                row.error = e.what();
            }
            row.runtime_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
    };

    std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, cells);
    if (threads <= 1) {
        for (std::size_t c = 0; c < cells; ++c) run_cell(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < cells; c = next++) run_cell(c);
            });
        }
        for (auto& th : pool) th.join();
    }

    // Ordered by (method, N, replication).
    StudyReport report;
    std::stable_sort(rows.begin(), rows.end(), [](const StudyRow& a, const StudyRow& b) {
        if (a.method != b.method) return a.method < b.method;
        if (a.n != b.n) return a.n < b.n;
        return a.replication < b.replication;
    });
    report.rows = std::move(rows);
    for (const auto& r : report.rows) {
        if (!r.ok) ++report.failures;
    }
    if (2 * report.failures > report.rows.size()) {
        throw StudyError("consistency study aborted: " + std::to_string(report.failures) + " of " +
                         std::to_string(report.rows.size()) + " fits failed");
    }
    for (Method m : methods) {
        for (std::size_t n : config.n_schedule) {
            StudyAggregate agg{m, n};
            std::vector<double> sup, l2;
            for (const auto& r : report.rows) {
                if (r.method == m && r.n == n && r.ok) {
                    sup.push_back(r.sup_error);
                    l2.push_back(r.l2_error);
                }
            }
            agg.succeeded = sup.size();
            agg.median_sup_error = median(sup);
            agg.median_l2_error = median(l2);
            report.aggregates.push_back(agg);
        }
    }
    return report;
}

} // namespace kernest
