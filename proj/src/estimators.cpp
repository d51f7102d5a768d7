#include "kernest/estimators.hpp"

#include "kernest/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace kernest {

namespace {

// Smallest representable increment in the multiplicative RME updates; keeps
// log terms finite when the optimum underflows.
constexpr double kFloor = 1e-300;
constexpr double kArmijo = 1e-4;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd quote_prices(const QuoteSet& q) {
    return Eigen::Map<const Eigen::VectorXd>(q.prices.data(), static_cast<Eigen::Index>(q.prices.size()));
}

void check_fit_inputs(const QuoteSet& quotes, const Grid& grid) {
    if (quotes.size() == 0) throw InputError("quote set is empty");
    quotes.validate();
    for (double k : quotes.strikes) {
        if (k > grid.upper()) {
            throw InputError("strike " + std::to_string(k) + " beyond grid bound " +
                             std::to_string(grid.upper()));
        }
    }
}

// Fills the fields shared by every estimator.
Estimate finish_estimate(std::string method, const QuoteSet& quotes, const Eigen::MatrixXd& a,
                         const Grid& grid, double base, std::vector<double> increments) {
    for (double& w : increments) w = std::max(w, 0.0);
    CumulativeKernel kernel(grid, std::max(base, 0.0), std::move(increments));
    Eigen::VectorXd x(static_cast<Eigen::Index>(grid.cells() + 1));
    x[0] = kernel.base();
    for (std::size_t j = 0; j < grid.cells(); ++j) x[static_cast<Eigen::Index>(j + 1)] = kernel.increments()[j];
    const Eigen::VectorXd fitted = a * x;
    const Eigen::VectorXd resid = fitted - quote_prices(quotes);

    Estimate e{.method = std::move(method), .kernel = std::move(kernel)};
    e.fitted_prices = to_std(fitted);
    e.mse_term = resid.squaredNorm() / static_cast<double>(quotes.size());
    e.identifiable_upper = quotes.max_strike();
    e.extrapolated.assign(grid.num_nodes(), false);
    if (e.identifiable_upper < grid.upper()) {
        for (std::size_t j = 0; j < grid.num_nodes(); ++j) {
            e.extrapolated[j] = grid.node(j) > e.identifiable_upper;
        }
    }
    return e;
}

double entropy_shift(EntropyForm form) { return form == EntropyForm::paper ? 1.0 : 0.0; }

} // namespace

std::string_view to_string(EntropyForm form) noexcept {
    return form == EntropyForm::paper ? "paper" : "generalized";
}

EntropyForm parse_entropy_form(std::string_view name) {
    if (name == "paper") return EntropyForm::paper;
    if (name == "generalized") return EntropyForm::generalized;
    throw SpecError("unknown entropy form '" + std::string(name) + "'");
}

void FitOptions::validate() const {
    if (max_iterations == 0) throw SpecError("max_iterations must be positive");
    if (!(kkt_tol > 0.0)) throw SpecError("kkt_tol must be positive");
    if (!(objective_rel_tol > 0.0)) throw SpecError("objective_rel_tol must be positive");
}

double Estimate::error_region_upper() const {
    return identifiable_upper >= kernel.grid().upper() ? kernel.grid().upper() : identifiable_upper;
}

Eigen::MatrixXd put_pricing_matrix(const QuoteSet& quotes, const Grid& grid) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(quotes.size()), static_cast<Eigen::Index>(grid.cells() + 1));
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const auto row = put_pricing_row(grid, quotes.strikes[i]);
        for (std::size_t j = 0; j < row.size(); ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return a;
}

double divergence(std::span<const double> w, std::span<const double> w0, EntropyForm form) {
    if (w.size() != w0.size()) throw ShapeError("divergence: length mismatch");
    double d = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (w0[j] <= 0.0) {
            if (w[j] > 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        const double term = w[j] > 0.0 ? w[j] * std::log(w[j] / w0[j]) : 0.0;
        d += form == EntropyForm::paper ? term : term - w[j] + w0[j];
    }
    return d;
}

double lambda_schedule(std::size_t n, double lambda0, double gamma) {
    if (n == 0) throw SpecError("lambda_schedule: N must be >= 1");
    if (!(lambda0 > 0.0) || !(gamma > 0.0)) {
        throw SpecError("lambda_schedule: lambda0 and gamma must be positive");
    }
    return lambda0 * std::pow(static_cast<double>(n), -gamma);
}

// ---------------------------------------------------------------- CLS

Estimate fit_cls(const QuoteSet& quotes, const Grid& grid, const FitOptions& opts) {
    opts.validate();
    check_fit_inputs(quotes, grid);
    const Eigen::MatrixXd a = put_pricing_matrix(quotes, grid);
    const Eigen::VectorXd b = quote_prices(quotes);

    const NnlsResult sol = solve_nnls(a, b, NnlsOptions{opts.max_iterations, opts.kkt_tol});
    std::vector<double> w(sol.x.data() + 1, sol.x.data() + sol.x.size());
    Estimate e = finish_estimate("cls", quotes, a, grid, sol.x[0], std::move(w));
    e.objective = e.mse_term;
    e.iterations = sol.iterations;
    e.kkt_residual = sol.kkt_residual;
    e.nonunique_params = sol.zero_multiplier;
    if (!sol.converged) {
        throw ConvergenceError("constrained least squares did not converge in " +
                                   std::to_string(opts.max_iterations) + " iterations",
                               std::move(e), sol.kkt_residual);
    }
    return e;
}

// ---------------------------------------------------------------- RME

namespace {

class RmeProblem {
public:
    RmeProblem(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& prior,
               double lambda, EntropyForm form)
        : a_(a), b_(b), prior_(prior), lambda_(lambda), shift_(entropy_shift(form)), form_(form),
          inv_n_(1.0 / static_cast<double>(b.size())) {
        gram_.noalias() = (2.0 * inv_n_) * (a.transpose() * a);
        rhs_.noalias() = (2.0 * inv_n_) * (a.transpose() * b);
        scale_ = inv_n_ * b.squaredNorm() + lambda * prior.tail(prior.size() - 1).sum();
        if (!(scale_ > 0.0)) scale_ = 1.0;
    }

    double objective(const Eigen::VectorXd& x) const {
        const double mse = inv_n_ * (a_ * x - b_).squaredNorm();
        return mse + lambda_ * penalty(x);
    }

    double penalty(const Eigen::VectorXd& x) const {
        std::span<const double> w(x.data() + 1, static_cast<std::size_t>(x.size() - 1));
        std::span<const double> w0(prior_.data() + 1, static_cast<std::size_t>(prior_.size() - 1));
        return divergence(w, w0, form_);
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd g = gram_ * x - rhs_;
        for (Eigen::Index j = 1; j < x.size(); ++j) {
            if (prior_[j] > 0.0) g[j] += lambda_ * (std::log(x[j] / prior_[j]) + shift_);
        }
        return g;
    }

    // Scaled stationarity violation: |g_j| w_j on cells, projected gradient
    // on the base.
    double kkt(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
        double worst = x[0] > 0.0 ? std::abs(g[0]) : std::max(-g[0], 0.0);
        for (Eigen::Index j = 1; j < x.size(); ++j) {
            if (prior_[j] > 0.0) worst = std::max(worst, std::abs(g[j]) * x[j]);
        }
        return worst / scale_;
    }

    const Eigen::MatrixXd& gram() const noexcept { return gram_; }
    double lambda() const noexcept { return lambda_; }
    double scale() const noexcept { return scale_; }

private:
    const Eigen::MatrixXd& a_;
    const Eigen::VectorXd& b_;
    const Eigen::VectorXd& prior_;
    double lambda_;
    double shift_;
    EntropyForm form_;
    double inv_n_;
    Eigen::MatrixXd gram_;
    Eigen::VectorXd rhs_;
    double scale_;
};

// Point on the search path: multiplicative in the cells, projected additive
// in the base.
Eigen::VectorXd step_along(const Eigen::VectorXd& x, const Eigen::VectorXd& d,
                           const Eigen::VectorXd& prior, double t) {
    Eigen::VectorXd y = x;
    y[0] = std::max(0.0, x[0] + t * d[0]);
    for (Eigen::Index j = 1; j < x.size(); ++j) {
        if (prior[j] <= 0.0) continue;
        const double expo = std::clamp(t * d[j] / x[j], -745.0, 40.0);
        y[j] = std::max(x[j] * std::exp(expo), kFloor);
    }
    return y;
}

} // namespace

Estimate fit_rme(const QuoteSet& quotes, const CumulativeKernel& prior, double lambda,
                 const Grid& grid, const FitOptions& opts) {
    opts.validate();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
    if (!(prior.grid() == grid)) throw ShapeError("fit_rme: prior grid differs from fitting grid");
    check_fit_inputs(quotes, grid);

    const auto& w0 = prior.increments();
    if (lambda == 0.0) {
        Estimate e = fit_cls(quotes, grid, opts);
        e.method = "rme";
        e.entropy_term = divergence(e.kernel.increments(), w0, opts.entropy_form);
        return e;
    }

    const Eigen::MatrixXd a = put_pricing_matrix(quotes, grid);
    const Eigen::VectorXd b = quote_prices(quotes);
    const Eigen::Index n = a.cols();
    Eigen::VectorXd x0(n);
    x0[0] = prior.base();
    for (Eigen::Index j = 1; j < n; ++j) x0[j] = w0[static_cast<std::size_t>(j - 1)];

    RmeProblem problem(a, b, x0, lambda, opts.entropy_form);

    Eigen::VectorXd x = x0;
    for (Eigen::Index j = 1; j < n; ++j) {
        if (x0[j] > 0.0 && opts.entropy_form == EntropyForm::paper) x[j] = x0[j] / std::exp(1.0);
    }
    double f = problem.objective(x);
    std::vector<double> trace{f};
    Eigen::VectorXd g = problem.gradient(x);
    double kkt = problem.kkt(x, g);

    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(n));
    std::size_t iter = 0;
    bool converged = false;
    double rel_change = std::numeric_limits<double>::infinity();

    while (iter < opts.max_iterations) {
        if (kkt <= opts.kkt_tol && rel_change <= opts.objective_rel_tol) {
            converged = true;
            break;
        }
        ++iter;

        free.clear();
        if (x[0] > 0.0 || g[0] < 0.0) free.push_back(0);
        for (Eigen::Index j = 1; j < n; ++j) {
            if (x0[j] > 0.0) free.push_back(j);
        }
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd h(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index r = 0; r < m; ++r) {
            const Eigen::Index i = free[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m; ++c) h(r, c) = problem.gram()(i, free[static_cast<std::size_t>(c)]);
            if (i > 0) h(r, r) += lambda / x[i];
            rhs[r] = -g[i];
        }
        Eigen::LLT<Eigen::MatrixXd> llt(h);
        Eigen::VectorXd dfree;
        if (llt.info() == Eigen::Success) {
            dfree = llt.solve(rhs);
        } else {
            const double ridge = 1e-12 * h.diagonal().cwiseAbs().maxCoeff();
            h.diagonal().array() += ridge;
            dfree = h.ldlt().solve(rhs);
        }
        Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
        for (Eigen::Index r = 0; r < m; ++r) d[free[static_cast<std::size_t>(r)]] = dfree[r];

        const double slope = g.dot(d);
        if (!(slope < 0.0)) {
            if (kkt <= opts.kkt_tol) {
                converged = true;
            }
            break;
        }

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd trial;
        double f_trial = f;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            trial = step_along(x, d, x0, t);
            f_trial = problem.objective(trial);
            if (std::isfinite(f_trial) && f_trial <= f + kArmijo * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (kkt <= opts.kkt_tol) converged = true;
            break;
        }
        rel_change = (f - f_trial) / std::max(std::abs(f), problem.scale() * 1e-300 + 1e-300);
        x = std::move(trial);
        f = f_trial;
        trace.push_back(f);
        g = problem.gradient(x);
        kkt = problem.kkt(x, g);
    }
    if (!converged && kkt <= opts.kkt_tol && rel_change <= opts.objective_rel_tol) converged = true;

    std::vector<double> w(x.data() + 1, x.data() + n);
    for (double& v : w) {
        if (v <= kFloor) v = 0.0;
    }
    Estimate e = finish_estimate("rme", quotes, a, grid, x[0], std::move(w));
    e.lambda = lambda;
    e.entropy_term = divergence(e.kernel.increments(), w0, opts.entropy_form);
    e.objective = e.mse_term + lambda * e.entropy_term;
    e.iterations = iter;
    e.kkt_residual = kkt;
    e.objective_trace = std::move(trace);

    // Cells the prior excludes but where adding mass would lower the fit error.
    for (Eigen::Index j = 1; j < n; ++j) {
        if (x0[j] <= 0.0 && g[j] < -opts.kkt_tol * problem.scale()) {
            e.infinite_divergence_cells.push_back(static_cast<std::size_t>(j));
        }
    }
    if (!e.infinite_divergence_cells.empty()) {
        e.warnings.push_back("prior has zero mass in " + std::to_string(e.infinite_divergence_cells.size()) +
                             " cell(s) where the data demand mass; divergence would be infinite there");
    }
    if (!converged) {
        throw ConvergenceError("relaxed maximum entropy did not converge (kkt residual " +
                                   std::to_string(kkt) + ")",
                               std::move(e), kkt);
    }
    return e;
}

// ---------------------------------------------------------------- exact ME

Estimate fit_me_exact(const QuoteSet& quotes, const CumulativeKernel& prior, const Grid& grid,
                      const FitOptions& opts) {
    opts.validate();
    if (!(prior.grid() == grid)) throw ShapeError("fit_me_exact: prior grid differs from fitting grid");
    check_fit_inputs(quotes, grid);

    const Eigen::MatrixXd a = put_pricing_matrix(quotes, grid);
    const Eigen::VectorXd b = quote_prices(quotes);
    const Eigen::Index n = a.cols();
    const Eigen::Index rows = a.rows();
    const double shift = entropy_shift(opts.entropy_form);
    const double tol = 1e-11 * std::max(1.0, b.cwiseAbs().maxCoeff());

    Eigen::VectorXd y0(n);
    y0[0] = prior.base();
    for (Eigen::Index j = 1; j < n; ++j) y0[j] = prior.increments()[static_cast<std::size_t>(j - 1)];

    // No kernel in the cone reproduces the prices: report before the dual
    // iteration wanders off to infinity.
    {
        const NnlsResult cls = solve_nnls(a, b, NnlsOptions{opts.max_iterations, 1e-14});
        const double resid = (a * cls.x - b).cwiseAbs().maxCoeff();
        if (resid > 1e3 * tol) {
            throw InfeasibleError("exact maximum entropy is infeasible: no monotone kernel matches the "
                                  "quotes (least-squares residual " + std::to_string(resid) + ")",
                                  resid);
        }
    }

    auto primal = [&](const Eigen::VectorXd& nu, bool& overflow) {
        const Eigen::VectorXd expo = a.transpose() * nu;
        Eigen::VectorXd y(n);
        overflow = false;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (y0[j] <= 0.0) {
                y[j] = 0.0;
                continue;
            }
            const double e = expo[j] - shift;
            if (e > 700.0) overflow = true;
            y[j] = y0[j] * std::exp(std::min(e, 700.0));
        }
        return y;
    };
    // Concave dual: nu.b - sum y_j(nu).
    auto dual_value = [&](const Eigen::VectorXd& nu, const Eigen::VectorXd& y) { return nu.dot(b) - y.sum(); };

    Eigen::VectorXd nu = Eigen::VectorXd::Zero(rows);
    bool overflow = false;
    Eigen::VectorXd y = primal(nu, overflow);
    double psi = dual_value(nu, y);
    Eigen::VectorXd resid = b - a * y;
    std::size_t iter = 0;
    const std::size_t max_iter = std::min<std::size_t>(opts.max_iterations, 500);
    while (resid.cwiseAbs().maxCoeff() > tol && iter < max_iter) {
        ++iter;
        Eigen::MatrixXd h = a * y.asDiagonal() * a.transpose();
        const double ridge = 1e-14 * std::max(h.diagonal().maxCoeff(), 1e-300);
        h.diagonal().array() += ridge;
        const Eigen::VectorXd step = h.ldlt().solve(resid);
        const double slope = resid.dot(step);
        if (!std::isfinite(slope) || slope <= 0.0) break;
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            const Eigen::VectorXd trial = nu + t * step;
            bool of = false;
            const Eigen::VectorXd yt = primal(trial, of);
            if (of) continue;
            const double pt = dual_value(trial, yt);
            if (std::isfinite(pt) && pt >= psi + kArmijo * t * slope) {
                nu = trial;
                y = yt;
                psi = pt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        resid = b - a * y;
        if (nu.cwiseAbs().maxCoeff() > 1e12) break;
    }
    const double final_resid = resid.cwiseAbs().maxCoeff();
    if (!(final_resid <= tol)) {
        throw InfeasibleError("exact maximum entropy failed: price constraints cannot be met with a "
                              "kernel absolutely continuous w.r.t. the prior (residual " +
                                  std::to_string(final_resid) + ")",
                              final_resid);
    }

    std::vector<double> w(y.data() + 1, y.data() + n);
    Estimate e = finish_estimate("me", quotes, a, grid, y[0], std::move(w));
    std::vector<double> full_y(y.data(), y.data() + n);
    std::vector<double> full_y0(y0.data(), y0.data() + n);
    e.entropy_term = divergence(full_y, full_y0, opts.entropy_form);
    e.objective = e.entropy_term;
    e.iterations = iter;
    e.kkt_residual = final_resid;
    return e;
}

} // namespace kernest
