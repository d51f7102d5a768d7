#include "commands.hpp"

#include "kernest/analysis.hpp"
#include "kernest/io.hpp"
#include "kernest/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#ifndef KERNEST_VERSION
#define KERNEST_VERSION "0.0.0"
#endif

namespace kernest::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out.flush()) throw IoError("write failed for '" + path + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
}

// A kernel given either as a shape name or as a JSON file (kernel or spec).
CumulativeKernel resolve_kernel(const std::string& what, std::optional<double> mass, const Grid& grid) {
    if (fs::exists(what)) return kernel_from_json(read_json_file(what), grid, what);
    KernelShape shape{};
    try {
        shape = parse_kernel_shape(what);
    } catch (const Error&) {
        throw InputError("'" + what + "' is neither a kernel shape nor an existing JSON file");
    }
    KernelSpec spec;
    switch (shape) {
    case KernelShape::uniform: spec = KernelSpec::uniform(mass.value_or(1.0)); break;
    case KernelShape::triangular: spec = KernelSpec::triangular(mass.value_or(1.0), 0.5); break;
    case KernelShape::bimodal: spec = KernelSpec::bimodal(mass.value_or(0.95), {0.3, 0.7}, 0.08); break;
    case KernelShape::table: throw InputError("a table kernel must be given as a JSON file");
    }
    return make_kernel(spec, grid);
}

json manifest(const std::string& subcommand, const std::string& command_line, json config,
              std::optional<std::uint64_t> seed, const std::vector<std::string>& inputs,
              const std::vector<std::string>& outputs, const std::string& started) {
    json m;
    m["subcommand"] = subcommand;
    m["tool_version"] = KERNEST_VERSION;
    m["command_line"] = command_line;
    m["config"] = std::move(config);
    m["master_seed"] = seed ? json(*seed) : json(nullptr);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["started_at"] = started;
    m["finished_at"] = utc_now();
    return m;
}

std::string with_suffix(const std::string& out, const std::string& suffix) {
    fs::path p(out);
    if (p.extension() == ".csv" || p.extension() == ".json") p.replace_extension();
    return p.string() + suffix;
}

FitOptions fit_options(const FitFlags& f) {
    FitOptions o;
    o.entropy_form = parse_entropy_form(f.entropy_form);
    if (f.kkt_tol) o.kkt_tol = *f.kkt_tol;
    if (f.max_iterations) o.max_iterations = *f.max_iterations;
    o.validate();
    return o;
}

} // namespace

int cmd_simulate(const SimulateFlags& f, const std::string& command_line, std::ostream& log) {
    const std::string started = utc_now();
    if (f.n == 0) throw InputError("--n must be >= 1");
    const Grid grid(f.grid.upper, f.grid.cells);
    const CumulativeKernel truth = resolve_kernel(f.truth, f.truth_mass, grid);

    StudyConfig cfg;
    cfg.grid_upper = grid.upper();
    cfg.grid_cells = grid.cells();
    const double k_bar = f.k_bar.value_or(grid.upper());
    if (k_bar > grid.upper()) throw DomainError("--K-bar exceeds the grid bound B");
    const StrikeDensityKind kind = parse_strike_density(f.strike_density);
    cfg.strikes = kind == StrikeDensityKind::uniform ? StrikeDensitySpec::uniform_on(k_bar)
                                                     : StrikeDensitySpec::linear_tilt(f.density_k.value_or(0.5 / k_bar), k_bar);
    if (kind == StrikeDensityKind::uniform && f.density_k) cfg.strikes.lower_bound_k = *f.density_k;
    cfg.strikes.validate();
    cfg.noise.kind = parse_noise_kind(f.noise);
    cfg.noise.sigma = f.sigma;
    cfg.noise.validate();
    cfg.master_seed = f.seed;

    const QuoteSet quotes = study_quotes(cfg, truth, f.n, 0);

    const std::string csv_path = f.out;
    const std::string truth_path = with_suffix(f.out, ".truth.json");
    const std::string manifest_path = with_suffix(f.out, ".manifest.json");
    {
        std::ostringstream ss;
        write_quotes_csv(ss, quotes, f.with_sigma);
        write_text(csv_path, ss.str());
    }
    write_text(truth_path, kernel_to_json(truth).dump(2) + "\n");

    json config;
    config["truth"] = f.truth;
    config["truth_mass"] = f.truth_mass ? json(*f.truth_mass) : json(nullptr);
    config["n"] = f.n;
    config["grid"] = {{"B", grid.upper()}, {"M", grid.cells()}};
    config["noise"] = {{"kind", std::string(to_string(cfg.noise.kind))}, {"sigma", cfg.noise.sigma}};
    config["strikes"] = {{"kind", std::string(to_string(cfg.strikes.kind))},
                         {"k", cfg.strikes.lower_bound_k},
                         {"K_bar", cfg.strikes.upper}};
    config["with_sigma"] = f.with_sigma;
    write_text(manifest_path, manifest("simulate", command_line, std::move(config), f.seed, {},
                                       {csv_path, truth_path, manifest_path}, started)
                                      .dump(2) + "\n");
    log << "wrote " << quotes.size() << " quotes to " << csv_path << '\n';
    return 0;
}

int cmd_fit(const FitFlags& f, const std::string& command_line, std::ostream& log) {
    const std::string started = utc_now();
    const FitOptions opts = fit_options(f);
    const Grid grid(f.grid.upper, f.grid.cells);

    std::ifstream in(f.in);
    if (!in) throw InputError("cannot read '" + f.in + "'");
    QuoteSet quotes = read_quotes_csv(in, f.in);
    if (quotes.max_strike() > grid.upper()) {
        throw DomainError("strike " + format_double(quotes.max_strike()) + " exceeds grid bound B = " +
                          format_double(grid.upper()));
    }
    quotes.validate();

    if (f.method != "cls" && !f.prior) throw InputError("--method " + f.method + " requires --prior");
    double lambda = 0.0;
    if (f.method == "rme") {
        if (f.lambda.has_value() == f.auto_lambda) {
            throw InputError("--method rme requires exactly one of --lambda or --auto-lambda");
        }
        lambda = f.auto_lambda ? lambda_schedule(quotes.size(), f.lambda0, f.gamma) : *f.lambda;
    } else if (f.lambda || f.auto_lambda) {
        throw InputError("--lambda/--auto-lambda apply to --method rme only");
    }

    std::optional<CumulativeKernel> prior;
    if (f.prior) prior.emplace(resolve_kernel(*f.prior, f.prior_mass, grid));

    Estimate est = [&] {
        if (f.method == "cls") return fit_cls(quotes, grid, opts);
        if (f.method == "rme") return fit_rme(quotes, *prior, lambda, grid, opts);
        if (f.method == "me") return fit_me_exact(quotes, *prior, grid, opts);
        throw InputError("unknown method '" + f.method + "' (expected cls, rme or me)");
    }();

    std::optional<TruthErrors> errors;
    if (f.truth) errors = errors_against(est, resolve_kernel(*f.truth, std::nullopt, grid));

    const std::string manifest_path = with_suffix(f.out, ".manifest.json");
    write_text(f.out, estimate_to_json(est, quotes, opts, errors).dump(2) + "\n");

    json config;
    config["method"] = f.method;
    config["grid"] = {{"B", grid.upper()}, {"M", grid.cells()}};
    config["prior"] = f.prior ? json(*f.prior) : json(nullptr);
    config["prior_mass"] = f.prior_mass;
    config["lambda"] = lambda;
    config["auto_lambda"] = f.auto_lambda;
    config["lambda0"] = f.lambda0;
    config["gamma"] = f.gamma;
    config["fit"] = {{"max_iterations", opts.max_iterations},
                     {"kkt_tol", opts.kkt_tol},
                     {"objective_rel_tol", opts.objective_rel_tol},
                     {"entropy_form", std::string(to_string(opts.entropy_form))}};
    std::vector<std::string> inputs{f.in};
    if (f.truth) inputs.push_back(*f.truth);
    write_text(manifest_path, manifest("fit", command_line, std::move(config), quotes.seed, inputs,
                                       {f.out, manifest_path}, started)
                                      .dump(2) + "\n");
    log << f.method << ": objective " << format_double(est.objective) << ", mse " << format_double(est.mse_term)
        << ", iterations " << est.iterations << '\n';
    for (const auto& w : est.warnings) log << "warning: " << w << '\n';
    if (errors) {
        log << "sup error " << format_double(errors->sup_error) << ", L2 error " << format_double(errors->l2_error)
            << " on [0, " << format_double(errors->region_upper) << "]\n";
    }
    return 0;
}

int cmd_study(const StudyFlags& f, const std::string& command_line, std::ostream& log) {
    const std::string started = utc_now();
    StudyConfig cfg = f.config ? study_config_from_json(read_json_file(*f.config)) : StudyConfig{};
    cfg.master_seed = f.seed;
    if (f.threads) cfg.threads = *f.threads;

    const StudyReport report = run_consistency_study(cfg);

    const fs::path dir(f.out_dir);
    const std::string csv_path = (dir / "study.csv").string();
    const std::string json_path = (dir / "study.json").string();
    const std::string manifest_path = (dir / "manifest.json").string();
    {
        std::ostringstream ss;
        write_study_csv(ss, report, f.with_timings);
        write_text(csv_path, ss.str());
    }
    write_text(json_path, study_summary_json(report, cfg).dump(2) + "\n");
    std::vector<std::string> inputs;
    if (f.config) inputs.push_back(*f.config);
    write_text(manifest_path, manifest("study", command_line, study_config_to_json(cfg), cfg.master_seed, inputs,
                                       {csv_path, json_path, manifest_path}, started)
                                      .dump(2) + "\n");

    for (const auto& a : report.aggregates) {
        log << to_string(a.method) << " N=" << a.n << " ok=" << a.succeeded
            << " median_sup=" << format_double(a.median_sup_error)
            << " median_l2=" << format_double(a.median_l2_error) << '\n';
    }
    if (report.failures > 0) log << report.failures << " fits failed (see study.json)\n";
    return 0;
}

int cmd_demo(const DemoFlags& f, std::ostream& out) {
    const Grid grid(f.upper, f.cells);
    char line[160];
    std::snprintf(line, sizeof line, "%10s %10s %14s %14s %14s %14s\n", "alpha", "beta", "input_sup", "output_sup",
                  "amplification", "ampl/beta");
    out << line;
    for (double beta : f.betas) {
        const IllposedResult r = illposed_demo(f.alpha, beta, f.k_bar, grid);
        if (r.amplification) {
            std::snprintf(line, sizeof line, "%10.4g %10.4g %14.6g %14.6g %14.6g %14.6f\n", r.alpha, r.beta,
                          r.input_sup, r.output_sup, *r.amplification, *r.amplification / r.beta);
        } else {
            std::snprintf(line, sizeof line, "%10.4g %10.4g %14.6g %14.6g %14s %14s\n", r.alpha, r.beta, r.input_sup,
                          r.output_sup, "n/a", "n/a");
        }
        out << line;
    }
    return 0;
}

// ---------------------------------------------------------------- check

namespace {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

SuiteResult continuity_suite(std::size_t trials, std::uint64_t seed) {
    const Grid grid(1.0, 400);
    Rng rng(derive_seed(seed, {1}));
    std::size_t violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
        const auto p1 = random_feasible_kernel(grid, rng);
        const auto p2 = random_feasible_kernel(grid, rng);
        const double k = rng.uniform(0.0, 0.999);
        const Payoff payoff = t % 3 == 0   ? put_payoff(grid, k)
                              : t % 3 == 1 ? scaled_put_payoff(grid, k, rng.uniform(0.1, 3.0), 3.0)
                                           : digital_payoff(grid, k);
        const auto c = check_continuity_bound(p1, p2, payoff);
        if (!c.holds) ++violations;
        worst = std::max(worst, c.lhs - c.bound);
    }
    return {"continuity", violations == 0,
            std::to_string(trials) + " trials, " + std::to_string(violations) + " violations, max(lhs-bound) " +
                format_double(worst)};
}

SuiteResult projection_suite(std::size_t trials, std::uint64_t seed) {
    const Grid grid(1.0, 400);
    StudyConfig cfg;
    cfg.master_seed = derive_seed(seed, {2});
    const auto truth = make_kernel(cfg.truth, grid);
    const QuoteSet quotes = study_quotes(cfg, truth, 50, 0);
    const Estimate est = fit_cls(quotes, grid);
    Rng rng(derive_seed(seed, {3}));
    std::vector<CumulativeKernel> kernels;
    kernels.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) kernels.push_back(random_feasible_kernel(grid, rng));
    const auto r = check_projection_inequality(quotes, est, kernels);
    return {"projection", r.passed(),
            std::to_string(r.trials) + " trials, worst slack " + format_double(r.worst_slack) + " (threshold " +
                format_double(r.threshold) + ")"};
}

SuiteResult density_suite(std::size_t seeds, std::uint64_t seed) {
    const Grid grid(1.0, 400);
    std::vector<double> f(grid.num_nodes());
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = grid.node(j) * grid.node(j);
    const auto spec = StrikeDensitySpec::uniform_on(1.0);
    std::size_t failed = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
        const auto strikes = sample_strikes(100000, spec, derive_seed(seed, {4, s}));
        if (!check_density_lemma(f, strikes, spec.lower_bound_k, grid).bound_holds) ++failed;
    }
    return {"density", failed == 0, std::to_string(seeds) + " seeds, " + std::to_string(failed) + " failures"};
}

std::vector<std::vector<double>> put_curve_family(const std::vector<CumulativeKernel>& kernels,
                                                  const std::vector<double>& points) {
    std::vector<std::vector<double>> family;
    family.reserve(kernels.size());
    for (const auto& k : kernels) {
        std::vector<double> v(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) v[i] = price_put(k, points[i]);
        family.push_back(std::move(v));
    }
    return family;
}

SuiteResult entropy_suite(std::uint64_t seed) {
    const Grid grid(1.0, 400);
    Rng rng(derive_seed(seed, {5}));
    std::vector<CumulativeKernel> kernels;
    for (int i = 0; i < 200; ++i) kernels.push_back(random_feasible_kernel(grid, rng));
    const auto spec = StrikeDensitySpec::uniform_on(1.0);
    const auto small = put_curve_family(kernels, sample_strikes(100, spec, derive_seed(seed, {6})));
    const auto large = put_curve_family(kernels, sample_strikes(1000, spec, derive_seed(seed, {7})));
    const auto e100 = empirical_entropy(small, 0.05);
    const auto e1000 = empirical_entropy(large, 0.05);
    bool monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (double delta : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        const double nh = empirical_entropy(small, delta).n_hat;
        monotone = monotone && nh <= prev;
        prev = nh;
    }
    const bool thin = e1000.n_hat < e100.n_hat;
    return {"entropy", monotone && thin,
            "N_hat(0.05): n=100 " + format_double(e100.n_hat) + " (M_hat " + std::to_string(e100.m_hat) +
                "), n=1000 " + format_double(e1000.n_hat) + " (M_hat " + std::to_string(e1000.m_hat) +
                "); monotone in delta: " + (monotone ? "yes" : "no")};
}

SuiteResult illposed_suite() {
    const Grid grid(1.0, 10000);
    bool ok = true;
    std::string detail;
    for (double beta : {10.0, 100.0, 1000.0}) {
        const auto r = illposed_demo(1.0, beta, 1.0, grid);
        const double ratio = r.amplification.value_or(0.0) / beta;
        ok = ok && ratio >= 0.99 && ratio <= 1.01;
        detail += (detail.empty() ? "" : ", ") + std::string("beta ") + format_double(beta) + ": ratio " +
                  format_double(ratio);
    }
    return {"illposed", ok, detail};
}

} // namespace

int cmd_check(const CheckFlags& f, std::ostream& out) {
    std::vector<SuiteResult> results;
    results.push_back(continuity_suite(f.trials, f.seed));
    results.push_back(projection_suite(f.projection_trials, f.seed));
    results.push_back(density_suite(f.density_seeds, f.seed));
    results.push_back(entropy_suite(f.seed));
    results.push_back(illposed_suite());
    bool all = true;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

} // namespace kernest::cli
