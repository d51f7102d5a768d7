#include "kernest/io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace kernest {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------- quotes CSV

void write_quotes_csv(std::ostream& out, const QuoteSet& quotes, bool with_sigma) {
    with_sigma = with_sigma && !quotes.sigmas.empty();
    out << (with_sigma ? "strike,price,sigma\n" : "strike,price\n");
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        out << format_double(quotes.strikes[i]) << ',' << format_double(quotes.prices[i]);
        if (with_sigma) out << ',' << format_double(quotes.sigmas[i]);
        out << '\n';
    }
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_number(const std::string& cell, const std::string& source, std::size_t line,
                    const char* column) {
    if (cell.empty()) throw ParseError(source, line, std::string("empty ") + column + " field");
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw ParseError(source, line, std::string("invalid ") + column + " value '" + cell + "'");
    }
    if (used != cell.size() || !std::isfinite(v)) {
        throw ParseError(source, line, std::string("invalid ") + column + " value '" + cell + "'");
    }
    return v;
}

} // namespace

QuoteSet read_quotes_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    bool with_sigma = false;
    QuoteSet q;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto cells = split_csv(t);
        if (!have_header) {
            if (cells.size() == 2 && cells[0] == "strike" && cells[1] == "price") {
                with_sigma = false;
            } else if (cells.size() == 3 && cells[0] == "strike" && cells[1] == "price" && cells[2] == "sigma") {
                with_sigma = true;
            } else {
                throw ParseError(source, lineno, "expected header 'strike,price' or 'strike,price,sigma'");
            }
            have_header = true;
            continue;
        }
        const std::size_t expected = with_sigma ? 3 : 2;
        if (cells.size() != expected) {
            throw ParseError(source, lineno, "expected " + std::to_string(expected) + " fields, found " +
                                                 std::to_string(cells.size()));
        }
        const double k = parse_number(cells[0], source, lineno, "strike");
        const double s = parse_number(cells[1], source, lineno, "price");
        if (k < 0.0) throw ParseError(source, lineno, "negative strike");
        q.strikes.push_back(k);
        q.prices.push_back(s);
        if (with_sigma) {
            const double sig = parse_number(cells[2], source, lineno, "sigma");
            if (sig < 0.0) throw ParseError(source, lineno, "negative sigma");
            q.sigmas.push_back(sig);
        }
    }
    if (!have_header) throw ParseError(source, lineno == 0 ? 1 : lineno, "missing header");
    if (q.strikes.empty()) throw ParseError(source, lineno, "no quotes");
    q.strike_bound = q.max_strike();
    return q;
}

// ---------------------------------------------------------------- JSON helpers

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + "." + key, "missing required field");
    return *it;
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
    const auto x = v.get<long long>();
    if (x < 0) throw ConfigError(path, "expected a non-negative integer");
    return static_cast<std::size_t>(x);
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ok.count(it.key())) throw ConfigError(path + "." + it.key(), "unknown field");
    }
}

// Re-throws library validation failures with the field path attached.
template <typename F>
void with_path(const std::string& path, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

json nodes_json(const Grid& grid) {
    json arr = json::array();
    for (std::size_t j = 0; j < grid.num_nodes(); ++j) arr.push_back(grid.node(j));
    return arr;
}

json to_array(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(x);
    return arr;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

} // namespace

json kernel_to_json(const CumulativeKernel& kernel) {
    json j;
    j["B"] = kernel.grid().upper();
    j["M"] = kernel.grid().cells();
    j["base"] = kernel.base();
    j["increments"] = to_array(kernel.increments());
    j["nodes"] = nodes_json(kernel.grid());
    j["values"] = to_array(kernel.node_values());
    return j;
}

CumulativeKernel kernel_from_json(const json& j, const Grid& grid, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    if (j.contains("shape")) {
        const KernelSpec spec = kernel_spec_from_json(j, path);
        std::optional<CumulativeKernel> k;
        with_path(path, [&] { k.emplace(make_kernel(spec, grid)); });
        return *k;
    }
    const double b = as_number(require(j, "B", path), path + ".B");
    const std::size_t m = as_count(require(j, "M", path), path + ".M");
    if (!(Grid(b, m) == grid)) {
        throw ConfigError(path, "kernel grid (B=" + format_double(b) + ", M=" + std::to_string(m) +
                                    ") does not match the fitting grid");
    }
    const double base = as_number(require(j, "base", path), path + ".base");
    auto w = as_numbers(require(j, "increments", path), path + ".increments");
    std::optional<CumulativeKernel> k;
    with_path(path, [&] { k.emplace(grid, base, std::move(w)); });
    return *k;
}

json kernel_spec_to_json(const KernelSpec& spec) {
    json j;
    j["shape"] = std::string(to_string(spec.shape));
    j["total_mass"] = spec.total_mass;
    j["base"] = spec.base;
    switch (spec.shape) {
    case KernelShape::bimodal:
        j["modes"] = to_array(spec.modes);
        j["width"] = spec.width;
        j["weights"] = to_array(spec.weights);
        break;
    case KernelShape::triangular:
        j["modes"] = to_array(spec.modes);
        break;
    case KernelShape::table:
        j["increments"] = to_array(spec.increments);
        break;
    case KernelShape::uniform:
        break;
    }
    return j;
}

KernelSpec kernel_spec_from_json(const json& j, const std::string& path) {
    reject_unknown(j, path, {"shape", "total_mass", "base", "modes", "width", "weights", "increments"});
    KernelSpec s;
    with_path(path + ".shape", [&] { s.shape = parse_kernel_shape(as_string(require(j, "shape", path), path + ".shape")); });
    // Shape-specific defaults before overrides.
    switch (s.shape) {
    case KernelShape::uniform: s = KernelSpec::uniform(1.0); break;
    case KernelShape::triangular: s = KernelSpec::triangular(1.0, 0.5); s.modes.clear(); break;
    case KernelShape::bimodal: s = KernelSpec::bimodal(0.95, {0.3, 0.7}, 0.08); break;
    case KernelShape::table: s = KernelSpec::table({}); break;
    }
    if (j.contains("total_mass")) s.total_mass = as_number(j["total_mass"], path + ".total_mass");
    if (j.contains("base")) s.base = as_number(j["base"], path + ".base");
    if (j.contains("modes")) s.modes = as_numbers(j["modes"], path + ".modes");
    if (j.contains("width")) s.width = as_number(j["width"], path + ".width");
    if (j.contains("weights")) {
        s.weights = as_numbers(j["weights"], path + ".weights");
    } else if (s.shape == KernelShape::bimodal) {
        s.weights.assign(s.modes.size(), 1.0 / static_cast<double>(std::max<std::size_t>(1, s.modes.size())));
    }
    if (j.contains("increments")) {
        s.increments = as_numbers(j["increments"], path + ".increments");
        if (s.shape == KernelShape::table) {
            double sum = 0.0;
            for (double w : s.increments) sum += w;
            s.total_mass = sum;
        }
    }
    with_path(path, [&] { s.validate(); });
    return s;
}

TruthErrors errors_against(const Estimate& est, const CumulativeKernel& truth) {
    const double upper = est.error_region_upper();
    return TruthErrors{sup_distance(est.kernel, truth, upper), l2_distance(est.kernel, truth, upper), upper};
}

json estimate_to_json(const Estimate& est, const QuoteSet& quotes, const FitOptions& opts,
                      const std::optional<TruthErrors>& truth_errors) {
    json j;
    j["method"] = est.method;
    j["grid"] = {{"B", est.kernel.grid().upper()}, {"M", est.kernel.grid().cells()}};
    j["nodes"] = nodes_json(est.kernel.grid());
    j["values"] = to_array(est.kernel.node_values());
    j["base"] = est.kernel.base();
    j["increments"] = to_array(est.kernel.increments());
    json flags = json::array();
    for (bool b : est.extrapolated) flags.push_back(b);
    j["extrapolated"] = std::move(flags);
    j["identifiable_upper"] = est.identifiable_upper;
    j["quotes"] = {{"strikes", to_array(quotes.strikes)},
                   {"observed", to_array(quotes.prices)},
                   {"fitted", to_array(est.fitted_prices)}};
    j["objective"] = {{"total", finite_or_null(est.objective)},
                      {"mse", est.mse_term},
                      {"entropy", finite_or_null(est.entropy_term)},
                      {"lambda", est.lambda}};
    json nonunique = json::array();
    for (auto p : est.nonunique_params) nonunique.push_back(p);
    json infinite = json::array();
    for (auto c : est.infinite_divergence_cells) infinite.push_back(c);
    json warnings = json::array();
    for (const auto& w : est.warnings) warnings.push_back(w);
    j["solver"] = {{"iterations", est.iterations},
                   {"kkt_residual", est.kkt_residual},
                   {"kkt_tol", opts.kkt_tol},
                   {"objective_rel_tol", opts.objective_rel_tol},
                   {"max_iterations", opts.max_iterations},
                   {"entropy_form", std::string(to_string(opts.entropy_form))},
                   {"nonunique_params", std::move(nonunique)},
                   {"infinite_divergence_cells", std::move(infinite)},
                   {"warnings", std::move(warnings)}};
    if (truth_errors) {
        j["errors"] = {{"sup_error", truth_errors->sup_error},
                       {"l2_error", truth_errors->l2_error},
                       {"region_upper", truth_errors->region_upper}};
    }
    return j;
}

// ---------------------------------------------------------------- study config

json study_config_to_json(const StudyConfig& c) {
    json j;
    j["truth"] = kernel_spec_to_json(c.truth);
    j["prior"] = kernel_spec_to_json(c.prior);
    j["grid"] = {{"B", c.grid_upper}, {"M", c.grid_cells}};
    json ns = json::array();
    for (auto n : c.n_schedule) ns.push_back(n);
    j["N_schedule"] = std::move(ns);
    j["replications"] = c.replications;
    j["noise"] = {{"kind", std::string(to_string(c.noise.kind))}, {"sigma", c.noise.sigma}};
    j["strikes"] = {{"kind", std::string(to_string(c.strikes.kind))},
                    {"k", c.strikes.lower_bound_k},
                    {"K_bar", c.strikes.upper}};
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
    j["methods"] = std::move(methods);
    j["lambda0"] = c.lambda0;
    j["gamma"] = c.gamma;
    j["fit"] = {{"max_iterations", c.fit.max_iterations},
                {"kkt_tol", c.fit.kkt_tol},
                {"objective_rel_tol", c.fit.objective_rel_tol},
                {"entropy_form", std::string(to_string(c.fit.entropy_form))}};
    j["threads"] = c.threads;
    return j;
}

StudyConfig study_config_from_json(const json& j) {
    const std::string root = "$";
    reject_unknown(j, root, {"truth", "prior", "grid", "N_schedule", "replications", "noise", "strikes",
                             "methods", "lambda0", "gamma", "fit", "threads"});
    StudyConfig c;
    if (j.contains("truth")) c.truth = kernel_spec_from_json(j["truth"], root + ".truth");
    if (j.contains("prior")) c.prior = kernel_spec_from_json(j["prior"], root + ".prior");
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        const std::string p = root + ".grid";
        reject_unknown(g, p, {"B", "M"});
        if (g.contains("B")) c.grid_upper = as_number(g["B"], p + ".B");
        if (g.contains("M")) c.grid_cells = as_count(g["M"], p + ".M");
        with_path(p, [&] { Grid(c.grid_upper, c.grid_cells); });
    }
    // Strike range follows the grid unless given explicitly.
    c.strikes = StrikeDensitySpec::uniform_on(c.grid_upper);
    if (j.contains("N_schedule")) {
        const auto& ns = j["N_schedule"];
        const std::string p = root + ".N_schedule";
        if (!ns.is_array()) throw ConfigError(p, "expected an array of integers");
        c.n_schedule.clear();
        for (std::size_t i = 0; i < ns.size(); ++i) {
            const std::size_t n = as_count(ns[i], p + "[" + std::to_string(i) + "]");
            if (n == 0) throw ConfigError(p + "[" + std::to_string(i) + "]", "must be >= 1");
            if (!c.n_schedule.empty() && n <= c.n_schedule.back()) {
                throw ConfigError(p + "[" + std::to_string(i) + "]", "schedule must be strictly increasing");
            }
            c.n_schedule.push_back(n);
        }
        if (c.n_schedule.empty()) throw ConfigError(p, "must not be empty");
    }
    if (j.contains("replications")) {
        c.replications = as_count(j["replications"], root + ".replications");
        if (c.replications == 0) throw ConfigError(root + ".replications", "must be >= 1");
    }
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        const std::string p = root + ".noise";
        reject_unknown(n, p, {"kind", "sigma"});
        if (n.contains("kind")) with_path(p + ".kind", [&] { c.noise.kind = parse_noise_kind(as_string(n["kind"], p + ".kind")); });
        if (n.contains("sigma")) c.noise.sigma = as_number(n["sigma"], p + ".sigma");
        with_path(p + ".sigma", [&] { c.noise.validate(); });
    }
    if (j.contains("strikes")) {
        const auto& s = j["strikes"];
        const std::string p = root + ".strikes";
        reject_unknown(s, p, {"kind", "k", "K_bar"});
        if (s.contains("K_bar")) c.strikes.upper = as_number(s["K_bar"], p + ".K_bar");
        c.strikes.lower_bound_k = 1.0 / c.strikes.upper;
        if (s.contains("kind")) with_path(p + ".kind", [&] { c.strikes.kind = parse_strike_density(as_string(s["kind"], p + ".kind")); });
        if (s.contains("k")) c.strikes.lower_bound_k = as_number(s["k"], p + ".k");
        with_path(p, [&] { c.strikes.validate(); });
        if (c.strikes.upper > c.grid_upper) throw ConfigError(p + ".K_bar", "exceeds grid bound B");
    }
    if (j.contains("methods")) {
        const auto& m = j["methods"];
        const std::string p = root + ".methods";
        if (!m.is_array() || m.empty()) throw ConfigError(p, "expected a non-empty array");
        c.methods.clear();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::string ip = p + "[" + std::to_string(i) + "]";
            with_path(ip, [&] { c.methods.push_back(parse_method(as_string(m[i], ip))); });
        }
    }
    if (j.contains("lambda0")) c.lambda0 = as_number(j["lambda0"], root + ".lambda0");
    if (!(c.lambda0 > 0.0)) throw ConfigError(root + ".lambda0", "must be > 0");
    if (j.contains("gamma")) c.gamma = as_number(j["gamma"], root + ".gamma");
    if (!(c.gamma > 0.0)) throw ConfigError(root + ".gamma", "must be > 0");
    if (j.contains("fit")) {
        const auto& f = j["fit"];
        const std::string p = root + ".fit";
        reject_unknown(f, p, {"max_iterations", "kkt_tol", "objective_rel_tol", "entropy_form"});
        if (f.contains("max_iterations")) c.fit.max_iterations = as_count(f["max_iterations"], p + ".max_iterations");
        if (f.contains("kkt_tol")) c.fit.kkt_tol = as_number(f["kkt_tol"], p + ".kkt_tol");
        if (f.contains("objective_rel_tol")) c.fit.objective_rel_tol = as_number(f["objective_rel_tol"], p + ".objective_rel_tol");
        if (f.contains("entropy_form")) {
            with_path(p + ".entropy_form", [&] { c.fit.entropy_form = parse_entropy_form(as_string(f["entropy_form"], p + ".entropy_form")); });
        }
        with_path(p, [&] { c.fit.validate(); });
    }
    if (j.contains("threads")) c.threads = as_count(j["threads"], root + ".threads");
    with_path(root, [&] { c.validate(); });
    return c;
}

// ---------------------------------------------------------------- study report

void write_study_csv(std::ostream& out, const StudyReport& report, bool with_timings) {
    out << "method,N,replication,status,sup_error,l2_error,objective,lambda,iterations";
    if (with_timings) out << ",runtime_ms";
    out << '\n';
    for (const auto& r : report.rows) {
        out << to_string(r.method) << ',' << r.n << ',' << r.replication << ',' << (r.ok ? "ok" : "failed")
            << ',' << format_double(r.sup_error) << ',' << format_double(r.l2_error) << ','
            << format_double(r.objective) << ',' << format_double(r.lambda) << ',' << r.iterations;
        if (with_timings) out << ',' << format_double(r.runtime_ms);
        out << '\n';
    }
}

json study_summary_json(const StudyReport& report, const StudyConfig& config) {
    json j;
    j["config"] = study_config_to_json(config);
    j["master_seed"] = config.master_seed;
    j["rows"] = report.rows.size();
    j["failures"] = report.failures;
    json aggs = json::array();
    for (const auto& a : report.aggregates) {
        aggs.push_back({{"method", std::string(to_string(a.method))},
                        {"N", a.n},
                        {"succeeded", a.succeeded},
                        {"median_sup_error", finite_or_null(a.median_sup_error)},
                        {"median_l2_error", finite_or_null(a.median_l2_error)}});
    }
    j["aggregates"] = std::move(aggs);
    json trends = json::object();
    std::vector<Method> seen;
    for (const auto& a : report.aggregates) {
        if (std::find(seen.begin(), seen.end(), a.method) != seen.end()) continue;
        seen.push_back(a.method);
        trends[std::string(to_string(a.method))] = {{"sup_decreasing", report.sup_trend_decreasing(a.method)},
                                                    {"l2_decreasing", report.l2_trend_decreasing(a.method)}};
    }
    j["trends"] = std::move(trends);
    json failures = json::array();
    for (const auto& r : report.rows) {
        if (!r.ok) {
            failures.push_back({{"method", std::string(to_string(r.method))},
                                {"N", r.n},
                                {"replication", r.replication},
                                {"error", r.error}});
        }
    }
    j["failed_fits"] = std::move(failures);
    return j;
}

} // namespace kernest
