// kernest: simulate option quotes, fit cumulative pricing kernels, run
// consistency studies and the lemma check suites.
//
// Exit codes: 0 success, 1 I/O or other failure, 2 usage/parse/config error,
// 3 solver non-convergence, 4 exact maximum-entropy infeasibility.

#include "commands.hpp"

#include "kernest/analysis.hpp"
#include "kernest/io.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kNoConvergence = 3, kInfeasible = 4 };

void add_grid_flags(CLI::App* cmd, kernest::cli::GridFlags& g) {
    cmd->add_option("--B", g.upper, "Upper bound of the factor grid")->capture_default_str();
    cmd->add_option("--M", g.cells, "Number of grid cells")->capture_default_str();
}

std::string joined(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

} // namespace

int main(int argc, char** argv) {
    using namespace kernest;
    using namespace kernest::cli;

    CLI::App app{"Cumulative pricing kernel estimation from put quotes", "kernest"};
    app.require_subcommand(1);
    app.set_version_flag("--version", KERNEST_VERSION);

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Generate noisy put quotes from a known kernel");
    simulate->add_option("--truth", sim.truth, "Kernel shape (uniform|triangular|bimodal) or JSON file")
        ->capture_default_str();
    simulate->add_option("--truth-mass", sim.truth_mass, "Total mass for a named truth shape");
    simulate->add_option("--n", sim.n, "Number of quotes")->required();
    simulate->add_option("--sigma", sim.sigma, "Noise standard deviation")->capture_default_str();
    simulate->add_option("--noise", sim.noise, "Noise kind (gaussian|uniform)")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
    simulate->add_option("--strike-density", sim.strike_density, "Strike density (uniform|linear-tilt)")
        ->capture_default_str();
    simulate->add_option("--k", sim.density_k, "Lower bound of the strike density");
    simulate->add_option("--K-bar", sim.k_bar, "Largest strike (default B)");
    simulate->add_flag("--with-sigma", sim.with_sigma, "Add a sigma column to the CSV");
    simulate->add_option("--out", sim.out, "Quotes CSV path")->required();
    add_grid_flags(simulate, sim.grid);

    FitFlags fit;
    auto* fitcmd = app.add_subcommand("fit", "Estimate a cumulative kernel from a quotes CSV");
    fitcmd->add_option("--method", fit.method, "cls | rme | me")
        ->required()
        ->check(CLI::IsMember({"cls", "rme", "me"}));
    fitcmd->add_option("--in", fit.in, "Quotes CSV (strike,price[,sigma])")->required();
    fitcmd->add_option("--out", fit.out, "Estimate JSON path")->required();
    fitcmd->add_option("--prior", fit.prior, "Prior kernel: shape name or JSON file");
    fitcmd->add_option("--prior-mass", fit.prior_mass, "Total mass for a named prior")->capture_default_str();
    fitcmd->add_option("--lambda", fit.lambda, "Entropy penalty weight (rme)");
    fitcmd->add_flag("--auto-lambda", fit.auto_lambda, "Use lambda0 * N^-gamma (rme)");
    fitcmd->add_option("--lambda0", fit.lambda0)->capture_default_str();
    fitcmd->add_option("--gamma", fit.gamma)->capture_default_str();
    fitcmd->add_option("--entropy-form", fit.entropy_form, "generalized | paper")->capture_default_str();
    fitcmd->add_option("--kkt-tol", fit.kkt_tol);
    fitcmd->add_option("--max-iterations", fit.max_iterations);
    fitcmd->add_option("--truth", fit.truth, "True kernel (JSON or shape) to report errors against");
    add_grid_flags(fitcmd, fit.grid);

    StudyFlags study;
    auto* studycmd = app.add_subcommand("study", "Run the Monte Carlo consistency study");
    studycmd->add_option("--config", study.config, "Study config JSON");
    studycmd->add_option("--seed", study.seed, "Master seed")->required();
    studycmd->add_option("--out-dir", study.out_dir, "Output directory")->required();
    studycmd->add_option("--threads", study.threads, "Worker threads (0 = all cores)");
    studycmd->add_flag("--with-timings", study.with_timings, "Add a runtime_ms column to study.csv");

    DemoFlags demo;
    auto* democmd = app.add_subcommand("demo", "Amplification of cosine perturbations by the inverse");
    democmd->add_option("--alpha", demo.alpha)->capture_default_str();
    democmd->add_option("--beta", demo.betas, "One or more frequencies")->capture_default_str();
    democmd->add_option("--K-bar", demo.k_bar)->capture_default_str();
    democmd->add_option("--B", demo.upper)->capture_default_str();
    democmd->add_option("--M", demo.cells)->capture_default_str();

    CheckFlags check;
    auto* checkcmd = app.add_subcommand("check", "Run the randomized lemma suites");
    checkcmd->add_option("--trials", check.trials, "Continuity trials")->capture_default_str();
    checkcmd->add_option("--projection-trials", check.projection_trials)->capture_default_str();
    checkcmd->add_option("--density-seeds", check.density_seeds)->capture_default_str();
    checkcmd->add_option("--seed", check.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    const std::string command_line = joined(argc, argv);
    try {
        if (*simulate) return cmd_simulate(sim, command_line, std::cerr);
        if (*fitcmd) return cmd_fit(fit, command_line, std::cerr);
        if (*studycmd) return cmd_study(study, command_line, std::cerr);
        if (*democmd) return cmd_demo(demo, std::cout);
        if (*checkcmd) return cmd_check(check, std::cout);
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNoConvergence;
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInfeasible;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    } catch (const StudyError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}
