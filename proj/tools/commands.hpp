#pragma once

#include "kernest/errors.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kernest::cli {

// Filesystem failures; mapped to exit code 1.
class IoError : public Error {
public:
    using Error::Error;
};

struct GridFlags {
    double upper = 1.0;
    std::size_t cells = 400;
};

struct SimulateFlags {
    std::string truth = "bimodal";
    std::optional<double> truth_mass;
    std::size_t n = 0;
    double sigma = 0.01;
    std::string noise = "gaussian";
    std::uint64_t seed = 0;
    std::string strike_density = "uniform";
    std::optional<double> density_k;
    std::optional<double> k_bar;
    bool with_sigma = false;
    GridFlags grid;
    std::string out;
};

struct FitFlags {
    std::string method;
    std::string in;
    std::string out;
    std::optional<std::string> prior;
    double prior_mass = 1.0;
    std::optional<double> lambda;
    bool auto_lambda = false;
    double lambda0 = 0.1;
    double gamma = 0.5;
    std::string entropy_form = "generalized";
    std::optional<double> kkt_tol;
    std::optional<std::size_t> max_iterations;
    std::optional<std::string> truth;
    GridFlags grid;
};

struct StudyFlags {
    std::optional<std::string> config;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::optional<std::size_t> threads;
    bool with_timings = false;
};

struct DemoFlags {
    double alpha = 1.0;
    std::vector<double> betas{10.0, 100.0, 1000.0};
    double k_bar = 1.0;
    double upper = 1.0;
    std::size_t cells = 10000;
};

struct CheckFlags {
    std::size_t trials = 1000;
    std::size_t projection_trials = 1000;
    std::size_t density_seeds = 50;
    std::uint64_t seed = 1;
};

// Each returns the process exit code; library errors propagate as exceptions.
int cmd_simulate(const SimulateFlags& f, const std::string& command_line, std::ostream& log);
int cmd_fit(const FitFlags& f, const std::string& command_line, std::ostream& log);
int cmd_study(const StudyFlags& f, const std::string& command_line, std::ostream& log);
int cmd_demo(const DemoFlags& f, std::ostream& out);
int cmd_check(const CheckFlags& f, std::ostream& out);

} // namespace kernest::cli
