// Errors reported by the command-line tool against the simulated truth are
// the library's errors, bit for bit.
#include "kernest/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

using namespace kernest;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(KERNEST_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

json load(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

} // namespace

TEST_CASE("cli errors match the library") {
    const fs::path dir = fs::temp_directory_path() / ("kernest_roundtrip_" + std::to_string(getpid()));
    fs::create_directories(dir);
    const std::string q = (dir / "q.csv").string();
    const std::string truth = (dir / "q.truth.json").string();
    REQUIRE(run("simulate --n 80 --sigma 0.01 --seed 11 --out " + q) == 0);

    const Grid grid(1.0, 400);
    std::ifstream in(q);
    const QuoteSet quotes = read_quotes_csv(in, q);
    const CumulativeKernel p = kernel_from_json(load(truth), grid);

    SUBCASE("cls") {
        const std::string out = (dir / "cls.json").string();
        REQUIRE(run("fit --method cls --in " + q + " --truth " + truth + " --out " + out) == 0);
        const json j = load(out);
        const auto e = fit_cls(quotes, grid);
        const auto errs = errors_against(e, p);
        CHECK(j["errors"]["sup_error"].get<double>() == errs.sup_error);
        CHECK(j["errors"]["l2_error"].get<double>() == errs.l2_error);
        CHECK(j["values"].get<std::vector<double>>() == e.kernel.node_values());
    }
    SUBCASE("rme") {
        const std::string out = (dir / "rme.json").string();
        REQUIRE(run("fit --method rme --prior uniform --lambda 0.001 --in " + q + " --truth " + truth + " --out " + out) ==
                0);
        const json j = load(out);
        const auto e = fit_rme(quotes, make_kernel(KernelSpec::uniform(1.0), grid), 1e-3, grid);
        const auto errs = errors_against(e, p);
        CHECK(j["errors"]["sup_error"].get<double>() == errs.sup_error);
        CHECK(j["errors"]["l2_error"].get<double>() == errs.l2_error);
    }
    fs::remove_all(dir);
}
