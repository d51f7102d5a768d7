#pragma once

#include "kernest/analysis.hpp"
#include "kernest/core.hpp"
#include "kernest/estimators.hpp"
#include "kernest/synth.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>

namespace kernest {

using json = nlohmann::ordered_json;

// Config/schema violation; the message starts with the offending field path.
class ConfigError : public SpecError {
public:
    ConfigError(const std::string& path, const std::string& what)
        : SpecError(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// 17 significant digits ("%.17g"); round-trips every double exactly.
std::string format_double(double x);

// ---------------------------------------------------------------- quotes CSV

// Header `strike,price` (plus `,sigma` when with_sigma and sigmas are known).
void write_quotes_csv(std::ostream& out, const QuoteSet& quotes, bool with_sigma = false);

// Accepts `strike,price` or `strike,price,sigma`. strike_bound is set to
// max(strike); ParseError carries the 1-based line number.
QuoteSet read_quotes_csv(std::istream& in, const std::string& source = "<input>");

// ---------------------------------------------------------------- JSON

json kernel_to_json(const CumulativeKernel& kernel);
// Accepts the kernel_to_json form, or a KernelSpec (object with "shape"),
// which is then materialized on the given grid.
CumulativeKernel kernel_from_json(const json& j, const Grid& grid, const std::string& path = "$");

json kernel_spec_to_json(const KernelSpec& spec);
KernelSpec kernel_spec_from_json(const json& j, const std::string& path);

struct TruthErrors {
    double sup_error = 0.0;
    double l2_error = 0.0;
    double region_upper = 0.0;
};

TruthErrors errors_against(const Estimate& est, const CumulativeKernel& truth);

json estimate_to_json(const Estimate& est, const QuoteSet& quotes, const FitOptions& opts,
                      const std::optional<TruthErrors>& truth_errors = std::nullopt);

json study_config_to_json(const StudyConfig& config);
// Unknown keys and wrong types are rejected with the field path. The master
// seed is not part of the file; callers supply it.
StudyConfig study_config_from_json(const json& j);

// Columns: method,N,replication,status,sup_error,l2_error,objective,lambda,iterations
// (+ runtime_ms when with_timings).
void write_study_csv(std::ostream& out, const StudyReport& report, bool with_timings = false);
json study_summary_json(const StudyReport& report, const StudyConfig& config);

} // namespace kernest
