#pragma once
// Command implementations behind the sttn executable. run_cli is the whole
// program minus process exit, so tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "sttn/gradients.hpp"
#include "sttn/run_config.hpp"

namespace sttn {

inline constexpr const char* kToolName = "sttn";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitVerify = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

struct ParamsRow {
    std::string name;
    ModelConfig model;
    Index count = 0;
};

// One row per sweep point of the (already expanded) documents.
std::vector<ParamsRow> params_table(const std::vector<nlohmann::json>& points);

struct GradCheckTrial {
    std::uint64_t seed = 0;
    Index target = 0;
    GradCheckReport report;
};

struct GradCheckOutcome {
    std::vector<GradCheckTrial> trials;
    double max_rel_error = 0.0;
    Index excluded = 0;
    bool passed = false;
};

// Trial t draws parameters from init_params(model, derive_seed(seed, t)), a
// standard-normal C x T x 3 window, a target class and class weights in
// [0.5, 2]. With `corrupt`, the largest analytic partial is scaled by 1.5
// before the comparison.
GradCheckOutcome run_gradcheck(const RunConfig& config, bool corrupt = false);

// {"tool": {"name", "version"}, "config": echo}
nlohmann::json provenance(const nlohmann::json& echo);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sttn
