#pragma once
// One JSON document per run: model, training, data and gradcheck sections
// plus an optional sweep list. Command-line flags override file fields.
//
//   {
//     "name": "...", "seed": 0, "jobs": 1, "out": "runs/x",
//     "data":      {"dataset": "frames.jsonl", "window": 11, "joint_subset": "all24"},
//     "model":     {"feature_dim": 24, "tcl_dims": [8, 4], "trl_ranks": [2,2,2], ...},
//     "train":     {"learning_rate": 2.5e-4, "max_epochs": 300, ...},
//     "gradcheck": {"step": 1e-5, "tolerance": 1e-5, "trials": 3, "window": 5},
//     "synthetic": {"preset": "two_frequency"} | {"spec": {...}},
//     "sweep":     [{"name": "M=12", "model": {"feature_dim": 12}}, ...]
//   }
//
// Each sweep entry is merge-patched onto the document without "sweep".
// model.channels defaults to the joint subset size.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sttn/data.hpp"
#include "sttn/layers.hpp"
#include "sttn/train.hpp"

namespace sttn {

struct DataConfig {
    std::string dataset;
    Index window = 11;
    std::string joint_subset = "all24";
};

struct GradCheckConfig {
    double step = 1e-5;
    double tolerance = 1e-5;
    Index trials = 3;
    Index window = 5;
};

struct RunConfig {
    std::string name;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    GradCheckConfig gradcheck;
    nlohmann::json synthetic;  // null when absent
    nlohmann::json echo;       // the merged document this config was built from
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> out;
    std::optional<std::string> dataset;
};

nlohmann::json load_config_file(const std::string& path);

// Applies overrides to the document, then expands "sweep" into one
// document per point (a single point when there is no sweep).
std::vector<nlohmann::json> expand_sweep(nlohmann::json doc, const Overrides& overrides = {});

// Validates every section and throws one ConfigError listing all problems.
// With `require_dataset`, data.dataset must name an existing file.
RunConfig parse_run_config(const nlohmann::json& doc, bool require_dataset);

}  // namespace sttn
