#include "sttn/run_config.hpp"

#include <filesystem>
#include <fstream>

#include "sttn/serialize.hpp"

namespace sttn {

using nlohmann::json;

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'", "config");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what(), "config");
    }
}

std::vector<json> expand_sweep(json doc, const Overrides& overrides) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object", "config");
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.jobs) doc["jobs"] = *overrides.jobs;
    if (overrides.out) doc["out"] = *overrides.out;
    if (overrides.dataset) doc["data"]["dataset"] = *overrides.dataset;

    json sweep = json::array();
    if (doc.contains("sweep")) {
        sweep = doc["sweep"];
        doc.erase("sweep");
        if (!sweep.is_array() || sweep.empty()) throw ConfigError("sweep must be a nonempty list", "sweep");
    }
    if (sweep.empty()) return {doc};

    std::vector<json> points;
    for (std::size_t k = 0; k < sweep.size(); ++k) {
        if (!sweep[k].is_object()) throw ConfigError("sweep entries must be objects", "sweep");
        json point = doc;
        point.merge_patch(sweep[k]);
        if (!point.contains("name")) point["name"] = "point" + std::to_string(k);
        // flags still win over sweep entries
        if (overrides.seed) point["seed"] = *overrides.seed;
        if (overrides.jobs) point["jobs"] = *overrides.jobs;
        if (overrides.dataset) point["data"]["dataset"] = *overrides.dataset;
        points.push_back(std::move(point));
    }
    return points;
}

RunConfig parse_run_config(const json& doc, bool require_dataset) {
    RunConfig rc;
    rc.echo = doc;
    std::vector<std::string> problems;
    std::vector<std::string> fields;
    auto section = [&](auto&& body) {
        try {
            body();
        } catch (const ConfigError& e) {
            // sections that already aggregate contribute their items directly
            const std::string msg = e.what();
            const std::string bullet = "\n  - ";
            if (auto pos = msg.find(bullet); pos != std::string::npos) {
                for (pos += bullet.size();;) {
                    const auto next = msg.find(bullet, pos);
                    problems.push_back(msg.substr(pos, next == std::string::npos ? next : next - pos));
                    if (next == std::string::npos) break;
                    pos = next + bullet.size();
                }
            } else {
                problems.push_back(msg);
            }
            fields.push_back(e.field());
        } catch (const json::exception& e) {
            problems.push_back(e.what());
            fields.push_back("config");
        }
    };

    section([&] {
        rc.name = doc.value("name", std::string{});
        rc.seed = doc.value("seed", std::uint64_t{0});
        rc.jobs = doc.value("jobs", 1);
        rc.out = doc.value("out", std::string{});
    });

    Index subset_size = 0;
    section([&] {
        const json d = doc.value("data", json::object());
        rc.data.dataset = d.value("dataset", std::string{});
        rc.data.window = d.value("window", rc.data.window);
        rc.data.joint_subset = d.value("joint_subset", rc.data.joint_subset);
    });
    section([&] { subset_size = static_cast<Index>(joint_subset_preset(rc.data.joint_subset).size()); });
    section([&] {
        if (rc.data.window < 1 || rc.data.window % 2 == 0) {
            throw ConfigError("data.window (T) must be a positive odd number, got " + std::to_string(rc.data.window),
                              "data.window");
        }
    });
    section([&] {
        if (!require_dataset) return;
        if (rc.data.dataset.empty()) throw ConfigError("data.dataset is required", "data.dataset");
        if (!std::filesystem::is_regular_file(rc.data.dataset)) {
            throw ConfigError("data.dataset '" + rc.data.dataset + "' does not exist", "data.dataset");
        }
    });

    section([&] {
        json m = doc.value("model", json::object());
        if (subset_size > 0) {
            if (!m.contains("channels")) {
                m["channels"] = subset_size;
            } else if (m["channels"].is_number_integer() && m["channels"].get<Index>() != subset_size) {
                throw ConfigError("model.channels = " + std::to_string(m["channels"].get<Index>()) +
                                      " does not match joint subset '" + rc.data.joint_subset + "' (" +
                                      std::to_string(subset_size) + " joints)",
                                  "model.channels");
            }
        }
        rc.model = model_config_from_json(m);
        rc.model.validate();
    });

    section([&] {
        rc.train = train_config_from_json(doc.value("train", json::object()));
        rc.train.seed = rc.seed;
        rc.train.jobs = rc.jobs;
        rc.train.validate();
    });

    section([&] {
        const json g = doc.value("gradcheck", json::object());
        rc.gradcheck.step = g.value("step", rc.gradcheck.step);
        rc.gradcheck.tolerance = g.value("tolerance", rc.gradcheck.tolerance);
        rc.gradcheck.trials = g.value("trials", rc.gradcheck.trials);
        rc.gradcheck.window = g.value("window", rc.gradcheck.window);
        if (!(rc.gradcheck.step > 0)) throw ConfigError("gradcheck.step must be positive", "gradcheck.step");
        if (!(rc.gradcheck.tolerance > 0)) throw ConfigError("gradcheck.tolerance must be positive", "gradcheck.tolerance");
        if (rc.gradcheck.trials < 1) throw ConfigError("gradcheck.trials must be >= 1", "gradcheck.trials");
        if (rc.gradcheck.window < 1) throw ConfigError("gradcheck.window must be >= 1", "gradcheck.window");
    });

    section([&] { rc.synthetic = doc.value("synthetic", json()); });

    if (!problems.empty()) {
        std::string msg = "invalid run config";
        if (!rc.name.empty()) msg += " '" + rc.name + "'";
        msg += ":";
        for (const auto& p : problems) msg += "\n  - " + p;
        std::string field;
        for (const auto& f : fields) {
            if (f.empty() || field.find(f) != std::string::npos) continue;
            field += (field.empty() ? "" : ",") + f;
        }
        throw ConfigError(msg, field);
    }
    return rc;
}

}  // namespace sttn
