#include "sttn/serialize.hpp"

#include <fstream>
#include <sstream>

namespace sttn {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type", where + "." + key);
    }
}

Extents3 extents_from_json(const json& j, const std::string& where) {
    if (j.is_number_integer()) {
        const auto d = j.get<Index>();
        return {d, d, d};
    }
    if (j.is_array() && j.size() == 3 && j[0].is_number_integer() && j[1].is_number_integer() &&
        j[2].is_number_integer()) {
        return {j[0].get<Index>(), j[1].get<Index>(), j[2].get<Index>()};
    }
    throw ConfigError(where + " must be an integer or a list of three integers", where);
}

}  // namespace

json to_json(const ModelConfig& config) {
    json dims = json::array();
    for (const auto& d : config.tcl_dims) dims.push_back(d);
    return {{"feature_dim", config.feature_dim},
            {"channels", config.channels},
            {"tcl_dims", dims},
            {"trl_ranks", config.trl_ranks},
            {"num_classes", config.num_classes},
            {"activation", to_string(config.activation)}};
}

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object", "model");
    ModelConfig c;
    c.feature_dim = field(j, "feature_dim", c.feature_dim, "model");
    c.channels = field(j, "channels", c.channels, "model");
    c.num_classes = field(j, "num_classes", c.num_classes, "model");
    c.activation = activation_from_string(field<std::string>(j, "activation", to_string(c.activation), "model"));
    if (j.contains("tcl_dims")) {
        if (!j["tcl_dims"].is_array()) throw ConfigError("model.tcl_dims must be a list", "model.tcl_dims");
        for (std::size_t k = 0; k < j["tcl_dims"].size(); ++k)
            c.tcl_dims.push_back(extents_from_json(j["tcl_dims"][k], "model.tcl_dims[" + std::to_string(k) + "]"));
    }
    if (j.contains("trl_ranks")) c.trl_ranks = extents_from_json(j["trl_ranks"], "model.trl_ranks");
    return c;
}

json to_json(const TrainConfig& config) {
    return {{"learning_rate", config.learning_rate}, {"max_epochs", config.max_epochs},
            {"patience", config.patience},           {"batch_size", config.batch_size},
            {"seed", config.seed},                   {"folds", config.folds},
            {"jobs", config.jobs}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object", "train");
    base.learning_rate = field(j, "learning_rate", base.learning_rate, "train");
    base.max_epochs = field(j, "max_epochs", base.max_epochs, "train");
    base.patience = field(j, "patience", base.patience, "train");
    base.batch_size = field(j, "batch_size", base.batch_size, "train");
    base.seed = field(j, "seed", base.seed, "train");
    base.folds = field(j, "folds", base.folds, "train");
    base.jobs = field(j, "jobs", base.jobs, "train");
    return base;
}

json to_json(const ModelParams& params) {
    return {{"format_version", kModelFormatVersion},
            {"config", to_json(params.config())},
            {"parameters", flatten(params)}};
}

ModelParams params_from_json(const json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("unsupported model format_version " + std::to_string(version));
        }
        const ModelConfig config = model_config_from_json(j.at("config"));
        config.validate();
        ModelParams params = make_zero_params(config);
        const auto values = j.at("parameters").get<std::vector<double>>();
        if (static_cast<Index>(values.size()) != allocated_param_count(params)) {
            throw DataError("model file holds " + std::to_string(values.size()) + " parameters, config needs " +
                            std::to_string(allocated_param_count(params)));
        }
        assign_flat(params, values);
        return params;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::string& path, const ModelParams& params, const json& meta) {
    json j = to_json(params);
    if (!meta.is_null()) j["meta"] = meta;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model '" + path + "'");
    out << j.dump(1) << '\n';
}

ModelParams load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("model '" + path + "': " + e.what());
    }
    return params_from_json(j);
}

json to_json(const Metrics& metrics) {
    json confusion = json::array();
    for (Index r = 0; r < metrics.confusion.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < metrics.confusion.cols(); ++c) row.push_back(metrics.confusion(r, c));
        confusion.push_back(std::move(row));
    }
    return {{"accuracy", metrics.accuracy}, {"macro_f1", metrics.macro_f1}, {"confusion", confusion},
            {"precision", metrics.precision}, {"recall", metrics.recall}, {"f1", metrics.f1},
            {"observed", metrics.observed}};
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
    std::ostringstream out;
    out << "true\\pred";
    for (Index c = 0; c < confusion.cols(); ++c) out << ',' << c + 1;
    out << '\n';
    for (Index r = 0; r < confusion.rows(); ++r) {
        out << r + 1;
        for (Index c = 0; c < confusion.cols(); ++c) out << ',' << confusion(r, c);
        out << '\n';
    }
    return out.str();
}

json to_json(const FoldResult& fold) {
    std::vector<Index> absent;
    for (Index a : fold.absent_classes) absent.push_back(a + 1);
    return {{"fold", fold.fold},
            {"test", to_json(fold.test)},
            {"best_epoch", fold.best_epoch},
            {"stopped_epoch", fold.stopped_epoch},
            {"absent_classes", absent},
            {"seconds", fold.seconds},
            {"curves", {{"loss", fold.curves.loss}, {"val_accuracy", fold.curves.val_accuracy}}}};
}

json to_json(const FoldReport& report) {
    json folds = json::array();
    for (const auto& f : report.folds) folds.push_back(to_json(f));
    json failures = json::array();
    for (const auto& f : report.failures)
        failures.push_back({{"fold", f.fold}, {"kind", f.kind}, {"message", f.message}});
    return {{"folds", folds},
            {"failures", failures},
            {"completed_folds", report.folds.size()},
            {"mean_accuracy", report.mean_accuracy},
            {"mean_macro_f1", report.mean_macro_f1}};
}

}  // namespace sttn
