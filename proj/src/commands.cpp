#include "sttn/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "sttn/random.hpp"
#include "sttn/serialize.hpp"

namespace sttn {

using nlohmann::json;
namespace fs = std::filesystem;

json provenance(const json& echo) { return {{"tool", {{"name", kToolName}, {"version", kToolVersion}}}, {"config", echo}}; }

std::vector<ParamsRow> params_table(const std::vector<json>& points) {
    std::vector<ParamsRow> rows;
    for (const auto& p : points) {
        const RunConfig rc = parse_run_config(p, false);
        rows.push_back({rc.name, rc.model, count_params(rc.model)});
    }
    return rows;
}

GradCheckOutcome run_gradcheck(const RunConfig& config, bool corrupt) {
    GradCheckOutcome outcome;
    const ModelConfig& model = config.model;
    for (Index t = 0; t < config.gradcheck.trials; ++t) {
        GradCheckTrial trial;
        trial.seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
        const ModelParams params = init_params(model, trial.seed);
        SplitMix64 rng(derive_seed(trial.seed, 0x5eed));
        DenseTensor window(Shape{model.channels, config.gradcheck.window, 3});
        for (double& x : window.data()) x = rng.normal();
        trial.target = static_cast<Index>(rng.below(static_cast<std::uint64_t>(model.num_classes)));
        std::vector<double> weights(static_cast<std::size_t>(model.num_classes));
        for (double& w : weights) w = rng.uniform(0.5, 2.0);

        GradientBundle analytic = backward(params, window, trial.target, weights).grads;
        if (corrupt) {
            double* worst = nullptr;
            for_each_block(analytic, [&](std::span<double> block) {
                for (double& g : block)
                    if (!worst || std::abs(g) > std::abs(*worst)) worst = &g;
            });
            *worst = *worst == 0.0 ? 1.0 : 1.5 * *worst;
        }
        trial.report = finite_diff_check(params, window, trial.target, weights, config.gradcheck.step, analytic);
        outcome.max_rel_error = std::max(outcome.max_rel_error, trial.report.max_rel_error);
        outcome.excluded += trial.report.excluded;
        outcome.trials.push_back(trial);
    }
    outcome.passed = outcome.max_rel_error <= config.gradcheck.tolerance;
    return outcome;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string csv_with_header(const ConfusionMatrix& m, const json& echo) {
    return std::string("# ") + kToolName + " " + kToolVersion + " config " + echo.dump() + "\n" + confusion_csv(m);
}

std::string dims_string(const ModelConfig& m) {
    std::string s = "[";
    for (std::size_t k = 0; k < m.tcl_dims.size(); ++k) {
        const auto& d = m.tcl_dims[k];
        if (k) s += ",";
        s += std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
    }
    return s + "]";
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    LogSink log;
};

std::vector<WindowSample> load_windows(const RunConfig& rc, Context& ctx) {
    const auto frames = load_dataset(rc.data.dataset);
    const auto subset = joint_subset_preset(rc.data.joint_subset);
    auto result = make_windows(frames, rc.data.window, subset);
    if (result.skipped_sequences > 0) {
        ctx.log("warning: " + std::to_string(result.skipped_sequences) + " sequence(s) shorter than T=" +
                std::to_string(rc.data.window) + " skipped");
    }
    if (result.windows.empty()) throw DataError("dataset '" + rc.data.dataset + "' yields no windows");
    return std::move(result.windows);
}

fs::path point_dir(const RunConfig& rc, std::size_t points) {
    fs::path dir = rc.out;
    if (points > 1) dir /= rc.name;
    return dir;
}

int cmd_synth(const json& doc, const std::string& preset, const std::string& spec_path, const std::string& out_path,
              std::uint64_t seed, Context& ctx) {
    SyntheticSpec spec;
    json source;
    const json synth = doc.value("synthetic", json::object());
    if (!spec_path.empty()) {
        source = {{"spec_file", spec_path}};
        spec = synthetic_spec_from_json(load_config_file(spec_path));
    } else if (!preset.empty()) {
        source = {{"preset", preset}};
        spec = synthetic_preset(preset);
    } else if (synth.contains("spec")) {
        source = synth;
        spec = synthetic_spec_from_json(synth["spec"]);
    } else if (synth.contains("preset")) {
        source = synth;
        spec = synthetic_preset(synth["preset"].get<std::string>());
    } else {
        throw ConfigError("synth needs --preset, --spec or a synthetic section in the config", "synthetic");
    }
    if (synth.contains("overrides") && spec_path.empty()) {
        json merged = to_json(spec);
        merged.merge_patch(synth["overrides"]);
        spec = synthetic_spec_from_json(merged);
    }
    if (out_path.empty()) throw ConfigError("synth needs --out (dataset file path)", "out");

    const auto frames = generate_synthetic(spec, seed);
    save_dataset(out_path, frames);

    std::vector<Index> counts(static_cast<std::size_t>(kNumClasses), 0);
    for (const auto& f : frames) ++counts[static_cast<std::size_t>(f.label)];
    json meta = provenance(doc);
    meta["source"] = source;
    meta["seed"] = seed;
    meta["spec"] = to_json(spec);
    meta["frames"] = frames.size();
    meta["class_counts"] = counts;
    write_json(out_path + ".meta.json", meta);

    if (frames.empty()) ctx.log("warning: spec yields no frames; wrote an empty dataset");
    ctx.out << "wrote " << frames.size() << " frames to " << out_path << "\n";
    for (Index l = 0; l < kNumClasses; ++l)
        if (counts[static_cast<std::size_t>(l)] > 0)
            ctx.out << "  class " << l + 1 << ": " << counts[static_cast<std::size_t>(l)] << "\n";
    return kExitOk;
}

int cmd_params(const std::vector<json>& points, Context& ctx) {
    const auto rows = params_table(points);
    ctx.out << std::left << std::setw(16) << "name" << std::setw(6) << "M" << std::setw(6) << "C" << std::setw(4)
            << "K" << std::setw(34) << "tcl_dims" << std::setw(10) << "ranks" << std::setw(4) << "L" << "params\n";
    json table = json::array();
    for (const auto& r : rows) {
        const auto& m = r.model;
        const std::string ranks = std::to_string(m.trl_ranks[0]) + "," + std::to_string(m.trl_ranks[1]) + "," +
                                  std::to_string(m.trl_ranks[2]);
        ctx.out << std::left << std::setw(16) << r.name << std::setw(6) << m.feature_dim << std::setw(6)
                << m.channels << std::setw(4) << m.tcl_dims.size() << std::setw(34) << dims_string(m)
                << std::setw(10) << ranks << std::setw(4) << m.num_classes << r.count << "\n";
        table.push_back({{"name", r.name}, {"model", to_json(m)}, {"params", r.count}});
    }
    const RunConfig first = parse_run_config(points.front(), false);
    if (!first.out.empty()) {
        json report = provenance(points.size() == 1 ? points.front() : json(points));
        report["rows"] = table;
        write_json(fs::path(first.out) / "params.json", report);
    }
    return kExitOk;
}

int cmd_gradcheck(const std::vector<json>& points, bool corrupt, Context& ctx) {
    bool all_passed = true;
    json reports = json::array();
    std::string out_dir;
    for (const auto& p : points) {
        const RunConfig rc = parse_run_config(p, false);
        if (out_dir.empty()) out_dir = rc.out;
        const GradCheckOutcome g = run_gradcheck(rc, corrupt);
        all_passed = all_passed && g.passed;
        char line[200];
        std::snprintf(line, sizeof(line), "%-16s %-8s trials %lld  max rel error %.3e  excluded %lld  %s\n",
                      rc.name.empty() ? "gradcheck" : rc.name.c_str(), to_string(rc.model.activation).c_str(),
                      static_cast<long long>(g.trials.size()), g.max_rel_error, static_cast<long long>(g.excluded),
                      g.passed ? "PASS" : "FAIL");
        ctx.out << line;
        if (g.excluded > 0) {
            ctx.out << "  note: " << g.excluded << " coordinate(s) within 10*step of a relu kink were not compared\n";
        }
        json trials = json::array();
        for (const auto& t : g.trials) {
            trials.push_back({{"seed", t.seed},
                              {"target", t.target},
                              {"max_rel_error", t.report.max_rel_error},
                              {"max_abs_error", t.report.max_abs_error},
                              {"worst_index", t.report.worst_index},
                              {"checked", t.report.checked},
                              {"excluded", t.report.excluded}});
        }
        json r = provenance(p);
        r["corrupt"] = corrupt;
        r["step"] = rc.gradcheck.step;
        r["tolerance"] = rc.gradcheck.tolerance;
        r["max_rel_error"] = g.max_rel_error;
        r["excluded"] = g.excluded;
        r["passed"] = g.passed;
        r["trials"] = trials;
        reports.push_back(std::move(r));
    }
    if (!out_dir.empty()) write_json(fs::path(out_dir) / "gradcheck.json", points.size() == 1 ? reports[0] : reports);
    return all_passed ? kExitOk : kExitVerify;
}

int cmd_train(const std::vector<json>& points, Index fold, Context& ctx) {
    for (const auto& p : points) {
        const RunConfig rc = parse_run_config(p, true);
        const auto windows = load_windows(rc, ctx);
        const DatasetSplit split = split_kfold(static_cast<Index>(windows.size()), rc.seed, rc.train.folds);
        if (fold < 0 || fold >= rc.train.folds) {
            throw ConfigError("--fold must lie in 0.." + std::to_string(rc.train.folds - 1), "fold");
        }
        const FoldResult r =
            train_one_fold(windows, split.roles[static_cast<std::size_t>(fold)], rc.model, rc.train, fold, ctx.log);
        char line[160];
        std::snprintf(line, sizeof(line), "%s: test accuracy %.4f  macro-F1 %.4f  (best epoch %lld of %lld)\n",
                      rc.name.empty() ? "train" : rc.name.c_str(), r.test.accuracy, r.test.macro_f1,
                      static_cast<long long>(r.best_epoch), static_cast<long long>(r.stopped_epoch));
        ctx.out << line;
        if (rc.out.empty()) {
            ctx.log("warning: no --out given; model not saved");
            continue;
        }
        const fs::path dir = point_dir(rc, points.size());
        json meta = provenance(p);
        meta["fold"] = fold;
        meta["windows"] = windows.size();
        fs::create_directories(dir);
        save_model((dir / "model.json").string(), r.params, meta);
        json report = provenance(p);
        report["result"] = to_json(r);
        write_json(dir / "report.json", report);
        write_text(dir / "confusion.csv", csv_with_header(r.test.confusion, p));
    }
    return kExitOk;
}

int cmd_cv(const std::vector<json>& points, Context& ctx) {
    for (const auto& p : points) {
        const RunConfig rc = parse_run_config(p, true);
        const auto windows = load_windows(rc, ctx);
        const auto start = std::chrono::steady_clock::now();
        const FoldReport report = cross_validate(windows, rc.model, rc.train, ctx.log);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        char line[200];
        std::snprintf(line, sizeof(line), "%s: %zu/%lld folds  mean accuracy %.4f  mean macro-F1 %.4f  (%.1f s)\n",
                      rc.name.empty() ? "cv" : rc.name.c_str(), report.folds.size(),
                      static_cast<long long>(rc.train.folds), report.mean_accuracy, report.mean_macro_f1, seconds);
        ctx.out << line;

        json j = provenance(p);
        j["seed"] = rc.seed;
        j["windows"] = windows.size();
        j["seconds"] = seconds;
        j["report"] = to_json(report);
        if (rc.out.empty()) {
            if (points.size() == 1) ctx.out << j.dump(2) << "\n";
            continue;
        }
        const fs::path dir = point_dir(rc, points.size());
        write_json(dir / "report.json", j);
        ConfusionMatrix total;
        for (const auto& f : report.folds) {
            char name[32];
            std::snprintf(name, sizeof(name), "fold_%02lld_confusion.csv", static_cast<long long>(f.fold));
            write_text(dir / name, csv_with_header(f.test.confusion, p));
            total = total.size() == 0 ? f.test.confusion : ConfusionMatrix(total + f.test.confusion);
        }
        write_text(dir / "confusion_total.csv", csv_with_header(total, p));
    }
    return kExitOk;
}

int cmd_eval(const std::vector<json>& points, const std::string& model_path, Context& ctx) {
    if (model_path.empty()) throw ConfigError("eval needs --model", "model_path");
    const ModelParams params = load_model(model_path);
    for (const auto& p : points) {
        const RunConfig rc = parse_run_config(p, true);
        const Index c = joint_subset_preset(rc.data.joint_subset).size();
        if (params.csp.w[0].cols() != c) {
            throw ConfigError("model expects " + std::to_string(params.csp.w[0].cols()) + " channels, joint subset '" +
                                  rc.data.joint_subset + "' has " + std::to_string(c),
                              "data.joint_subset");
        }
        const auto windows = load_windows(rc, ctx);
        const Metrics m = evaluate(params, windows);
        char line[160];
        std::snprintf(line, sizeof(line), "%s: %zu windows  accuracy %.4f  macro-F1 %.4f\n",
                      rc.name.empty() ? "eval" : rc.name.c_str(), windows.size(), m.accuracy, m.macro_f1);
        ctx.out << line;
        if (rc.out.empty()) continue;
        const fs::path dir = point_dir(rc, points.size());
        json j = provenance(p);
        j["model"] = model_path;
        j["metrics"] = to_json(m);
        write_json(dir / "eval.json", j);
        write_text(dir / "confusion.csv", csv_with_header(m.confusion, p));
    }
    return kExitOk;
}

const json& default_gradcheck_config() {
    static const json doc = {
        {"name", "tiny"},
        {"data", {{"joint_subset", "all24"}}},
        {"model", {{"feature_dim", 3}, {"tcl_dims", {{3, 2, 2}}}, {"trl_ranks", {2, 2, 2}}, {"num_classes", 3}}},
        {"gradcheck", {{"step", 1e-5}, {"tolerance", 1e-5}, {"trials", 3}, {"window", 5}}}};
    return doc;
}

void report_error(std::ostream& err, const char* kind, const std::string& message, const std::string& field = {}) {
    json e = {{"kind", kind}, {"message", message}};
    if (!field.empty()) e["field"] = field;
    err << json{{"error", e}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatiotemporal tensor network toolkit: synthetic data, training, cross-validation, checks"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset;
    std::uint64_t seed = 0;
    int jobs = 1;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run config (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "Seed; overrides the config");
        cmd->add_option("--out", out_dir, "Output directory (dataset file for synth)");
        cmd->add_option("--jobs", jobs, "Parallel folds")->check(CLI::PositiveNumber);
        cmd->add_option("--dataset", dataset, "Dataset file; overrides data.dataset");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic JSON-lines skeleton dataset");
    std::string preset, spec_path;
    synth->add_option("--preset", preset, "two_frequency | imbalanced7 | static_poses");
    synth->add_option("--spec", spec_path, "Synthetic spec (JSON)")->check(CLI::ExistingFile);
    auto* train = app.add_subcommand("train", "Train on one fold of the split and save the model");
    Index fold = 0;
    train->add_option("--fold", fold, "Fold whose roles are used (0-based)");
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
    std::string model_path;
    eval->add_option("--model", model_path, "Model file written by train")->required();
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    bool corrupt = false;
    gradcheck->add_flag("--corrupt", corrupt, "Deliberately perturb the analytic gradient (self-test)");
    auto* params = app.add_subcommand("params", "Print trainable parameter counts");
    for (auto* cmd : {synth, train, cv, eval, gradcheck, params}) add_common(cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage", e.what());
        return kExitConfig;
    }

    Context ctx{out, err, [&err](std::string_view s) { err << s << "\n"; }};
    auto* cmd = app.get_subcommands().front();
    try {
        json doc = json::object();
        if (!config_path.empty()) {
            doc = load_config_file(config_path);
        } else if (cmd == gradcheck) {
            doc = default_gradcheck_config();
        }
        Overrides ov;
        if (cmd->count("--seed")) ov.seed = seed;
        if (cmd->count("--jobs")) ov.jobs = jobs;
        if (cmd->count("--out") && cmd != synth) ov.out = out_dir;
        if (cmd->count("--dataset")) ov.dataset = dataset;

        if (cmd == synth) {
            if (!doc.is_object()) throw ConfigError("config must be a JSON object", "config");
            const std::uint64_t s = cmd->count("--seed") ? seed : doc.value("seed", std::uint64_t{0});
            const std::string path = cmd->count("--out") ? out_dir : doc.value("out", std::string{});
            return cmd_synth(doc, preset, spec_path, path, s, ctx);
        }
        const auto points = expand_sweep(doc, ov);
        if (cmd == params) return cmd_params(points, ctx);
        if (cmd == gradcheck) return cmd_gradcheck(points, corrupt, ctx);
        if (cmd == train) return cmd_train(points, fold, ctx);
        if (cmd == cv) return cmd_cv(points, ctx);
        if (cmd == eval) return cmd_eval(points, model_path, ctx);
    } catch (const ConfigError& e) {
        report_error(err, e.kind(), e.what(), e.field());
        return kExitConfig;
    } catch (const ShapeError& e) {
        report_error(err, e.kind(), e.what());
        return kExitConfig;
    } catch (const ParseError& e) {
        report_error(err, e.kind(), e.what(), "record " + std::to_string(e.record()));
        return kExitData;
    } catch (const DataError& e) {
        report_error(err, e.kind(), e.what());
        return kExitData;
    } catch (const NumericError& e) {
        report_error(err, e.kind(), e.what(), e.where());
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        report_error(err, "data", e.what());
        return kExitData;
    } catch (const json::exception& e) {
        report_error(err, "config", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace sttn
