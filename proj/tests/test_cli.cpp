#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sttn/commands.hpp"
#include "sttn/data.hpp"
#include "support.hpp"

using namespace sttn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "sttn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// The error object is the last line on stderr.
json error_of(const Run& r) {
    const auto end = r.err.find_last_not_of('\n');
    const auto begin = r.err.rfind('\n', end);
    return json::parse(r.err.substr(begin == std::string::npos ? 0 : begin + 1));
}

// Small noisy static-pose dataset and a matching quick cv config.
json small_cv_config(const fs::path& dir) {
    json spec = to_json(synthetic_preset("static_poses"));
    spec["noise_sigma"] = 0.01;
    for (auto& c : spec["classes"]) c["frames"] = 40;
    write(dir / "spec.json", spec);
    const auto r = cli({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "small.jsonl").string(),
                        "--seed", "5"});
    EXPECT_EQ(r.code, 0) << r.err;
    return {{"name", "small"},
            {"seed", 2},
            {"data", {{"dataset", (dir / "small.jsonl").string()}, {"window", 3}, {"joint_subset", "all24"}}},
            {"model", {{"feature_dim", 2}, {"tcl_dims", {2}}, {"trl_ranks", {2, 2, 2}}, {"num_classes", 3}}},
            {"train", {{"learning_rate", 0.01}, {"max_epochs", 4}, {"patience", 2}, {"batch_size", 16}, {"folds", 10}}}};
}

}  // namespace

TEST(Cli, ParamsReproducesPublishedCounts) {
    const auto r = cli({"params", "--config", STTN_SOURCE_DIR "/configs/m_sweep.json"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* n : {"1335", "1839", "2343", "2847"}) EXPECT_NE(r.out.find(n), std::string::npos) << n;
    const auto k = cli({"params", "--config", STTN_SOURCE_DIR "/configs/k_sweep.json"});
    ASSERT_EQ(k.code, 0) << k.err;
    for (const char* n : {"1959", "2343", "2919", "3783"}) EXPECT_NE(k.out.find(n), std::string::npos) << n;
}

TEST(Cli, GradcheckPassesAndCorruptFails) {
    const auto ok = cli({"gradcheck"});
    EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
    EXPECT_NE(ok.out.find("PASS"), std::string::npos);
    const auto bad = cli({"gradcheck", "--corrupt"});
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GradcheckActivationSweepWritesReport) {
    const auto dir = test::scratch_dir("cli_gradcheck");
    const auto r = cli({"gradcheck", "--config", STTN_SOURCE_DIR "/configs/gradcheck_activations.json", "--out",
                        dir.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    const json j = json::parse(slurp(dir / "gradcheck.json"));
    ASSERT_TRUE(j.is_array());
    for (const auto& p : j) {
        EXPECT_EQ(p["tool"]["name"], "sttn");
        EXPECT_TRUE(p["passed"].get<bool>());
    }
}

TEST(Cli, MissingDatasetIsConfigError) {
    const auto dir = test::scratch_dir("cli_missing");
    json cfg = small_cv_config(dir);
    cfg["data"].erase("dataset");
    write(dir / "c.json", cfg);
    const auto r = cli({"cv", "--config", (dir / "c.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(error_of(r)["error"]["field"], "data.dataset");

    cfg["data"]["dataset"] = (dir / "nope.jsonl").string();
    write(dir / "c.json", cfg);
    const auto n = cli({"cv", "--config", (dir / "c.json").string()});
    EXPECT_EQ(n.code, 2);
    EXPECT_EQ(error_of(n)["error"]["field"], "data.dataset");
}

TEST(Cli, MalformedDatasetIsDataError) {
    const auto dir = test::scratch_dir("cli_malformed");
    json cfg = small_cv_config(dir);
    std::ofstream(dir / "bad.jsonl") << "{\"sequence_id\": \"A\"}\n";
    write(dir / "c.json", cfg);
    const auto r = cli({"cv", "--config", (dir / "c.json").string(), "--dataset", (dir / "bad.jsonl").string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(error_of(r)["error"]["field"], "record 1");
}

TEST(Cli, InvalidModelReportsEveryField) {
    const auto dir = test::scratch_dir("cli_invalid");
    json cfg = small_cv_config(dir);
    cfg["model"]["feature_dim"] = 0;
    cfg["train"]["patience"] = 10;
    write(dir / "c.json", cfg);
    const auto r = cli({"cv", "--config", (dir / "c.json").string()});
    EXPECT_EQ(r.code, 2);
    const std::string field = error_of(r)["error"]["field"];
    EXPECT_NE(field.find("model"), std::string::npos);
    EXPECT_NE(field.find("train"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"frobnicate"}).code, 2);
    const auto r = cli({"eval"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(error_of(r)["error"]["kind"], "usage");
}

TEST(Cli, SynthIsByteIdenticalAndSeedSensitive) {
    const auto dir = test::scratch_dir("cli_synth");
    const auto a = cli({"synth", "--preset", "imbalanced7", "--seed", "9", "--out", (dir / "a.jsonl").string()});
    const auto b = cli({"synth", "--preset", "imbalanced7", "--seed", "9", "--out", (dir / "b.jsonl").string()});
    const auto c = cli({"synth", "--preset", "imbalanced7", "--seed", "10", "--out", (dir / "c.jsonl").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
    EXPECT_NE(slurp(dir / "a.jsonl"), slurp(dir / "c.jsonl"));
    const json meta = json::parse(slurp(dir / "a.jsonl.meta.json"));
    EXPECT_EQ(meta["tool"]["version"], "0.1.0");
    EXPECT_EQ(meta["class_counts"], json({908, 1503, 134, 104, 97, 114, 437}));
}

TEST(Cli, SynthWithNoFramesWarns) {
    const auto dir = test::scratch_dir("cli_empty");
    json spec = to_json(synthetic_preset("static_poses"));
    for (auto& c : spec["classes"]) c["frames"] = 0;
    write(dir / "spec.json", spec);
    const auto r = cli({"synth", "--spec", (dir / "spec.json").string(), "--out", (dir / "e.jsonl").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "e.jsonl"), "");
    EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, CrossValidationIsReproducible) {
    const auto dir = test::scratch_dir("cli_cv");
    const json cfg = small_cv_config(dir);
    write(dir / "c.json", cfg);
    const auto a = cli({"cv", "--config", (dir / "c.json").string(), "--out", (dir / "a").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = cli({"cv", "--config", (dir / "c.json").string(), "--out", (dir / "b").string(), "--jobs", "3"});
    ASSERT_EQ(b.code, 0) << b.err;

    const json ra = json::parse(slurp(dir / "a" / "report.json"));
    const json rb = json::parse(slurp(dir / "b" / "report.json"));
    EXPECT_EQ(ra["report"]["folds"].size(), 10u);
    EXPECT_EQ(ra["report"]["mean_accuracy"], rb["report"]["mean_accuracy"]);
    EXPECT_EQ(ra["config"]["name"], "small");
    for (int f = 0; f < 10; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "fold_%02d_confusion.csv", f);
        EXPECT_TRUE(fs::exists(dir / "a" / name)) << name;
    }
    const std::string total = slurp(dir / "a" / "confusion_total.csv");
    EXPECT_EQ(total.rfind("# sttn 0.1.0 config ", 0), 0u);
    const std::string other = slurp(dir / "b" / "confusion_total.csv");
    EXPECT_EQ(total.substr(total.find('\n')), other.substr(other.find('\n')));
}

TEST(Cli, TrainThenEvalRoundTrip) {
    const auto dir = test::scratch_dir("cli_train");
    const json cfg = small_cv_config(dir);
    write(dir / "c.json", cfg);
    const auto t = cli({"train", "--config", (dir / "c.json").string(), "--fold", "2", "--out", (dir / "m").string()});
    ASSERT_EQ(t.code, 0) << t.err;
    ASSERT_TRUE(fs::exists(dir / "m" / "model.json"));
    const auto e = cli({"eval", "--config", (dir / "c.json").string(), "--model", (dir / "m" / "model.json").string(),
                        "--out", (dir / "e").string()});
    ASSERT_EQ(e.code, 0) << e.err;
    const json j = json::parse(slurp(dir / "e" / "eval.json"));
    EXPECT_GE(j["metrics"]["accuracy"].get<double>(), 0.0);

    json other = cfg;
    other["data"]["joint_subset"] = "no_hands20";
    write(dir / "o.json", other);
    const auto mismatch =
        cli({"eval", "--config", (dir / "o.json").string(), "--model", (dir / "m" / "model.json").string()});
    EXPECT_EQ(mismatch.code, 2);
}
