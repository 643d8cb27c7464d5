// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthconv/experiment.hpp"
#include "depthconv/train.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace depthconv;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = DEPTHCONV_CLI_PATH;

int run(const std::string& args, std::string* out = nullptr) {
    const fs::path log = fs::temp_directory_path() / "depthconv_cli_stdout.txt";
    const std::string cmd = kCli.string() + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (out) {
        std::ifstream in(log);
        std::stringstream ss;
        ss << in.rdbuf();
        *out = ss.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workdir {
    fs::path dir;
    explicit Workdir(const std::string& name) : dir(fs::temp_directory_path() / ("depthconv_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }

    fs::path config(const std::string& body, const std::string& name = "config.json") const {
        std::ofstream(dir / name) << body;
        return dir / name;
    }
};

const char* kTiny = R"({
  "dataset": {"n_train": 12, "n_test": 6, "spec": {"width": 24, "height": 24, "seed": 5}},
  "network": {"widths": [4, 6], "seed": 2},
  "training": {"epochs": 2, "lr": 0.05, "batch_size": 4, "seed": 3}
})";

std::vector<std::string> csv_lines(const fs::path& p) {
    std::vector<std::string> lines;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

}  // namespace

TEST_CASE("gen writes manifests and refuses to overwrite without --force") {
    Workdir w("gen");
    const auto cfg = w.config(kTiny);
    const auto out = w.dir / "ds";
    std::string text;
    CHECK(run("gen --config " + cfg.string() + " --out " + out.string(), &text) == 0);
    CHECK(fs::exists(out / "manifest_train.json"));
    CHECK(fs::exists(out / "manifest_test.json"));
    CHECK(text.find("d0") != std::string::npos);

    const auto before = slurp(out / "train" / "000000_rgb.ppm");
    fs::remove(out / "train" / "000000_rgb.ppm");
    CHECK(run("gen --config " + cfg.string() + " --out " + out.string()) == 1);
    CHECK_FALSE(fs::exists(out / "train" / "000000_rgb.ppm"));
    CHECK(run("gen --config " + cfg.string() + " --out " + out.string() + " --force") == 0);
    CHECK(slurp(out / "train" / "000000_rgb.ppm") == before);
}

TEST_CASE("config errors exit with code 2") {
    Workdir w("config");
    std::string text;
    const auto bad = w.config(R"({"dnconv": {"sgima": 1.0}})");
    CHECK(run("gen --config " + bad.string() + " --out " + (w.dir / "x").string(), &text) == 2);
    CHECK(text.find("sgima") != std::string::npos);
    CHECK_FALSE(fs::exists(w.dir / "x"));

    const auto est = w.config(R"({"depth_source": "estimated"})", "est.json");
    CHECK(run("train --config " + est.string() + " --out " + (w.dir / "y").string()) == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("train") == 2);
}

TEST_CASE("train, resume, eval and erf") {
    Workdir w("train");
    const auto cfg = w.config(kTiny);
    const auto out = w.dir / "run";
    const std::string base = "train --config " + cfg.string() + " --out " + out.string();
    REQUIRE(run(base) == 0);
    const auto log = read_log_csv(out / "log.csv");
    REQUIRE(log.size() == 2);
    CHECK(fs::exists(out / "config.resolved.json"));

    SUBCASE("rerun without --force is refused") {
        const auto ck = slurp(out / "checkpoint.json.tns");
        CHECK(run(base) == 1);
        CHECK(slurp(out / "checkpoint.json.tns") == ck);
    }
    SUBCASE("resolved config reproduces the run") {
        const auto again = w.dir / "again";
        CHECK(run("train --config " + (out / "config.resolved.json").string() + " --out " + again.string()) == 0);
        CHECK(slurp(again / "checkpoint.json.tns") == slurp(out / "checkpoint.json.tns"));
        CHECK(slurp(again / "checkpoint.json") == slurp(out / "checkpoint.json"));
    }
    SUBCASE("resume continues the epoch count") {
        std::string body = kTiny;
        body.replace(body.find("\"epochs\": 2"), 11, "\"epochs\": 4");
        const auto cfg4 = w.config(body, "four.json");
        CHECK(run("train --resume --config " + cfg4.string() + " --out " + out.string()) == 0);
        const auto longer = read_log_csv(out / "log.csv");
        REQUIRE(longer.size() == 4);
        CHECK(longer[3].epoch == 4);
        CHECK(longer[1].test_metric == log[1].test_metric);
        CHECK(load_checkpoint(out / "checkpoint.json").epoch == 4);
        CHECK(run("train --resume --config " + cfg4.string() + " --out " + (w.dir / "none").string()) == 1);
    }
    SUBCASE("eval reproduces the logged metric and its CSV round-trips") {
        std::string text;
        CHECK(run("eval --checkpoint " + (out / "checkpoint.json").string() + " --split test", &text) == 0);
        CHECK(text.find("mIoU(%)") != std::string::npos);
        const auto lines = csv_lines(out / "eval_test.csv");
        REQUIRE(lines.size() == 2);
        CHECK(lines[0] == "split,acc,macc,miou");
        const double miou = std::stod(lines[1].substr(lines[1].rfind(',') + 1));
        CHECK(miou == log.back().test_metric);
        CHECK(run("eval --checkpoint " + (out / "checkpoint.json").string() + " --split train") == 0);
        CHECK(run("eval --checkpoint " + (out / "checkpoint.json").string() + " --split valid") == 2);
        CHECK(run("eval --checkpoint " + (w.dir / "missing.json").string()) == 1);
    }
    SUBCASE("erf writes one map and one row per pixel") {
        const auto dir = w.dir / "erf";
        CHECK(run("erf --checkpoint " + (out / "checkpoint.json").string() + " --pixels \"3,3;12,12;20,5\" --out " +
                  dir.string()) == 0);
        int maps = 0;
        for (const auto& e : fs::directory_iterator(dir)) maps += e.path().extension() == ".pgm";
        CHECK(maps == 3);
        CHECK(csv_lines(dir / "erf.csv").size() == 4);
        CHECK(run("erf --checkpoint " + (out / "checkpoint.json").string() + " --pixels \"3,24\" --out " +
                  dir.string()) == 2);
    }
}

TEST_CASE("shipped configs parse") {
    int count = 0;
    for (const auto& e : fs::directory_iterator(DEPTHCONV_CONFIG_DIR)) {
        if (e.path().extension() != ".json") continue;
        CAPTURE(e.path().string());
        CHECK_NOTHROW(load_experiment(e.path()));
        ++count;
    }
    CHECK(count > 0);
}

TEST_CASE("ablate emits one row per cell plus the baseline") {
    Workdir w("ablate");
    const auto cfg = w.config(kTiny);
    const auto out = w.dir / "ab";
    std::string text;
    REQUIRE(run("ablate --config " + cfg.string() + " --out " + out.string() +
                    " --axes locality,bilinear --windows gaussian,exp-decay",
                &text) == 0);
    const auto lines = csv_lines(out / "ablation.csv");
    REQUIRE(lines.size() == 1 + 1 + 4);
    CHECK(lines[1].rfind("baseline,", 0) == 0);
    CHECK(run("ablate --config " + cfg.string() + " --out " + out.string()) == 1);
    CHECK(run("ablate --config " + cfg.string() + " --out " + out.string() + " --axes nonsense --force") == 2);

    // The baseline row matches an independent train + eval of the same configuration.
    auto exp = load_experiment(cfg);
    exp = apply_cell(exp, ablation_cells({}, {WindowKind::gaussian}).front());
    const auto data = load_data(exp);
    const auto result = run_training(exp, data);
    const auto report = run_evaluation(result.checkpoint, exp, data, "test");
    const auto& row = lines[1];
    const double miou = std::stod(row.substr(0, row.rfind(',')).substr(row.substr(0, row.rfind(',')).rfind(',') + 1));
    CHECK(miou == report.seg.miou);
}
