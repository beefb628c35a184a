#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfrex/explanation.hpp"
#include "cfrex/metrics.hpp"
#include "fixtures.hpp"

using namespace cfrex;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const std::string& tag) {
    const std::string dir = testsupport::make_temp_dir("cli-run-" + tag);
    const std::string cmd = std::string(CFREX_BIN) + " " + args + " > " + dir + "/out 2> " +
                            dir + "/err";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    r.out = slurp(dir + "/out");
    r.err = slurp(dir + "/err");
    return r;
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage and input error exit codes") {
    CHECK(run_cli("definitely-not-a-command", "usage").exit_code == 2);
    CHECK(run_cli("prepare", "noconfig").exit_code == 2);  // --config is required
    CHECK(run_cli("--config /nonexistent/config.json prepare", "missing").exit_code == 3);

    const std::string dir = testsupport::make_temp_dir("cli-badcfg");
    std::ofstream(dir + "/broken.json") << "{ not json";
    CHECK(run_cli("--config " + dir + "/broken.json prepare", "badjson").exit_code == 3);
    std::ofstream(dir + "/nopaths.json") << "{}";
    CHECK(run_cli("--config " + dir + "/nopaths.json prepare", "nopaths").exit_code == 3);
}

TEST_CASE("full pipeline runs end to end") {
    auto ds = testsupport::write_cli_dataset("cli-pipeline", 7);
    const std::string cfg = "--config " + ds.config_path + " ";

    auto prep = run_cli(cfg + "prepare", "prepare");
    CHECK(prep.exit_code == 0);
    CHECK(std::filesystem::exists(ds.dir + "/out/split.tsv"));
    CHECK(prep.out.find("prepared") != std::string::npos);

    auto train = run_cli(cfg + "train", "train");
    CHECK(train.exit_code == 0);
    REQUIRE(std::filesystem::exists(ds.dir + "/model.bin"));

    auto rec = run_cli(cfg + "recommend", "recommend");
    CHECK(rec.exit_code == 0);
    CHECK(std::filesystem::exists(ds.dir + "/out/recommendations.tsv"));

    auto explain = run_cli(cfg + "explain", "explain");
    CHECK(explain.exit_code == 0);
    REQUIRE(std::filesystem::exists(ds.dir + "/out/explanations.jsonl"));
    auto explanations = load_explanations(ds.dir + "/out/explanations.jsonl");
    CHECK(explanations.size() > 0);
    for (const auto& e : explanations) CHECK(e.method == "counter-text");

    auto eval = run_cli(cfg + "eval", "eval");
    CHECK(eval.exit_code == 0);
    REQUIRE(std::filesystem::exists(ds.dir + "/out/report.json"));
    auto report = metrics::load_report(ds.dir + "/out/report.json");
    CHECK(report.rows.size() == explanations.size());
    REQUIRE(report.ndcg.has_value());
    CHECK(*report.ndcg >= 0.0);
    CHECK(*report.ndcg <= 1.0);
}

TEST_CASE("explanation artifacts are byte-identical under a fixed seed") {
    auto ds = testsupport::write_cli_dataset("cli-determinism", 11);
    const std::string cfg = "--config " + ds.config_path + " ";
    REQUIRE(run_cli(cfg + "train", "det-train").exit_code == 0);

    const std::string path = ds.dir + "/out/explanations.jsonl";
    REQUIRE(run_cli(cfg + "--method genetic --seed 5 explain", "det-a").exit_code == 0);
    const std::string first = slurp_file(path);
    REQUIRE(run_cli(cfg + "--method genetic --seed 5 --jobs 4 explain", "det-b").exit_code == 0);
    const std::string second = slurp_file(path);
    CHECK(first == second);  // thread count must not change the output

    REQUIRE(run_cli(cfg + "--method genetic --seed 6 explain", "det-c").exit_code == 0);
    const std::string other_seed = slurp_file(path);
    CHECK(first != other_seed);
}

TEST_CASE("every search method runs through the command line") {
    auto ds = testsupport::write_cli_dataset("cli-methods", 13);
    const std::string cfg = "--config " + ds.config_path + " ";
    REQUIRE(run_cli(cfg + "train", "methods-train").exit_code == 0);
    for (const std::string method : {"counter", "counter-text", "genetic", "gumbel", "mixed"}) {
        auto r = run_cli(cfg + "--method " + method + " explain", "method-" + method);
        CHECK(r.exit_code == 0);
        auto explanations = load_explanations(ds.dir + "/out/explanations.jsonl");
        CHECK(explanations.size() > 0);
        for (const auto& e : explanations) {
            CHECK(e.method == method);
            CHECK(e.score_before > e.marginal_score);
        }
    }
}

TEST_CASE("stability command reports per-pair agreement") {
    auto ds = testsupport::write_cli_dataset("cli-stability", 17);
    const std::string cfg = "--config " + ds.config_path + " ";
    REQUIRE(run_cli(cfg + "train", "stab-train").exit_code == 0);
    auto r = run_cli(cfg + "--method genetic stability", "stab");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("stability") != std::string::npos);
}
