// CLI smoke tests driven through the real binary (path passed as argv[1]).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

std::string g_cli;

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = g_cli + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path workdir() {
    const fs::path dir = fs::temp_directory_path() / "cml_cli_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("help exits zero and lists subcommands") {
    const auto dir = workdir();
    CHECK(run("--help", dir / "help.log") == 0);
    std::ifstream in(dir / "help.log");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("gen-data") != std::string::npos);
    CHECK(text.find("gradcheck") != std::string::npos);
    CHECK(run("gen-data --help", dir / "help2.log") == 0);
}

TEST_CASE("usage errors exit 2") {
    const auto dir = workdir();
    CHECK(run("no-such-command", dir / "usage.log") == 2);
    CHECK(run("gen-data", dir / "usage2.log") == 2);  // missing required --out
}

TEST_CASE("domain errors exit 1") {
    const auto dir = workdir();
    CHECK(run("eval-cluster --model missing.cmlm --data missing.bin --out " +
                  (dir / "r.json").string(),
              dir / "domain.log") == 1);
}

TEST_CASE("gen-data then gradcheck round") {
    const auto dir = workdir();
    const nlohmann::json spec = {{"num_classes", 4},
                                 {"samples_per_class", 10},
                                 {"input_dim", 6},
                                 {"sigma_range", {0.1, 0.4}},
                                 {"seed", 3}};
    std::ofstream(dir / "spec.json") << spec.dump();
    CHECK(run("gen-data --spec " + (dir / "spec.json").string() + " --out " +
                  (dir / "data.bin").string(),
              dir / "gen.log") == 0);
    CHECK(fs::exists(dir / "data.bin"));
    CHECK(fs::exists(dir / "data.bin.config.json"));

    CHECK(run("gradcheck --loss arcface --seeds 3 --seed 1 --out " +
                  (dir / "gc.json").string(),
              dir / "gc.log") == 0);
    std::ifstream in(dir / "gc.json");
    nlohmann::json report;
    in >> report;
    CHECK(report.at("pass").get<bool>());
    CHECK(report.at("max_rel_err").get<double>() < 1e-4);
}

TEST_CASE("CML_SEED env var is the fallback seed") {
    const auto dir = workdir();
    const nlohmann::json spec = {{"num_classes", 3},
                                 {"samples_per_class", 6},
                                 {"input_dim", 4},
                                 {"sigma_range", {0.1, 0.3}}};  // no seed key
    std::ofstream(dir / "noseed.json") << spec.dump();

    const std::string base = g_cli;
    g_cli = "CML_SEED=7 " + base;
    CHECK(run("gen-data --spec " + (dir / "noseed.json").string() + " --out " +
                  (dir / "env.bin").string(),
              dir / "env.log") == 0);
    g_cli = base;
    CHECK(run("gen-data --spec " + (dir / "noseed.json").string() + " --seed 7 --out " +
                  (dir / "flag.bin").string(),
              dir / "flag.log") == 0);

    const auto bytes = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(bytes(dir / "env.bin") == bytes(dir / "flag.bin"));
}

TEST_CASE("train then cluster with both methods") {
    const auto dir = workdir();
    const nlohmann::json spec = {{"num_classes", 5},
                                 {"samples_per_class", 12},
                                 {"input_dim", 8},
                                 {"sigma_range", {0.1, 0.4}},
                                 {"seed", 9}};
    const nlohmann::json cfg = {{"embedding_dim", 12}, {"batch_size", 12},
                                {"queue_capacity", 60}, {"hidden_dims", {16}},
                                {"epochs", 2},          {"ablation", "baseline"},
                                {"lr_milestones", nlohmann::json::array()},
                                {"seed", 2}};
    std::ofstream(dir / "spec2.json") << spec.dump();
    std::ofstream(dir / "cfg2.json") << cfg.dump();
    REQUIRE(run("gen-data --spec " + (dir / "spec2.json").string() + " --out " +
                    (dir / "d2.bin").string(),
                dir / "g2.log") == 0);
    REQUIRE(run("train --config " + (dir / "cfg2.json").string() + " --data " +
                    (dir / "d2.bin").string() + " --out-dir " + (dir / "run2").string(),
                dir / "t2.log") == 0);
    CHECK(fs::exists(dir / "run2" / "model.cmlm"));
    CHECK(fs::exists(dir / "run2" / "train_log.jsonl"));
    CHECK(fs::exists(dir / "run2" / "cluster_debug.jsonl"));
    CHECK(fs::exists(dir / "run2" / "effective_config.json"));
    CHECK(fs::exists(dir / "run2" / "checkpoint_epoch_001.cmlm"));

    CHECK(run("eval-cluster --model " + (dir / "run2" / "model.cmlm").string() + " --data " +
                  (dir / "d2.bin").string() + " --method kmeans --seed 4 --out " +
                  (dir / "km.json").string(),
              dir / "km.log") == 0);
    CHECK(run("eval-cluster --model " + (dir / "run2" / "model.cmlm").string() + " --data " +
                  (dir / "d2.bin").string() +
                  " --method dbscan --eps 0.7 --min-pts 3 --seed 4 --out " +
                  (dir / "db.json").string(),
              dir / "db.log") == 0);
    std::ifstream in(dir / "db.json");
    nlohmann::json db;
    in >> db;
    CHECK(db.at("method") == "dbscan");
    CHECK(db.contains("nmi"));
}

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    doctest::Context context;
    // Keep doctest from consuming the binary path.
    context.applyCommandLine(1, argv);
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-cml-binary>\n");
        return 2;
    }
    return context.run();
}
