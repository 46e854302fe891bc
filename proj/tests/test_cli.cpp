// End-to-end checks of the installed command-line tool: every test spawns the
// real binary (path injected by the build as PROTOLTN_CLI_PATH) in a scratch
// directory and inspects exit codes and produced artifacts.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("protoltn_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

// Runs the CLI with the given arguments, returns its exit code.  Output is
// captured into `log` so failures can show what the tool printed.
int run_cli(const std::string& args, std::string* log = nullptr) {
    static const std::string binary = PROTOLTN_CLI_PATH;
    TempDir scratch;
    const std::string out_file = scratch.str("out.txt");
    const std::string cmd = binary + " " + args + " >" + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (log) {
        std::ifstream in(out_file);
        std::stringstream ss;
        ss << in.rdbuf();
        *log = ss.str();
    }
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("cli pipeline: synth, train, eval, export") {
    TempDir dir;
    const std::string data = dir.str("data");
    const std::string run = dir.str("run");
    std::string log;

    REQUIRE(run_cli("synth --seen 4 --unseen 2 --attr-dim 3 --feat-dim 4 --per-class 6 "
                    "--noise 0.05 --seed 5 --out " + data, &log) == 0);
    INFO(log);
    REQUIRE(fs::exists(data + "/features.csv"));
    REQUIRE(fs::exists(data + "/attributes.csv"));
    REQUIRE(fs::exists(data + "/splits.json"));

    REQUIRE(run_cli("train --mode gzsl --data " + data + " --out " + run +
                    " --epochs 5 --batch-size 8 --lr 1e-2 --alpha 0.5 --lambda 1e-5 "
                    "--hidden 16 --seed 2", &log) == 0);
    INFO(log);
    REQUIRE(fs::exists(run + "/checkpoint.bin"));
    REQUIRE(fs::exists(run + "/train_log.csv"));
    REQUIRE(fs::exists(run + "/config.json"));

    REQUIRE(run_cli("eval --data " + data + " --checkpoint " + run + "/checkpoint.bin "
                    "--alpha 0.5 --out " + run + "/eval", &log) == 0);
    REQUIRE(log.find("T1=") != std::string::npos);
    REQUIRE(log.find("H=") != std::string::npos);
    auto metrics = nlohmann::json::parse(slurp(run + "/eval/metrics.json"));
    REQUIRE(metrics.contains("t1"));
    REQUIRE(metrics.contains("per_class"));
    REQUIRE(metrics["per_class"].size() == 6);
    REQUIRE(metrics["t1"].get<double>() + 1e-12 >= metrics["u"].get<double>());

    REQUIRE(run_cli("export-prototypes --data " + data + " --checkpoint " + run +
                    "/checkpoint.bin --out " + run + "/protos", &log) == 0);
    std::string csv = slurp(run + "/protos/prototypes.csv");
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    REQUIRE(line == "label,p0,p1,p2,p3");
    std::size_t rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 6);
}

TEST_CASE("cli synth is deterministic for a fixed seed") {
    TempDir dir;
    REQUIRE(run_cli("synth --seen 3 --unseen 1 --attr-dim 2 --feat-dim 3 --per-class 4 "
                    "--noise 0.1 --seed 42 --out " + dir.str("a")) == 0);
    REQUIRE(run_cli("synth --seen 3 --unseen 1 --attr-dim 2 --feat-dim 3 --per-class 4 "
                    "--noise 0.1 --seed 42 --out " + dir.str("b")) == 0);
    REQUIRE(slurp(dir.str("a") + "/features.csv") == slurp(dir.str("b") + "/features.csv"));
    REQUIRE(slurp(dir.str("a") + "/attributes.csv") == slurp(dir.str("b") + "/attributes.csv"));
    REQUIRE(slurp(dir.str("a") + "/splits.json") == slurp(dir.str("b") + "/splits.json"));
}

TEST_CASE("cli reports usage errors with exit code 2") {
    TempDir dir;
    std::string log;
    REQUIRE(run_cli("train --mode gzsl --data " + dir.str("nosuch") + " --out " +
                    dir.str("run"), &log) == 2);
    REQUIRE(log.find("nosuch") != std::string::npos);

    REQUIRE(run_cli("eval --data " + dir.str("nosuch") + " --checkpoint " +
                    dir.str("nope.bin") + " --out " + dir.str("e"), &log) == 2);

    REQUIRE(run_cli("frobnicate", &log) == 2);

    // dataset directory missing one of the three files
    const std::string data = dir.str("partial");
    fs::create_directories(data);
    std::ofstream(data + "/features.csv") << "id,label,f0\n1,0,0.5\n";
    std::ofstream(data + "/splits.json") << "{}";
    REQUIRE(run_cli("train --mode gzsl --data " + data + " --out " + dir.str("r2"), &log) == 2);
    REQUIRE(log.find("attributes.csv") != std::string::npos);
}

TEST_CASE("cli gradient check passes clean and flags an injected fault") {
    std::string log;
    REQUIRE(run_cli("gradcheck --eps 1e-5 --episodes 3 --seed 1", &log) == 0);
    REQUIRE(log.find("checks=") != std::string::npos);
    REQUIRE(log.find("worst=") != std::string::npos);

    REQUIRE(run_cli("gradcheck --eps 1e-5 --episodes 3 --seed 1 --inject-fault", &log) == 1);
    REQUIRE(log.find("gradcheck failed") != std::string::npos);
}

TEST_CASE("cli presets fill hyperparameters and flags override them") {
    TempDir dir;
    const std::string data = dir.str("data");
    REQUIRE(run_cli("synth --seen 3 --unseen 1 --attr-dim 2 --feat-dim 3 --per-class 5 "
                    "--noise 0.1 --seed 3 --out " + data) == 0);

    REQUIRE(run_cli("train --mode gzsl --preset awa2 --data " + data + " --out " +
                    dir.str("r1") + " --epochs 2 --hidden 8") == 0);
    auto cfg = nlohmann::json::parse(slurp(dir.str("r1") + "/config.json"));
    REQUIRE(cfg["learning_rate"].get<double>() == 1e-4);
    REQUIRE(cfg["alpha"].get<double>() == 1e-5);
    REQUIRE(cfg["lambda"].get<double>() == 1e-3);
    REQUIRE(cfg["epochs"].get<int>() == 2);

    REQUIRE(run_cli("train --mode gzsl --preset sun --data " + data + " --out " +
                    dir.str("r2") + " --epochs 2 --hidden 8 --lr 0.5") == 0);
    auto cfg2 = nlohmann::json::parse(slurp(dir.str("r2") + "/config.json"));
    REQUIRE(cfg2["learning_rate"].get<double>() == 0.5);  // flag wins over preset
    REQUIRE(cfg2["alpha"].get<double>() == 1e-5);
    REQUIRE(cfg2["lambda"].get<double>() == 1e-5);
}

TEST_CASE("cli config file merges under flags and rejects unknown keys") {
    TempDir dir;
    const std::string data = dir.str("data");
    REQUIRE(run_cli("synth --seen 3 --unseen 1 --attr-dim 2 --feat-dim 3 --per-class 5 "
                    "--noise 0.1 --seed 3 --out " + data) == 0);

    std::ofstream(dir.str("cfg.json")) << R"({"epochs": 4, "learning_rate": 0.01, "hidden": 8})";
    REQUIRE(run_cli("train --mode gzsl --data " + data + " --config " + dir.str("cfg.json") +
                    " --out " + dir.str("r1") + " --epochs 3") == 0);
    auto cfg = nlohmann::json::parse(slurp(dir.str("r1") + "/config.json"));
    REQUIRE(cfg["epochs"].get<int>() == 3);                // flag beats file
    REQUIRE(cfg["learning_rate"].get<double>() == 0.01);   // file beats default
    REQUIRE(cfg["hidden"].get<int>() == 8);

    std::ofstream(dir.str("bad.json")) << R"({"epochs": 4, "warp_factor": 9})";
    std::string log;
    REQUIRE(run_cli("train --mode gzsl --data " + data + " --config " + dir.str("bad.json") +
                    " --out " + dir.str("r2"), &log) == 2);
    REQUIRE(log.find("warp_factor") != std::string::npos);
}

TEST_CASE("cli resolved config reproduces the run exactly") {
    TempDir dir;
    const std::string data = dir.str("data");
    REQUIRE(run_cli("synth --seen 3 --unseen 2 --attr-dim 2 --feat-dim 3 --per-class 6 "
                    "--noise 0.05 --seed 9 --out " + data) == 0);
    REQUIRE(run_cli("train --mode gzsl --data " + data + " --out " + dir.str("r1") +
                    " --epochs 3 --batch-size 4 --lr 1e-2 --alpha 0.3 --hidden 8 --seed 6") == 0);
    // replay purely from the resolved config written by the first run
    REQUIRE(run_cli("train --config " + dir.str("r1") + "/config.json --out " +
                    dir.str("r2")) == 0);
    REQUIRE(slurp(dir.str("r1") + "/train_log.csv") == slurp(dir.str("r2") + "/train_log.csv"));
    REQUIRE(slurp(dir.str("r1") + "/checkpoint.bin") == slurp(dir.str("r2") + "/checkpoint.bin"));
}

TEST_CASE("cli seed falls back to the environment variable") {
    TempDir dir;
    REQUIRE(run_cli("synth --seen 2 --unseen 1 --attr-dim 2 --feat-dim 2 --per-class 3 "
                    "--noise 0.1 --seed 31 --out " + dir.str("flag")) == 0);
    ::setenv("PROTO_LTN_SEED", "31", 1);
    int code = run_cli("synth --seen 2 --unseen 1 --attr-dim 2 --feat-dim 2 --per-class 3 "
                       "--noise 0.1 --out " + dir.str("env"));
    ::unsetenv("PROTO_LTN_SEED");
    REQUIRE(code == 0);
    REQUIRE(slurp(dir.str("flag") + "/features.csv") == slurp(dir.str("env") + "/features.csv"));
}

TEST_CASE("cli fsl training writes an episode log") {
    TempDir dir;
    const std::string data = dir.str("data");
    REQUIRE(run_cli("synth --seen 4 --unseen 1 --attr-dim 2 --feat-dim 3 --per-class 6 "
                    "--noise 0.2 --seed 13 --out " + data) == 0);
    REQUIRE(run_cli("train --mode fsl --data " + data + " --out " + dir.str("run") +
                    " --epochs 6 --lr 1e-2 --alpha 0.5 --n-way 2 --k-shot 2 --n-query 3 "
                    "--seed 1") == 0);
    std::string log_csv = slurp(dir.str("run") + "/train_log.csv");
    std::istringstream lines(log_csv);
    std::string line;
    std::getline(lines, line);
    REQUIRE(line == "epoch,loss,phi_aff,phi_neg");
    std::size_t rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 6);
    auto cfg = nlohmann::json::parse(slurp(dir.str("run") + "/config.json"));
    REQUIRE(cfg["mode"] == "fsl");
    REQUIRE(cfg["n_way"].get<int>() == 2);
    REQUIRE(cfg["k_shot"].get<int>() == 2);
}
