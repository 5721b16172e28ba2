#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "semilab/cli.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using semilab::cli::dispatch;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream o, e;
    const int c = dispatch(args, o, e);
    return {c, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("semilab_cli_" + name);
    fs::remove_all(d);
    return d;
}

json first_error(const std::string& err) { return json::parse(err.substr(0, err.find('\n'))); }

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream f(p);
    std::string line;
    std::getline(f, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("sha256 of known strings") {
    CHECK(semilab::cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(semilab::cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("jc-distance report and domain error") {
    auto r = run({"chains", "jc-distance", "--p", "0.3"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["distance"].get<double>() == doctest::Approx(0.383119).epsilon(1e-6));

    r = run({"chains", "jc-distance", "--p", "0.9"});
    CHECK(r.code == 3);
    const auto e = first_error(r.err);
    CHECK(e["kind"] == "model");
    CHECK(e["error"] == "p out of domain [0, 0.75)");
}

TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"chains", "nope"}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"chains", "jc-distance"}).code == 2);
    CHECK(run({"chains", "jc-distance", "--p", "abc"}).code == 2);
    CHECK(run({"chains", "jc-distance", "--p", "0.3", "--threads", "0"}).code == 2);
    CHECK(run({"chains", "jc-distance", "--p", "0.3", "--format", "xml"}).code == 2);
    CHECK(run({"chains", "jc-distance", "--p", "0.3", "--emit-plot-script"}).code == 2);
    CHECK(run({"transfer", "ulam", "--map", "nope"}).code != 0);
    const auto r = run({"transfer", "ulam", "--n", "1.5"});
    CHECK(r.code == 2);
    CHECK(first_error(r.err)["kind"] == "usage");
}

TEST_CASE("help exits 0") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("structured cellcycle") != std::string::npos);
}

TEST_CASE("numerical failure exits 4") {
    const auto r = run({"transfer", "ulam", "--map", "logistic", "--max-iter", "1"});
    CHECK(r.code == 4);
    CHECK(first_error(r.err)["kind"] == "numerical");
}

TEST_CASE("nonfinite report values are strings") {
    const auto r = run({"sde", "classify"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["binf"] == "-inf");
}

TEST_CASE("output directory with manifest") {
    const auto dir = fresh_dir("out");
    const auto r = run({"pdmp", "kac", "--T", "1", "--out", dir.string(), "--emit-plot-script"});
    REQUIRE(r.code == 0);
    const json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["artifact_version"] == semilab::cli::kVersion);
    CHECK(m["threads"] == 1);
    CHECK(m["wall_time_seconds"].get<double>() >= 0.0);
    CHECK(m["config_hash"] == semilab::cli::sha256_hex(slurp(dir / "config.json")));
    std::set<std::string> names;
    for (const auto& f : m["files"]) {
        const std::string content = slurp(dir / f["name"].get<std::string>());
        CHECK(f["sha256"] == semilab::cli::sha256_hex(content));
        CHECK(f["bytes"].get<std::size_t>() == content.size());
        names.insert(f["name"]);
    }
    CHECK(names == std::set<std::string>{"config.json", "report.json", "marginal.csv", "mass.csv", "plot.py"});
    CHECK_FALSE(fs::exists(dir / "manifest.json.tmp"));

    double total = 0.0;
    for (const auto& row : read_csv(dir / "marginal.csv")) total += row[2];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const auto prof = read_csv(dir / "mass.csv");
    REQUIRE(prof.size() == 100);
    for (std::size_t k = 1; k < prof.size(); ++k) CHECK(prof[k][0] > prof[k - 1][0]);
    CHECK(prof.back()[0] == doctest::Approx(1.0));
}

TEST_CASE("json format") {
    const auto dir = fresh_dir("json");
    REQUIRE(run({"transfer", "ulam", "--n", "64", "--format", "json", "--out", dir.string()}).code == 0);
    const json d = json::parse(slurp(dir / "density.json"));
    CHECK(d["columns"] == json::array({"cell_lo", "cell_hi", "mass"}));
    CHECK(d["rows"].size() == 64);
}

TEST_CASE("replay from config with different thread counts") {
    const auto a = fresh_dir("replay_a");
    const auto b = fresh_dir("replay_b");
    REQUIRE(run({"--seed", "7", "pdmp", "telegraph", "--paths", "5000", "--T", "1", "--out", a.string(), "--threads", "1"})
                .code == 0);
    const json cfg = json::parse(slurp(a / "config.json"));
    CHECK(cfg["seed"] == 7);
    CHECK(cfg["params"]["paths"] == 5000);
    CHECK_FALSE(cfg.contains("threads"));

    const auto r = run({"--config", (a / "config.json").string(), "--out", b.string(), "--threads", "8"});
    REQUIRE(r.code == 0);
    CHECK(slurp(a / "histogram.csv") == slurp(b / "histogram.csv"));
    CHECK(slurp(a / "config.json") == slurp(b / "config.json"));
    CHECK(json::parse(slurp(b / "manifest.json"))["threads"] == 8);

    // explicit options override the replayed config
    const auto c = fresh_dir("replay_c");
    REQUIRE(run({"--config", (a / "config.json").string(), "--seed", "8", "--out", c.string()}).code == 0);
    CHECK(slurp(a / "histogram.csv") != slurp(c / "histogram.csv"));
    CHECK(json::parse(slurp(c / "config.json"))["params"] == cfg["params"]);
}

TEST_CASE("config errors") {
    const auto dir = fresh_dir("badcfg");
    fs::create_directories(dir);
    std::ofstream(dir / "c.json") << R"({"command":["chains","jc-distance"],"params":{"q":1}})";
    CHECK(run({"--config", (dir / "c.json").string()}).code == 2);
    std::ofstream(dir / "d.json") << R"({"command":["chains","jc-distance"],"params":{"p":0.3}})";
    CHECK(run({"--config", (dir / "d.json").string(), "chains", "erythrocyte"}).code == 2);
    CHECK(run({"--config", (dir / "missing.json").string()}).code == 2);
    std::ofstream(dir / "e.json") << "{not json";
    CHECK(run({"--config", (dir / "e.json").string()}).code == 2);
    const auto r = run({"--config", (dir / "d.json").string()});
    CHECK(r.code == 0);
    CHECK(json::parse(r.out)["distance"].get<double>() == doctest::Approx(0.383119).epsilon(1e-6));
}

TEST_CASE("environment overrides") {
    const auto a = fresh_dir("env_a");
    const auto b = fresh_dir("env_b");
    setenv("SEMILAB_SEED", "11", 1);
    REQUIRE(run({"pdmp", "telegraph", "--paths", "2000", "--T", "1", "--out", a.string()}).code == 0);
    unsetenv("SEMILAB_SEED");
    REQUIRE(run({"--seed", "11", "pdmp", "telegraph", "--paths", "2000", "--T", "1", "--out", b.string()}).code == 0);
    CHECK(slurp(a / "histogram.csv") == slurp(b / "histogram.csv"));
    CHECK(json::parse(slurp(a / "config.json"))["seed"] == 11);

    // the command line wins over the environment
    setenv("SEMILAB_SEED", "99", 1);
    const auto c = fresh_dir("env_c");
    REQUIRE(run({"--seed", "11", "pdmp", "telegraph", "--paths", "2000", "--T", "1", "--out", c.string()}).code == 0);
    unsetenv("SEMILAB_SEED");
    CHECK(slurp(a / "histogram.csv") == slurp(c / "histogram.csv"));

    const auto d = fresh_dir("env_d");
    setenv("SEMILAB_OUT", d.string().c_str(), 1);
    setenv("SEMILAB_FORMAT", "json", 1);
    REQUIRE(run({"chains", "jc-distance", "--p", "0.1"}).code == 0);
    unsetenv("SEMILAB_OUT");
    unsetenv("SEMILAB_FORMAT");
    CHECK(fs::exists(d / "manifest.json"));
    CHECK(json::parse(slurp(d / "config.json"))["format"] == "json");
}

TEST_CASE("unwritable output directory") {
    const auto dir = fresh_dir("blocked");
    std::ofstream(dir.string()) << "file, not a directory";
    const auto r = run({"chains", "jc-distance", "--p", "0.1", "--out", (dir / "sub").string()});
    CHECK(r.code == 4);
    CHECK(first_error(r.err)["kind"] == "io");
    fs::remove(dir);
}

TEST_CASE("model subcommands produce reports") {
    SUBCASE("mckendrick") {
        const auto r = run({"structured", "mckendrick"});
        REQUIRE(r.code == 0);
        const json j = json::parse(r.out);
        CHECK(std::abs(j["lambda_hat"].get<double>() - j["lotka"].get<double>()) < 1e-3);
        CHECK(j["r_squared"].get<double>() > 0.999);
    }
    SUBCASE("erythrocyte") {
        const auto r = run({"chains", "erythrocyte"});
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out)["l1_to_poisson"].get<double>() < 1e-10);
    }
    SUBCASE("explosive") {
        const auto r = run({"chains", "explosive", "--growth", "geometric"});
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out)["verdict"] == "explosive");
    }
    SUBCASE("vesicle thread independent") {
        const auto a = run({"pdmp", "vesicle", "--runs", "2000", "--threads", "1"});
        const auto b = run({"pdmp", "vesicle", "--runs", "2000", "--threads", "4"});
        REQUIRE(a.code == 0);
        CHECK(a.out == b.out);
    }
    SUBCASE("missing matrix file") {
        CHECK(run({"spectral", "perron", "--q", "/nonexistent.csv"}).code == 2);
    }
}
