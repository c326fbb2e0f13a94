#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string cli_bin() {
    const char* env = std::getenv("KMFG_CLI_BIN");
    REQUIRE(env != nullptr);
    return env;
}

std::string source_dir() {
    const char* env = std::getenv("KMFG_SOURCE_DIR");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args) {
    std::string cmd = cli_bin() + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kTwoDirac = "'{\"kind\":\"dirac\",\"nodes\":[[2.0,0.5],[-2.0,0.5]]}'";

}  // namespace

TEST_CASE("exit codes") {
    CHECK(run("thresholds --beta 1 --sigma 1") == 0);
    // malformed dist json
    CHECK(run("thresholds --dist '{\"kind\":\"dirac\"'") == 2);
    // unknown kind names the field
    CHECK(run("thresholds --dist '{\"kind\":\"what\"}'") == 2);
    // missing field
    CHECK(run("thresholds --dist '{\"kind\":\"gaussian\"}'") == 2);
    // bad model parameter
    CHECK(run("thresholds --beta -1") == 2);
    // missing config file
    CHECK(run("thresholds --config /nonexistent.json") == 2);
}

TEST_CASE("thresholds values for the benchmark examples") {
    std::string out = "/tmp/kmfg_test_thresholds.json";
    REQUIRE(run("thresholds --beta 1 --sigma 1 --dist " + std::string(kTwoDirac) + " --out " +
                out + " --quiet") == 0);
    std::string s = slurp(out);
    CHECK(s.find("\"kappa_c\":11.1842105263") != std::string::npos);
    CHECK(s.find("\"kappa_P\":2.87817782917") != std::string::npos);

    REQUIRE(run("thresholds --beta 1 --sigma 2 --dist "
                "'{\"kind\":\"gaussian\",\"mean\":0,\"variance\":1}' --out " +
                out + " --quiet") == 0);
    s = slurp(out);
    CHECK(s.find("\"kappa_c\":13.7748725849") != std::string::npos);
    CHECK(s.find("\"kappa_c_delta0\":12") != std::string::npos);
    std::remove(out.c_str());
}

TEST_CASE("config file with flag overrides") {
    std::string cfgpath = "/tmp/kmfg_test_cfg.json";
    {
        std::ofstream f(cfgpath);
        f << "{\"model\":{\"kappa\":3.0,\"beta\":2.0,\"sigma\":1.0},"
          << "\"dist\":{\"kind\":\"dirac\",\"nodes\":[[0.0,1.0]]}}";
    }
    std::string out = "/tmp/kmfg_test_cfg_out.json";
    // flag --beta 1 overrides the file's beta=2
    REQUIRE(run("thresholds --config " + cfgpath + " --beta 1 --out " + out + " --quiet") == 0);
    std::string s = slurp(out);
    CHECK(s.find("\"gamma\":1.5") != std::string::npos);
    CHECK(s.find("\"kappa\":3") != std::string::npos);
    std::remove(cfgpath.c_str());
    std::remove(out.c_str());
}

TEST_CASE("gmap emits CSV plus sidecar and clips alpha_max") {
    std::string base = "/tmp/kmfg_test_gmap";
    REQUIRE(run("gmap --kappa 1 --beta 1 --sigma 1 --dist " + std::string(kTwoDirac) +
                " --scan-points 12 --alpha-max 5 --grid-n 64 --out " + base + " --quiet") == 0);
    std::string csv = slurp(base + ".csv");
    CHECK(csv.rfind("alpha,G_kappa", 0) == 0);
    std::string side = slurp(base + ".json");
    CHECK(side.find("\"clipped_to_kappa\":true") != std::string::npos);  // 5 > kappa=1
    // kappa=1: only the trivial fixed point
    CHECK(side.find("\"fixed_points\":[{\"alpha\":0,") != std::string::npos);
    std::remove((base + ".csv").c_str());
    std::remove((base + ".json").c_str());
}

TEST_CASE("penrose csv columns and theta-max echo") {
    std::string base = "/tmp/kmfg_test_penrose";
    REQUIRE(run("penrose --beta 1 --sigma 1 --dist " + std::string(kTwoDirac) +
                " --theta-max 55 --samples 1001 --out " + base + " --quiet") == 0);
    std::string csv = slurp(base + ".csv");
    CHECK(csv.rfind("theta,reP,imP", 0) == 0);
    std::string rep = slurp(base + ".json");
    CHECK(rep.find("\"theta_max\":55") != std::string::npos);
    CHECK(rep.find("\"kappa_P\":2.878") != std::string::npos);
    std::remove((base + ".csv").c_str());
    std::remove((base + ".json").c_str());
}

TEST_CASE("determinism: identical config gives byte-identical outputs") {
    std::string a = "/tmp/kmfg_det_a.json", b = "/tmp/kmfg_det_b.json";
    std::string cmd = "stability --beta 1 --sigma 1 --kappa-list 1 2 --dist " +
                      std::string(kTwoDirac) + " --time-n 512 --quiet --out ";
    REQUIRE(run(cmd + a) == 0);
    REQUIRE(run(cmd + b) == 0);
    CHECK(slurp(a) == slurp(b));
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("repro diffs against the checked-in expected bundle") {
    std::string expected = source_dir() + "/expected/repro_expected.json";
    CHECK(run("repro --out /tmp/kmfg_test_repro --expected " + expected + " --quiet") == 0);
}
