#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int sh(const std::string& args) {
    std::string cmd = std::string(AUTOBAHN_CLI) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

struct TempDir {
    fs::path p;
    TempDir() {
        p = fs::temp_directory_path() / ("autobahn-cli-" + std::to_string(::getpid()) + "-" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(p);
        fs::create_directories(p);
    }
    ~TempDir() { fs::remove_all(p); }
    std::string operator/(const std::string& s) const { return (p / s).string(); }
};

const std::string kBase = std::string(AUTOBAHN_SCENARIOS) + "/base4.json";

}  // namespace

TEST(Cli, BadArgumentsExitTwo) {
    EXPECT_EQ(sh("run"), 2);
    EXPECT_EQ(sh("run --scenario /nonexistent.json"), 2);
    EXPECT_EQ(sh("frobnicate"), 2);
    EXPECT_EQ(sh("trace-diff only-one"), 2);
}

TEST(Cli, RunWritesArtifactsAndTracesMatch) {
    TempDir d;
    ASSERT_EQ(sh("run --scenario " + kBase + " --seed 3 --out " + (d / "a")), 0);
    ASSERT_EQ(sh("run --scenario " + kBase + " --seed 3 --out " + (d / "b")), 0);
    ASSERT_EQ(sh("run --scenario " + kBase + " --seed 4 --out " + (d / "c")), 0);
    for (const char* f : {"trace.ndjson", "metrics.csv", "summary.json"}) EXPECT_TRUE(fs::exists(d / ("a/" + std::string(f)))) << f;
    EXPECT_EQ(sh("trace-diff " + (d / "a/trace.ndjson") + " " + (d / "b/trace.ndjson")), 0);
    EXPECT_EQ(sh("trace-diff " + (d / "a/trace.ndjson") + " " + (d / "c/trace.ndjson")), 1);
}

TEST(Cli, TruncatedTraceExitsTwo) {
    TempDir d;
    ASSERT_EQ(sh("run --scenario " + kBase + " --seed 3 --out " + (d / "a")), 0);
    std::ifstream in(d / "a/trace.ndjson");
    std::string all((std::istreambuf_iterator<char>(in)), {});
    ASSERT_GT(all.size(), 10u);
    std::ofstream(d / "cut.ndjson") << all.substr(0, all.size() - 5);
    EXPECT_EQ(sh("trace-diff " + (d / "a/trace.ndjson") + " " + (d / "cut.ndjson")), 2);
    EXPECT_EQ(sh("trace-diff " + (d / "a/trace.ndjson") + " " + (d / "missing.ndjson")), 2);
}

TEST(Cli, SeedSweepWritesAggregate) {
    TempDir d;
    ASSERT_EQ(sh("run --scenario " + kBase + " --seeds 1..3 --no-trace --format json --out " + (d / "s")), 0);
    EXPECT_TRUE(fs::exists(d / "s/aggregate.json"));
    EXPECT_TRUE(fs::exists(d / "s/seed-2/metrics.json"));
}
