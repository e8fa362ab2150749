#include <gtest/gtest.h>

#include <fstream>

#include "autobahn/harness.hpp"

using namespace autobahn;
using nlohmann::json;

namespace {

json base() { return json::parse(R"({"version": 1, "n": 4, "horizon": 20})"); }

std::string error_path(json j) {
    try {
        parse_scenario(j);
    } catch (const ScenarioError& e) {
        return e.path();
    }
    return "";
}

}  // namespace

TEST(Scenario, DefaultsParse) {
    auto s = parse_scenario(base());
    EXPECT_EQ(s.n, 4u);
    EXPECT_EQ(s.horizon, 20 * kUnit);
}

TEST(Scenario, ErrorsNameTheJsonPath) {
    auto j = base();
    j.erase("version");
    EXPECT_EQ(error_path(j), "$.version");

    j = base();
    j["bogus"] = 1;
    EXPECT_EQ(error_path(j), "$.bogus");

    j = base();
    j["n"] = 5;
    EXPECT_EQ(error_path(j), "$.n");

    j = base();
    j["protocol"] = {{"k", 0}};
    EXPECT_EQ(error_path(j), "$.protocol.k");

    j = base();
    j["load"] = {{"mode", "burst"}};
    EXPECT_EQ(error_path(j), "$.load.mode");

    j = base();
    j["faults"] = {{"silent", {{{"replica", 9}, {"start", 0}, {"end", 1}}}}};
    EXPECT_EQ(error_path(j), "$.faults.silent[0].replica");

    j = base();
    j["faults"] = {{"partitions", {{{"groups", {{1}}}, {"start", 3}, {"end", 2}}}}};
    EXPECT_EQ(error_path(j), "$.faults.partitions[0].end");

    j = base();
    j["faults"] = {{"byzantine", {{{"replica", 0}}, {{"replica", 1}}}}};
    EXPECT_THROW(parse_scenario(j), ScenarioError);
}

TEST(Scenario, RoundTripsThroughJson) {
    for (const char* f : {"base4.json", "faulty4.json", "sequential4.json", "blip50.json"}) {
        auto s = load_scenario_file(std::string(AUTOBAHN_SCENARIOS) + "/" + f);
        auto again = parse_scenario(scenario_to_json(s));
        EXPECT_EQ(scenario_to_json(again), scenario_to_json(s)) << f;
    }
}

TEST(Load, FixedRateCountsPerLane) {
    auto s = parse_scenario(base());
    s.load.rate = 2;
    auto plan = plan_load(s);
    EXPECT_EQ(plan.size(), 4u * 40u);  // 2 per Δ for 20Δ on 4 lanes
    for (size_t i = 0; i < plan.size(); ++i) EXPECT_EQ(std::get<0>(plan[i]), i + 1);
    s.load.lanes = {2};
    s.load.start = 10 * kUnit;
    plan = plan_load(s);
    EXPECT_EQ(plan.size(), 20u);
    for (const auto& [id, lane, t] : plan) {
        EXPECT_EQ(lane, 2u);
        EXPECT_GE(t, 10 * kUnit);
    }
}

TEST(Load, PoissonIsSeededAndNearTheRate) {
    auto s = parse_scenario(base());
    s.load.kind = LoadSpec::Kind::Poisson;
    s.load.rate = 5;
    s.horizon = 400 * kUnit;
    auto a = plan_load(s), b = plan_load(s);
    EXPECT_EQ(a, b);
    double per_lane = double(a.size()) / 4;
    EXPECT_NEAR(per_lane, 2000, 200);
    s.seed = 2;
    EXPECT_NE(plan_load(s), a);
}

TEST(Hangover, SyntheticRecords) {
    std::vector<TxRecord> txs;
    uint64_t id = 0;
    // steady latency 3 before the blip [10, 20)
    for (Time t = 0; t < 10 * kUnit; t += kUnit) txs.push_back({++id, 0, t, t + 3 * kUnit, t + 3 * kUnit, 4});
    // stuck through the blip, all released at 24
    for (Time t = 10 * kUnit; t < 20 * kUnit; t += kUnit) txs.push_back({++id, 0, t, 24 * kUnit, 24 * kUnit, 4});
    // after: back to 3
    for (Time t = 20 * kUnit; t < 40 * kUnit; t += kUnit) txs.push_back({++id, 0, t, t + 3 * kUnit, t + 3 * kUnit, 4});
    auto h = measure_hangover(txs, 10 * kUnit, 20 * kUnit, 5 * kUnit);
    EXPECT_EQ(h.steady, 3 * kUnit);
    EXPECT_EQ(h.drain, 4 * kUnit);
    EXPECT_EQ(h.first_excess, 0);
}

TEST(Run, Base4IsSafeAndConserving) {
    auto s = load_scenario_file(std::string(AUTOBAHN_SCENARIOS) + "/base4.json");
    auto r = run_scenario(s);
    EXPECT_TRUE(r.violations.empty());
    EXPECT_TRUE(r.conservation.ok);
    EXPECT_GT(r.finalized_slots, 0u);
    EXPECT_EQ(r.conservation.duplicates, 0u);
}
