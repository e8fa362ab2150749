#include <gtest/gtest.h>

#include <sstream>

#include "autobahn/sim_net.hpp"

using namespace autobahn;

namespace {

SimConfig config(uint32_t n, uint64_t seed, std::ostream* trace = nullptr) {
    SimConfig c;
    c.q = quorum_sizes(n);
    c.seed = seed;
    c.delay.base = kUnit / 2;
    c.delay.jitter = kUnit / 2;
    c.trace = trace;
    return c;
}

std::string run(uint64_t seed) {
    std::ostringstream out;
    Simulator sim(config(4, seed, &out));
    for (uint64_t i = 0; i < 40; ++i) sim.inject(Time(i) * kUnit / 4, ReplicaId(i % 4), Tx{i + 1, 64});
    sim.start();
    sim.run_until(30 * kUnit);
    return out.str();
}

}  // namespace

TEST(Simulator, SameSeedSameTrace) {
    auto a = run(5), b = run(5);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    EXPECT_NE(a, run(6));
}

TEST(Simulator, TooManyByzantineReplicasThrow) {
    auto c = config(4, 1);
    c.faults.byzantine = {{0, ByzMode::Equivocate}, {1, ByzMode::Equivocate}};
    EXPECT_THROW(Simulator{c}, std::invalid_argument);
    c.faults.byzantine.pop_back();
    EXPECT_NO_THROW(Simulator{c});
}

TEST(Simulator, UnknownReplicaInFaultsThrows) {
    auto c = config(4, 1);
    c.faults.silences.push_back(SilentFault{7, 0, kUnit});
    EXPECT_THROW(Simulator{c}, std::invalid_argument);
}

TEST(Simulator, RespectsDeclaredBoundWithoutFaults) {
    Simulator sim(config(4, 3));
    for (uint64_t i = 0; i < 20; ++i) sim.inject(Time(i) * kUnit / 2, ReplicaId(i % 4), Tx{i + 1, 64});
    sim.start();
    sim.run_until(20 * kUnit);
    EXPECT_GT(sim.stats().delivered, 0u);
    EXPECT_EQ(sim.stats().late_in_sync, 0u);
    EXPECT_EQ(sim.stats().dropped, 0u);
    for (ReplicaId r = 0; r < 4; ++r) EXPECT_GT(sim.replica(r).ordering().finalized_slot(), 0u);
}

TEST(Simulator, LossyPartitionDropsAndHealedPartitionHolds) {
    auto lossy = config(4, 3);
    lossy.faults.partitions.push_back(PartitionFault{{{3}}, 0, 5 * kUnit, true});
    Simulator a(lossy);
    for (uint64_t i = 0; i < 8; ++i) a.inject(Time(i) * kUnit / 2, ReplicaId(i % 4), Tx{i + 1, 64});
    a.start();
    a.run_until(10 * kUnit);
    EXPECT_GT(a.stats().dropped, 0u);

    auto held = config(4, 3);
    held.faults.partitions.push_back(PartitionFault{{{3}}, 0, 5 * kUnit, false});
    Simulator b(held);
    for (uint64_t i = 0; i < 8; ++i) b.inject(Time(i) * kUnit / 2, ReplicaId(i % 4), Tx{i + 1, 64});
    b.start();
    b.run_until(10 * kUnit);
    EXPECT_EQ(b.stats().dropped, 0u);
    EXPECT_GT(b.stats().held, 0u);
}
