#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace autobahn;
using test::LaneCluster;
using test::txs;

TEST(DataLane, PoAFormsExactlyOnceAtFPlusOneVotes) {
    LaneCluster c(4);
    auto p = c.r[0]->create_proposal(txs(1, 3));
    EXPECT_EQ(p->pos, 1u);
    EXPECT_FALSE(p->parent);
    int formed = 0;
    std::vector<Vote> votes;
    for (ReplicaId i = 0; i < 4; ++i) votes.push_back(std::get<Vote>(c.r[i]->handle_proposal(p)));
    for (size_t i = 0; i < votes.size(); ++i) {
        auto poa = c.r[0]->handle_vote(votes[i]);
        if (poa) {
            ++formed;
            EXPECT_EQ(i + 1, c.q.poa);
            EXPECT_EQ(poa->votes.size(), c.q.poa);
            EXPECT_TRUE(c.r[1]->verify_poa(*poa));
        }
    }
    EXPECT_EQ(formed, 1);
    // A repeated vote does not form a second PoA.
    EXPECT_FALSE(c.r[0]->handle_vote(votes[1]));
}

TEST(DataLane, OneCarInFlight) {
    LaneCluster c(4);
    c.r[0]->create_proposal(txs(1, 1));
    EXPECT_FALSE(c.r[0]->can_propose());
    EXPECT_THROW(c.r[0]->create_proposal(txs(2, 1)), LaneError);
}

TEST(DataLane, NextCarCarriesParentCertificate) {
    LaneCluster c(4);
    auto p1 = c.car(0, txs(1, 1));
    ASSERT_TRUE(c.r[0]->can_propose());
    auto p2 = c.r[0]->create_proposal(txs(2, 1));
    EXPECT_EQ(p2->pos, 2u);
    ASSERT_TRUE(p2->parent && p2->parent_cert);
    EXPECT_EQ(*p2->parent, p1->dig);
    EXPECT_EQ(p2->parent_cert->dig, p1->dig);
}

TEST(DataLane, BatchCapIsEnforced) {
    LaneConfig cfg;
    cfg.batch_cap = 2;
    LaneCluster c(4, cfg);
    EXPECT_THROW(c.r[0]->create_proposal(txs(1, 3)), LaneError);
}

TEST(DataLane, OutOfOrderProposalIsBufferedThenReplayed) {
    LaneCluster c(4);
    auto p1 = c.r[0]->create_proposal(txs(1, 1));
    c.deliver(p1, {0, 1, 2});
    auto p2 = c.r[0]->create_proposal(txs(2, 1));
    // Replica 3 sees the second car first.
    EXPECT_TRUE(std::holds_alternative<Buffered>(c.r[3]->handle_proposal(p2)));
    std::vector<Vote> replayed;
    auto out = c.r[3]->handle_proposal(p1, &replayed);
    ASSERT_TRUE(std::holds_alternative<Vote>(out));
    ASSERT_EQ(replayed.size(), 1u);
    EXPECT_EQ(replayed[0].pos, 2u);
    EXPECT_EQ(c.r[3]->lane(0).accepted_pos, 2u);
}

TEST(DataLane, RejectsTamperedAndMalformedProposals) {
    LaneCluster c(4);
    auto p = c.r[0]->create_proposal(txs(1, 1));
    auto bad = std::make_shared<DataProposal>(*p);
    bad->batch.push_back(Tx{99, 1});
    EXPECT_EQ(std::get<Rejected>(c.r[1]->handle_proposal(bad)).reason, RejectReason::bad_signature);
    auto wrong_author = std::make_shared<DataProposal>(*p);
    wrong_author->lane = 2;
    EXPECT_EQ(std::get<Rejected>(c.r[1]->handle_proposal(wrong_author)).reason, RejectReason::bad_signature);
    auto zero = std::make_shared<DataProposal>(*p);
    zero->pos = 0;
    EXPECT_EQ(std::get<Rejected>(c.r[1]->handle_proposal(zero)).reason, RejectReason::malformed);
    ASSERT_TRUE(std::holds_alternative<Vote>(c.r[1]->handle_proposal(p)));
    EXPECT_EQ(std::get<Rejected>(c.r[1]->handle_proposal(p)).reason, RejectReason::duplicate_position);
}

TEST(DataLane, PoAWithDuplicateSignerIsInvalid) {
    LaneCluster c(4);
    auto p = c.r[0]->create_proposal(txs(1, 1));
    auto v = std::get<Vote>(c.r[1]->handle_proposal(p));
    ProofOfAvailability poa{0, 1, p->dig, {v.sig, v.sig}};
    EXPECT_FALSE(c.r[2]->verify_poa(poa));
    poa.votes = {v.sig};
    EXPECT_FALSE(c.r[2]->verify_poa(poa));
}

// Property: whatever order an equivocating author's cars arrive in, a correct replica
// votes at most once per position and only along one chain.
TEST(DataLane, EquivocationNeverYieldsTwoVotesPerPosition) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 200; ++round) {
        LaneCluster c(4);
        std::vector<ProposalPtr> all;
        // Two siblings at pos 1 plus a successor of the first, in random order.
        auto a1 = c.r[0]->create_proposal(txs(1, 1));
        auto b1 = c.r[0]->create_sibling(txs(100, 1));
        c.deliver(a1, {0, 1});
        all.push_back(a1);
        all.push_back(b1);
        auto a2 = c.r[0]->create_proposal(txs(2, 1));
        all.push_back(a2);
        std::shuffle(all.begin(), all.end(), rng);
        std::map<LanePos, std::set<Digest>> voted;
        for (const auto& p : all) {
            std::vector<Vote> replay;
            auto out = c.r[3]->handle_proposal(p, &replay);
            if (auto* v = std::get_if<Vote>(&out)) replay.push_back(*v);
            for (const auto& v : replay) voted[v.pos].insert(v.dig);
        }
        for (const auto& [pos, digs] : voted) EXPECT_EQ(digs.size(), 1u) << "round " << round << " pos " << pos;
        EXPECT_LE(c.r[3]->lane(0).accepted_pos, 2u);
    }
}

TEST(DataLane, SiblingOfStoredCarIsRecognizedAsConflict) {
    LaneCluster c(4);
    auto a = c.r[0]->create_proposal(txs(1, 1));
    auto b = c.r[0]->create_sibling(txs(2, 1));
    ASSERT_TRUE(std::holds_alternative<Vote>(c.r[1]->handle_proposal(a)));
    EXPECT_TRUE(c.r[1]->conflicts(TipRef{0, 1, b->dig, nullptr}));
    EXPECT_FALSE(c.r[1]->conflicts(TipRef{0, 1, a->dig, nullptr}));
    EXPECT_FALSE(c.r[1]->conflicts(TipRef{0, 2, b->dig, nullptr}));
    // A fetched sibling blocks voting for the other one later.
    c.r[2]->store(b);
    EXPECT_EQ(std::get<Rejected>(c.r[2]->handle_proposal(a)).reason, RejectReason::equivocation);
}

TEST(DataLane, ChainWalksParentsAndFailsOnGap) {
    LaneCluster c(4);
    auto p1 = c.car(0, txs(1, 1));
    auto p2 = c.car(0, txs(2, 1));
    auto p3 = c.car(0, txs(3, 1));
    auto ch = c.r[2]->chain(p3->dig, 3, 1);
    ASSERT_EQ(ch.size(), 3u);
    EXPECT_EQ(ch[0]->dig, p1->dig);
    EXPECT_EQ(ch[2]->dig, p3->dig);
    DataLanes fresh(2, c.q, &c.keys);
    fresh.store(p3);
    fresh.store(p1);
    EXPECT_TRUE(fresh.chain(p3->dig, 3, 1).empty());
    (void)p2;
}

TEST(DataLane, GcDropsForksAtOrBelowCommit) {
    LaneCluster c(4);
    auto a = c.r[0]->create_proposal(txs(1, 2));
    auto b = c.r[0]->create_sibling(txs(10, 2));
    c.r[1]->handle_proposal(b);  // replica 1 voted the sibling that loses
    c.r[1]->store(a);
    c.r[1]->mark_committed(a);
    EXPECT_EQ(c.r[1]->gc_forks(0), 1u);
    EXPECT_FALSE(c.r[1]->has(b->dig));
    EXPECT_TRUE(c.r[1]->has(a->dig));
    // Committed history replaces the dead sibling, so the lane can keep voting.
    EXPECT_TRUE(c.r[1]->adopt_committed(0).empty());
    EXPECT_EQ(c.r[1]->lane(0).accepted.at(1), a->dig);
}

TEST(DataLane, UnresolvedCountsOnlyAboveCertifiedFrontier) {
    LaneCluster c(4);
    c.car(0, txs(1, 3));
    auto p2 = c.r[0]->create_proposal(txs(4, 5));
    c.deliver(p2, {1});
    // Replica 1 knows the PoA of pos 1 (carried by p2) but not of pos 2.
    EXPECT_EQ(c.r[1]->unresolved_txs(0), 5u);
    EXPECT_EQ(c.r[1]->unresolved_txs(0, 2), 0u);
}
