#pragma once

#include <deque>

#include "autobahn/consensus.hpp"
#include "autobahn/ordering.hpp"

namespace autobahn {

enum class ByzMode { None, Equivocate, WithholdData, LeaderTipAbuse };
const char* to_string(ByzMode m);

struct ReplicaConfig {
    LaneConfig lane;
    ConsensusConfig consensus;
    OrderingConfig ordering;
    bool standalone_poa = false;  // broadcast a fresh PoA at once instead of waiting for the next car
    ByzMode byz = ByzMode::None;
};

// One replica: data lanes, consensus and ordering wired to a single Outbox. Byzantine
// modes only alter what this replica itself sends.
class Replica {
public:
    Replica(ReplicaId id, QuorumConfig q, const KeyRing* keys, ReplicaConfig cfg, Outbox* out, Observer* obs);
    Replica(const Replica&) = delete;
    Replica& operator=(const Replica&) = delete;

    void start();
    void deliver(ReplicaId from, const Message& m);
    void on_timer(const TimerId& id);
    void submit(const Tx& tx) { queue_.push_back(tx); }
    // Runs after every event: new cars, deferred votes, proposals, sync and finalization.
    void after_event();

    ReplicaId id() const { return id_; }
    ByzMode byz() const { return cfg_.byz; }
    bool correct() const { return cfg_.byz == ByzMode::None; }
    const DataLanes& lanes() const { return lanes_; }
    DataLanes& lanes() { return lanes_; }
    const Consensus& consensus() const { return consensus_; }
    Consensus& consensus() { return consensus_; }
    const Ordering& ordering() const { return ordering_; }
    Ordering& ordering() { return ordering_; }
    size_t queued() const { return queue_.size(); }
    // Transactions this replica put into cars (own lane), in order.
    const std::vector<ProposalPtr>& own_cars() const { return own_cars_; }

private:
    void propose_car();
    void send_car(const ProposalPtr& p);
    bool send_prepare(const PreparePtr& p);
    void cast_vote(const Vote& v);
    std::vector<ReplicaId> others() const;

    ReplicaId id_;
    QuorumConfig q_;
    const KeyRing* keys_;
    ReplicaConfig cfg_;
    Outbox* out_;
    Observer* obs_;
    DataLanes lanes_;
    Consensus consensus_;
    Ordering ordering_;
    std::deque<Tx> queue_;
    std::vector<ProposalPtr> own_cars_;
    uint64_t forged_ = 0;
};

}  // namespace autobahn
