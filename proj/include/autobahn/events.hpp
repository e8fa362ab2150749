#pragma once

#include <compare>
#include <vector>

#include "autobahn/messages.hpp"

namespace autobahn {

struct TimerId {
    enum Kind : uint8_t { View = 0, FastWait = 1, Sync = 2, Catchup = 3 };
    uint8_t kind = View;
    uint64_t a = 0;
    uint64_t b = 0;

    auto operator<=>(const TimerId&) const = default;
};

// Side effects of a replica's state machine. The simulator implements it; unit tests
// use a recording fake.
class Outbox {
public:
    virtual ~Outbox() = default;
    virtual Time now() const = 0;
    virtual void send(ReplicaId to, Message m) = 0;
    virtual void broadcast(Message m) = 0;  // every replica, self included
    virtual void set_timer(TimerId id, Time delay) = 0;
    virtual void cancel_timer(TimerId id) = 0;
};

struct LogEntry {
    SlotNum slot = 0;
    ReplicaId lane = 0;
    LanePos pos = 0;
    ProposalPtr prop;
};

struct SyncRecord {
    ReplicaId lane = 0;
    LanePos from = 0;
    LanePos to = 0;
    uint32_t exchanges = 0;      // accepted request/reply round trips
    uint32_t not_servable = 0;   // probes answered with NotServable
    uint32_t timeouts = 0;       // probes that never answered in time
    uint32_t rejected = 0;       // replies that failed chain validation
    Time started = 0;
    Time finished = 0;
};

// Omniscient hooks for checkers and metrics. Every call names the acting replica.
class Observer {
public:
    virtual ~Observer() = default;
    virtual void car_voted(ReplicaId, const Vote&) {}
    virtual void poa_accepted(ReplicaId, const ProofOfAvailability&, bool /*sound*/) {}
    virtual void prepared(ReplicaId, const SignedCut&) {}  // a Prepare was broadcast by its leader
    virtual void prep_voted(ReplicaId, const PrepVote&) {}
    virtual void confirm_acked(ReplicaId, const ConfirmAck&) {}
    virtual void prepare_qc(ReplicaId, const PrepareQC&) {}
    virtual void commit_qc(ReplicaId, const CommitQC&) {}
    virtual void committed(ReplicaId, const CommitQC&) {}
    virtual void timeout_cert(ReplicaId, const TimeoutCert&) {}
    virtual void view_entered(ReplicaId, SlotNum, ViewNum) {}
    virtual void finalized(ReplicaId, const std::vector<LogEntry>&) {}
    virtual void sync_done(ReplicaId, const SyncRecord&) {}
};

}  // namespace autobahn
