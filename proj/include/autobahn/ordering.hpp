#pragma once

#include <functional>
#include <map>
#include <set>

#include "autobahn/data_lane.hpp"
#include "autobahn/events.hpp"

namespace autobahn {

enum class SyncVerdict { accepted, not_servable, wrong_count, broken_chain, digest_mismatch, unexpected };
const char* to_string(SyncVerdict v);

// Checks a reply against the request it answers: right number of proposals, each
// authentic and linked to its predecessor, ending at the requested digest.
SyncVerdict validate_sync_reply(const SyncRequest& req, const SyncReply& rep, const DataLanes& lanes);

// Round-robin over lanes in id order, oldest first within a lane.
std::vector<LogEntry> zip_lanes(SlotNum slot, const std::vector<std::vector<ProposalPtr>>& per_lane);

struct OrderingConfig {
    Time sync_timeout = 2 * kUnit;
};

struct PendingCommit {
    SlotNum slot = 0;
    CutPtr cut;
};

class Ordering {
public:
    Ordering(ReplicaId self, QuorumConfig q, DataLanes* lanes, Outbox* out, Observer* obs = nullptr,
             OrderingConfig cfg = {});

    std::function<void(SlotNum)> on_finalized;
    // Lanes whose history this replica refuses to serve (Byzantine adapters only).
    std::function<bool(ReplicaId lane)> refuse_sync;

    void on_commit(const CommitQCPtr& qc);
    // Background fetch of certified tip histories seen while voting.
    void prefetch(const Cut& cut);
    // Fetch one uncertified tip payload, asking `hint` first.
    void fetch_tip(const TipRef& tip, ReplicaId hint);

    SyncReply handle_sync_request(ReplicaId from, const SyncRequest& req);
    SyncVerdict handle_sync_reply(ReplicaId from, const SyncReply& rep);
    void on_timer(const TimerId& id);

    // Issues sync requests for every lane a pending commit (or prefetch) still misses.
    void schedule_syncs();
    // Finalizes pending slots in order while their histories are complete.
    size_t try_finalize();

    const std::vector<LogEntry>& log() const { return log_; }
    SlotNum finalized_slot() const { return finalized_; }
    size_t pending() const { return pending_.size(); }
    const std::vector<SyncRecord>& sync_records() const { return records_; }
    size_t outstanding_syncs() const { return syncs_.size(); }

private:
    struct Outstanding {
        SyncRequest req;
        std::vector<ReplicaId> targets;
        size_t next = 0;
        ReplicaId asked = 0;
        SyncRecord rec;
    };
    struct Want {
        LanePos pos;
        Digest dig;
        PoAPtr cert;
        std::optional<ReplicaId> hint;
    };

    // First position above last_commit whose proposal is missing on the way down from the tip.
    std::optional<std::pair<LanePos, Digest>> first_missing(ReplicaId lane, LanePos pos, const Digest& tip) const;
    bool covered(ReplicaId lane, LanePos from, LanePos to) const;
    void start_sync(ReplicaId lane, LanePos from, LanePos to, const Digest& dig, std::vector<ReplicaId> targets);
    void probe(Outstanding& o);
    std::vector<ReplicaId> targets_for(ReplicaId lane, const PoAPtr& cert, std::optional<ReplicaId> hint) const;
    bool finalize_one(const PendingCommit& pc);

    ReplicaId self_;
    QuorumConfig q_;
    DataLanes* lanes_;
    Outbox* out_;
    Observer* obs_;
    OrderingConfig cfg_;

    std::map<SlotNum, PendingCommit> pending_;
    std::map<ReplicaId, std::vector<Want>> wants_;  // prefetch / fetch targets
    std::map<uint64_t, Outstanding> syncs_;
    uint64_t next_req_ = 1;
    SlotNum finalized_ = 0;
    std::vector<LogEntry> log_;
    std::vector<SyncRecord> records_;
};

}  // namespace autobahn
