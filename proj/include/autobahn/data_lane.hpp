#pragma once

#include <map>
#include <stdexcept>
#include <unordered_map>
#include <variant>
#include <vector>

#include "autobahn/messages.hpp"

namespace autobahn {

struct LaneConfig {
    uint32_t batch_cap = 1000;    // b: max transactions per car
    uint32_t tx_size_cap = 4096;  // bytes per transaction
    size_t buffer_cap = 1024;     // out-of-order proposals held per lane
};

class LaneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RejectReason { duplicate_position, bad_signature, bad_parent_cert, malformed, fork, buffer_full, equivocation };
const char* to_string(RejectReason r);

struct Buffered {};
struct Rejected {
    RejectReason reason;
};
using ProposalOutcome = std::variant<Vote, Buffered, Rejected>;

// One lane as seen by one replica.
struct LaneState {
    ReplicaId lane = 0;
    // Highest contiguous position whose proposal this replica accepted, either by
    // voting or by adopting committed history. Votes only ever go to accepted+1.
    LanePos accepted_pos = 0;
    std::map<LanePos, Digest> accepted;  // the accepted chain
    std::map<LanePos, PoAPtr> certs;     // first PoA learned per position
    std::map<LanePos, std::vector<ProposalPtr>> buffer;
    size_t buffered = 0;
    std::map<LanePos, std::vector<Digest>> stored;  // every stored proposal, by position
    std::map<LanePos, Digest> committed;
    LanePos last_commit = 0;

    // Own lane only.
    ProposalPtr last_broadcast;
    std::map<Digest, std::map<ReplicaId, Authenticator>> pending_votes;  // for last_broadcast.pos
    bool outstanding_certified = true;

    LanePos certified_pos() const { return certs.empty() ? 0 : certs.rbegin()->first; }
};

class DataLanes {
public:
    DataLanes(ReplicaId self, QuorumConfig q, const KeyRing* keys, LaneConfig cfg = {});

    ReplicaId self() const { return self_; }
    const QuorumConfig& quorum() const { return q_; }
    const LaneConfig& config() const { return cfg_; }

    // ---- proposer side (own lane) ----
    bool can_propose() const;
    // Next car at certified_pos+1 carrying the parent's PoA. Throws LaneError when the
    // previous car is still uncertified (one car in flight).
    ProposalPtr create_proposal(std::vector<Tx> batch);
    // A second, conflicting car for the outstanding position. Only Byzantine adapters use this.
    ProposalPtr create_sibling(std::vector<Tx> batch);
    // Returns the PoA exactly once, when the (f+1)-th distinct matching vote arrives.
    PoAPtr handle_vote(const Vote& v);

    // ---- voter side ----
    // Votes iff the parent was accepted (or pos==1) and the position is fresh. Buffered
    // proposals that become votable are replayed; their votes are appended to `replayed`.
    ProposalOutcome handle_proposal(const ProposalPtr& p, std::vector<Vote>* replayed = nullptr);

    bool verify_poa(const ProofOfAvailability& poa) const;
    bool verify_proposal(const DataProposal& p) const;
    // Records a verified PoA. Returns true if it is new.
    bool learn_poa(const PoAPtr& poa);

    // True if a different car by the same author is already stored at the tip's position
    // above the committed frontier: the author equivocated.
    bool conflicts(const TipRef& t) const;

    TipRef certified_tip(ReplicaId lane) const;
    TipRef optimistic_tip(ReplicaId lane) const;

    // ---- storage ----
    ProposalPtr find(const Digest& d) const;
    bool has(const Digest& d) const { return store_.count(d) != 0; }
    // Stores an authenticated proposal obtained via sync. Caller validated the chain.
    void store(const ProposalPtr& p);
    // Walks the parent chain from `tip` down to `from`. Returns the chain oldest-first, or
    // an empty vector if some link is missing locally.
    std::vector<ProposalPtr> chain(const Digest& tip, LanePos tip_pos, LanePos from) const;

    // Ordering hooks.
    void mark_committed(const ProposalPtr& p);
    // Adopt committed history as accepted so in-order voting can resume past it.
    std::vector<Vote> adopt_committed(ReplicaId lane);
    // Drops stored proposals at or below last_commit that are not on the committed chain.
    size_t gc_forks(ReplicaId lane);
    // Transactions stored for `lane` above every known PoA (and above `certified_floor`)
    // that are not committed.
    uint64_t unresolved_txs(ReplicaId lane, LanePos certified_floor = 0) const;

    const LaneState& lane(ReplicaId l) const { return lanes_.at(l); }
    LaneState& lane_mut(ReplicaId l) { return lanes_.at(l); }
    size_t stored_count() const { return store_.size(); }

private:
    ProposalOutcome try_accept(LaneState& ls, const ProposalPtr& p);
    Vote make_vote(const DataProposal& p) const;
    void insert(const ProposalPtr& p);
    ProposalPtr build(std::vector<Tx> batch, LanePos pos, std::optional<Digest> parent, PoAPtr parent_cert);

    ReplicaId self_;
    QuorumConfig q_;
    const KeyRing* keys_;
    LaneConfig cfg_;
    std::vector<LaneState> lanes_;
    std::unordered_map<Digest, ProposalPtr, DigestHash> store_;
};

}  // namespace autobahn
