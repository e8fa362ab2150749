#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <variant>

#include "autobahn/data_lane.hpp"
#include "autobahn/events.hpp"

namespace autobahn {

enum class Mode { Sequential, Parallel };
enum class LeaderSchedule { Offset, Unshifted };

struct ConsensusConfig {
    Mode mode = Mode::Parallel;
    uint32_t k = 4;          // max concurrent slots (parallel mode)
    uint32_t coverage = 0;   // lanes that must advance; 0 means n-f
    bool fast_path = true;
    Time fast_wait = kUnit / 5;
    Time view_timer = 10 * kUnit;
    bool leader_tips = true;
    bool optimistic_tips = false;
    size_t view_buffer_cap = 64;
    LeaderSchedule schedule = LeaderSchedule::Offset;

    // Deliberate bugs for mutation testing of the checkers.
    bool mutate_double_vote = false;
    bool mutate_winner_rule = false;
};

ReplicaId leader_for(SlotNum slot, ViewNum view, const QuorumConfig& q,
                     LeaderSchedule schedule = LeaderSchedule::Offset);

// True iff at least `threshold` lanes have a local tip strictly above the reference cut.
bool check_coverage(const std::vector<TipRef>& local, const std::vector<TipRef>& reference, uint32_t threshold);

struct Winner {
    enum class Source { HighQC, HighProp };
    CutPtr cut;
    ViewNum view = 0;
    Source source = Source::HighQC;
};

// A = cut of the highest-view highQC; B = highest-view proposal carried by >= f+1
// distinct highProps. Higher view wins, ties go to A. `mutated` hands ties to B, which is
// unsafe under an equivocating leader (used only to prove the tests catch it).
std::optional<Winner> winning_proposal(const TimeoutCert& tc, const QuorumConfig& q, bool mutated = false);

// Slot s in parallel mode needs the first Prepare of s-1 and CommitQC_{s-k}; genesis
// Prepare_0 / CommitQC_0 stand in for slots up to k.
bool parallel_ticket_check(SlotNum slot, uint32_t k, const SignedCut* prev_prepare, const CommitQC* bound);

// Signature and quorum validation of consensus artifacts.
class Validator {
public:
    Validator(QuorumConfig q, const KeyRing* keys, LeaderSchedule schedule)
        : q_(q), keys_(keys), schedule_(schedule) {}

    bool poa(const ProofOfAvailability& p) const;
    bool signed_cut(const SignedCut& p) const;
    bool prepare_qc(const PrepareQC& qc) const;
    bool commit_qc(const CommitQC& qc) const;
    bool timeout(const TimeoutMsg& t) const;
    bool tc(const TimeoutCert& tc) const;
    bool cut_shape(const Cut& c, SlotNum slot) const;

private:
    bool quorum_of(const std::vector<Authenticator>& votes, uint32_t need, const Digest& payload) const;

    QuorumConfig q_;
    const KeyRing* keys_;
    LeaderSchedule schedule_;
};

enum class PrepareError { bad_signature, wrong_leader, bad_ticket, bad_cut, stale_view, already_voted, timed_out, committed, equivocation };
const char* to_string(PrepareError e);

struct PrepareRejected {
    PrepareError reason;
};
struct Deferred {
    std::vector<TipRef> missing;  // uncertified tips whose payload is not local yet
};
struct BufferedView {};
using PrepareOutcome = std::variant<PrepVote, PrepareRejected, Deferred, BufferedView>;

struct Pending {};
struct FastWaitArmed {};
using VoteOutcome = std::variant<Pending, FastWaitArmed, PrepareQCPtr, CommitQCPtr>;

struct JoinMutiny {
    TimeoutPtr own;
};
struct TCFormed {
    TimeoutCertPtr tc;
};
struct ForwardCommit {
    CommitQCPtr qc;
};
using TimeoutOutcome = std::variant<Pending, JoinMutiny, TCFormed, ForwardCommit>;

struct SlotInstance {
    SlotNum slot = 0;
    ViewNum view = 0;
    bool started = false;  // view-0 ticket observed, timer armed
    SignedCutPtr prop;     // highest-view Prepare voted for
    PrepareQCPtr conf;     // highest-view PrepareQC seen
    std::set<ViewNum> prep_voted, acked, timed_out, proposed;
    std::map<ViewNum, std::map<ReplicaId, TimeoutPtr>> timeouts;
    std::map<ViewNum, TimeoutCertPtr> tcs;

    // Leader side.
    std::map<ViewNum, SignedCutPtr> my_prop;
    std::map<ViewNum, std::map<ReplicaId, Authenticator>> prep_votes;
    std::map<ViewNum, PrepareQCPtr> my_qc;
    std::map<ViewNum, std::map<ReplicaId, Authenticator>> acks;

    std::vector<std::pair<ReplicaId, Message>> future;  // higher-view messages
    PreparePtr deferred;                                // awaiting optimistic payloads
};

class Consensus {
public:
    Consensus(ReplicaId self, QuorumConfig q, const KeyRing* keys, ConsensusConfig cfg, DataLanes* lanes,
              Outbox* out, Observer* obs = nullptr);

    // Hooks wired by the replica.
    std::function<void(const CommitQCPtr&)> on_committed;
    std::function<void(const Cut&)> on_voted_cut;  // background prefetch of tip histories
    std::function<void(const TipRef&, ReplicaId leader)> fetch_tip;
    // Outbound Prepare interception (Byzantine leaders). Returning true means handled.
    std::function<bool(const PreparePtr&)> intercept_prepare;

    void start();
    void handle(ReplicaId from, const Message& m);
    void on_timer(const TimerId& id);
    // Re-evaluate leader proposals and deferred votes after local state changed.
    void poll();
    void garbage_collect(SlotNum finalized);

    // ---- individual protocol steps (also exercised directly by tests) ----
    PreparePtr try_propose(SlotNum s);
    PrepareOutcome handle_prepare(ReplicaId from, const PreparePtr& p);
    VoteOutcome collect_prep_votes(const PrepVote& v);
    std::optional<ConfirmAck> handle_confirm(const Confirm& c);
    CommitQCPtr collect_confirm_acks(const ConfirmAck& a);
    TimeoutPtr on_timer_expiry(SlotNum s);
    TimeoutOutcome handle_timeout(ReplicaId from, const TimeoutPtr& t);
    bool learn_commit(const CommitQCPtr& qc);
    void adopt_tc(const TimeoutCertPtr& tc);

    bool committed(SlotNum s) const { return s == 0 || commit_log_.count(s) != 0; }
    CommitQCPtr commit_of(SlotNum s) const;
    const SlotInstance* instance(SlotNum s) const;
    SlotInstance& inst(SlotNum s);
    const ConsensusConfig& config() const { return cfg_; }
    const Validator& validator() const { return val_; }
    ReplicaId self() const { return self_; }
    size_t active_commit_qcs() const { return commits_.size(); }
    SlotNum highest_committed() const { return commit_log_.empty() ? 0 : commit_log_.rbegin()->first; }
    std::vector<TipRef> local_tips(bool for_view0) const;
    SignedCutPtr sign_cut(SlotNum s, ViewNum v, CutPtr cut) const;

private:
    void activate(SlotNum s);
    void maybe_activate(SlotNum s);
    void record_first_prepare(const SignedCutPtr& p);
    bool ticket_ready(SlotNum s) const;
    void arm_view_timer(SlotInstance& in);
    void enter_view(SlotInstance& in, ViewNum v);
    void replay_future(SlotInstance& in);
    void form_prepare_qc(SlotInstance& in, ViewNum v);
    void broadcast_commit(const CommitQCPtr& qc);
    void send_vote(const PrepVote& v);
    void check_catchup(SlotNum seen);
    bool buffer_future(SlotInstance& in, ReplicaId from, const Message& m);
    std::vector<TipRef> missing_payloads(const Cut& c) const;

    ReplicaId self_;
    QuorumConfig q_;
    const KeyRing* keys_;
    ConsensusConfig cfg_;
    DataLanes* lanes_;
    Outbox* out_;
    Observer* obs_;
    Validator val_;

    std::map<SlotNum, SlotInstance> slots_;
    std::map<SlotNum, SignedCutPtr> first_prepare_;
    std::map<SlotNum, CommitQCPtr> commits_;     // active; GC drops s-k
    std::map<SlotNum, CommitQCPtr> commit_log_;  // persisted, serves catch-up
    SlotNum finalized_ = 0;
    SlotNum max_seen_ = 0;
    bool catchup_armed_ = false;
    uint32_t catchup_peer_ = 0;
    CommitQCPtr genesis_commit_;
    SignedCutPtr genesis_prepare_;
};

}  // namespace autobahn
