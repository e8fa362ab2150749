#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "autobahn/core.hpp"

namespace autobahn {

struct Tx {
    uint64_t id = 0;
    uint32_t size = 0;

    bool operator==(const Tx&) const = default;
};

// ---- data layer ----

struct ProofOfAvailability {
    ReplicaId lane = 0;
    LanePos pos = 0;
    Digest dig;
    std::vector<Authenticator> votes;
};
using PoAPtr = std::shared_ptr<const ProofOfAvailability>;

struct DataProposal {
    ReplicaId lane = 0;
    LanePos pos = 0;
    std::vector<Tx> batch;
    std::optional<Digest> parent;
    PoAPtr parent_cert;
    Authenticator author_sig;
    Digest dig;  // h(lane, pos, batch, parent); the signed value
};
using ProposalPtr = std::shared_ptr<const DataProposal>;

struct Vote {
    ReplicaId lane = 0;
    LanePos pos = 0;
    Digest dig;
    Authenticator sig;
};

struct PoAMsg {
    PoAPtr poa;
};

// ---- consensus layer ----

// A lane tip reference. pos 0 is the implicit genesis tip of every lane.
struct TipRef {
    ReplicaId lane = 0;
    LanePos pos = 0;
    Digest dig;
    PoAPtr cert;  // absent for genesis, leader tips and optimistic tips

    bool certified() const { return pos == 0 || cert != nullptr; }
};

struct Cut {
    SlotNum slot = 0;
    std::vector<TipRef> tips;  // exactly n, indexed by lane
    Digest dig;
};
using CutPtr = std::shared_ptr<const Cut>;

// The signed part of a Prepare: <s, v, h(cut)> from the leader of (s, v).
struct SignedCut {
    SlotNum slot = 0;
    ViewNum view = 0;
    CutPtr cut;
    Authenticator sig;
};
using SignedCutPtr = std::shared_ptr<const SignedCut>;

struct PrepareQC {
    SlotNum slot = 0;
    ViewNum view = 0;
    Digest dig;
    std::vector<Authenticator> votes;
    CutPtr cut;
};
using PrepareQCPtr = std::shared_ptr<const PrepareQC>;

enum class CommitKind : uint8_t { Genesis = 0, Fast = 1, Slow = 2 };

struct CommitQC {
    SlotNum slot = 0;
    ViewNum view = 0;
    Digest dig;
    CommitKind kind = CommitKind::Genesis;
    std::vector<Authenticator> votes;  // n Prep-Votes (fast) or 2f+1 Confirm-Acks (slow)
    CutPtr cut;
};
using CommitQCPtr = std::shared_ptr<const CommitQC>;

struct TimeoutMsg {
    SlotNum slot = 0;
    ViewNum view = 0;
    PrepareQCPtr high_qc;
    SignedCutPtr high_prop;
    Authenticator sig;
};
using TimeoutPtr = std::shared_ptr<const TimeoutMsg>;

struct TimeoutCert {
    SlotNum slot = 0;
    ViewNum view = 0;
    std::vector<TimeoutPtr> timeouts;
};
using TimeoutCertPtr = std::shared_ptr<const TimeoutCert>;

struct Ticket {
    enum class Kind : uint8_t { Commit = 0, Timeout = 1, Parallel = 2 };
    Kind kind = Kind::Commit;
    CommitQCPtr commit;  // CommitQC_{s-1} (sequential) or CommitQC_{s-k} (parallel)
    TimeoutCertPtr tc;   // TC_{s,v-1}
    SignedCutPtr prev;   // first observed Prepare_{s-1} (parallel)
};

struct Prepare {
    SignedCutPtr p;
    Ticket ticket;
};
using PreparePtr = std::shared_ptr<const Prepare>;

struct PrepVote {
    SlotNum slot = 0;
    ViewNum view = 0;
    Digest dig;
    Authenticator sig;
};

struct Confirm {
    PrepareQCPtr qc;
};

struct ConfirmAck {
    SlotNum slot = 0;
    ViewNum view = 0;
    Digest dig;
    Authenticator sig;
};

struct CommitMsg {
    CommitQCPtr qc;
};

struct TimeoutCertMsg {
    TimeoutCertPtr tc;
};

// ---- synchronization ----

struct SyncRequest {
    uint64_t req_id = 0;
    ReplicaId lane = 0;
    LanePos from = 0;
    LanePos to = 0;
    Digest tip;
};

struct SyncReply {
    uint64_t req_id = 0;
    ReplicaId lane = 0;
    LanePos from = 0;
    LanePos to = 0;
    Digest tip;
    bool servable = false;
    std::vector<ProposalPtr> chain;  // oldest first
};

// Catch-up for CommitQCs a replica missed (e.g. behind a lossy link).
struct CommitRequest {
    SlotNum from = 0;
    SlotNum to = 0;
};

struct CommitReply {
    std::vector<CommitQCPtr> qcs;
};

using Message = std::variant<ProposalPtr, Vote, PoAMsg, PreparePtr, PrepVote, Confirm, ConfirmAck, CommitMsg,
                             TimeoutPtr, TimeoutCertMsg, SyncRequest, SyncReply, CommitRequest, CommitReply>;

enum class MsgClass { Data, Consensus, Sync };

const char* message_kind(const Message& m);
MsgClass message_class(const Message& m);

// ---- canonical encodings and signing payloads ----

void encode(Encoder& e, const Tx& tx);
void encode(Encoder& e, const ProofOfAvailability& poa);
void encode(Encoder& e, const DataProposal& p);
void encode(Encoder& e, const TipRef& t);
void encode(Encoder& e, const Cut& c);
void encode(Encoder& e, const SignedCut& p);
void encode(Encoder& e, const PrepareQC& qc);
void encode(Encoder& e, const CommitQC& qc);
void encode(Encoder& e, const TimeoutMsg& t);
void encode(Encoder& e, const TimeoutCert& tc);
void encode(Encoder& e, const Ticket& t);
void encode(Encoder& e, const Message& m);

std::vector<uint8_t> encode_message(const Message& m);
Digest message_digest(const Message& m);

Digest proposal_payload(ReplicaId lane, LanePos pos, const std::vector<Tx>& batch, const std::optional<Digest>& parent);
Digest car_vote_payload(ReplicaId lane, LanePos pos, const Digest& dig);
Digest cut_digest(SlotNum slot, const std::vector<TipRef>& tips);
Digest prepare_payload(SlotNum slot, ViewNum view, const Digest& cut_dig);
Digest prep_vote_payload(SlotNum slot, ViewNum view, const Digest& dig);
Digest confirm_ack_payload(SlotNum slot, ViewNum view, const Digest& dig);
Digest timeout_payload(const TimeoutMsg& t);

CutPtr make_cut(SlotNum slot, std::vector<TipRef> tips);
CutPtr genesis_cut(uint32_t n);
CommitQCPtr genesis_commit(uint32_t n);
SignedCutPtr genesis_prepare(uint32_t n);

}  // namespace autobahn
