#include "autobahn/messages.hpp"

#include <type_traits>

namespace autobahn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void encode_votes(Encoder& e, const std::vector<Authenticator>& votes) {
    e.u32(static_cast<uint32_t>(votes.size()));
    for (const auto& v : votes) e.auth(v);
}

void encode_opt_dig(Encoder& e, const std::optional<Digest>& d) {
    e.boolean(d.has_value());
    if (d) e.dig(*d);
}

}  // namespace

const char* message_kind(const Message& m) {
    static constexpr const char* kNames[] = {"proposal", "vote",        "poa",          "prepare",       "prep_vote",
                                             "confirm",  "confirm_ack", "commit",       "timeout",       "tc",
                                             "sync_req", "sync_reply",  "commit_req",   "commit_reply"};
    static_assert(std::variant_size_v<Message> == std::size(kNames));
    return kNames[m.index()];
}

MsgClass message_class(const Message& m) {
    switch (m.index()) {
        case 0:
        case 1:
        case 2:
            return MsgClass::Data;
        case 10:
        case 11:
            return MsgClass::Sync;
        default:
            return MsgClass::Consensus;
    }
}

// Layouts (fields in order):
//   Tx            u64 id, u32 size
//   PoA           u32 lane, u64 pos, dig, u32 count, count x (u32 signer, dig tag)
//   DataProposal  u32 lane, u64 pos, u32 count, count x Tx, opt parent, opt PoA, auth
//   TipRef        u32 lane, u64 pos, dig, opt PoA
//   Cut           u64 slot, u32 n, n x TipRef
//   SignedCut     u64 slot, u64 view, Cut, auth
//   PrepareQC     u64 slot, u64 view, dig, votes
//   CommitQC      u64 slot, u64 view, dig, u8 kind, votes
//   TimeoutMsg    u64 slot, u64 view, opt PrepareQC, opt SignedCut, auth
// A message is a u8 variant tag followed by its body.

void encode(Encoder& e, const Tx& tx) { e.u64(tx.id).u32(tx.size); }

void encode(Encoder& e, const ProofOfAvailability& poa) {
    e.u32(poa.lane).u64(poa.pos).dig(poa.dig);
    encode_votes(e, poa.votes);
}

void encode(Encoder& e, const DataProposal& p) {
    e.u32(p.lane).u64(p.pos).u32(static_cast<uint32_t>(p.batch.size()));
    for (const auto& tx : p.batch) encode(e, tx);
    encode_opt_dig(e, p.parent);
    e.boolean(p.parent_cert != nullptr);
    if (p.parent_cert) encode(e, *p.parent_cert);
    e.auth(p.author_sig);
}

void encode(Encoder& e, const TipRef& t) {
    e.u32(t.lane).u64(t.pos).dig(t.dig).boolean(t.cert != nullptr);
    if (t.cert) encode(e, *t.cert);
}

void encode(Encoder& e, const Cut& c) {
    e.u64(c.slot).u32(static_cast<uint32_t>(c.tips.size()));
    for (const auto& t : c.tips) encode(e, t);
}

void encode(Encoder& e, const SignedCut& p) {
    e.u64(p.slot).u64(p.view);
    encode(e, *p.cut);
    e.auth(p.sig);
}

void encode(Encoder& e, const PrepareQC& qc) {
    e.u64(qc.slot).u64(qc.view).dig(qc.dig);
    encode_votes(e, qc.votes);
}

void encode(Encoder& e, const CommitQC& qc) {
    e.u64(qc.slot).u64(qc.view).dig(qc.dig).u8(static_cast<uint8_t>(qc.kind));
    encode_votes(e, qc.votes);
}

void encode(Encoder& e, const TimeoutMsg& t) {
    e.u64(t.slot).u64(t.view).boolean(t.high_qc != nullptr);
    if (t.high_qc) encode(e, *t.high_qc);
    e.boolean(t.high_prop != nullptr);
    if (t.high_prop) encode(e, *t.high_prop);
    e.auth(t.sig);
}

void encode(Encoder& e, const TimeoutCert& tc) {
    e.u64(tc.slot).u64(tc.view).u32(static_cast<uint32_t>(tc.timeouts.size()));
    for (const auto& t : tc.timeouts) encode(e, *t);
}

void encode(Encoder& e, const Ticket& t) {
    e.u8(static_cast<uint8_t>(t.kind));
    e.boolean(t.commit != nullptr);
    if (t.commit) encode(e, *t.commit);
    e.boolean(t.tc != nullptr);
    if (t.tc) encode(e, *t.tc);
    e.boolean(t.prev != nullptr);
    if (t.prev) encode(e, *t.prev);
}

void encode(Encoder& e, const Message& m) {
    e.u8(static_cast<uint8_t>(m.index()));
    std::visit(overloaded{
                   [&](const ProposalPtr& p) { encode(e, *p); },
                   [&](const Vote& v) { e.u32(v.lane).u64(v.pos).dig(v.dig).auth(v.sig); },
                   [&](const PoAMsg& p) { encode(e, *p.poa); },
                   [&](const PreparePtr& p) {
                       encode(e, *p->p);
                       encode(e, p->ticket);
                   },
                   [&](const PrepVote& v) { e.u64(v.slot).u64(v.view).dig(v.dig).auth(v.sig); },
                   [&](const Confirm& c) { encode(e, *c.qc); },
                   [&](const ConfirmAck& a) { e.u64(a.slot).u64(a.view).dig(a.dig).auth(a.sig); },
                   [&](const CommitMsg& c) { encode(e, *c.qc); },
                   [&](const TimeoutPtr& t) { encode(e, *t); },
                   [&](const TimeoutCertMsg& t) { encode(e, *t.tc); },
                   [&](const SyncRequest& r) { e.u64(r.req_id).u32(r.lane).u64(r.from).u64(r.to).dig(r.tip); },
                   [&](const SyncReply& r) {
                       e.u64(r.req_id).u32(r.lane).u64(r.from).u64(r.to).dig(r.tip).boolean(r.servable);
                       e.u32(static_cast<uint32_t>(r.chain.size()));
                       for (const auto& p : r.chain) encode(e, *p);
                   },
                   [&](const CommitRequest& r) { e.u64(r.from).u64(r.to); },
                   [&](const CommitReply& r) {
                       e.u32(static_cast<uint32_t>(r.qcs.size()));
                       for (const auto& q : r.qcs) encode(e, *q);
                   },
               },
               m);
}

std::vector<uint8_t> encode_message(const Message& m) {
    Encoder e;
    encode(e, m);
    return e.data();
}

Digest message_digest(const Message& m) {
    Encoder e;
    encode(e, m);
    return e.finish();
}

Digest proposal_payload(ReplicaId lane, LanePos pos, const std::vector<Tx>& batch, const std::optional<Digest>& parent) {
    Encoder e;
    e.str("car").u32(lane).u64(pos).u32(static_cast<uint32_t>(batch.size()));
    for (const auto& tx : batch) encode(e, tx);
    encode_opt_dig(e, parent);
    return e.finish();
}

Digest car_vote_payload(ReplicaId lane, LanePos pos, const Digest& dig) {
    return Encoder().str("car-vote").u32(lane).u64(pos).dig(dig).finish();
}

Digest cut_digest(SlotNum slot, const std::vector<TipRef>& tips) {
    Encoder e;
    e.str("cut").u64(slot).u32(static_cast<uint32_t>(tips.size()));
    for (const auto& t : tips) e.u32(t.lane).u64(t.pos).dig(t.dig);
    return e.finish();
}

Digest prepare_payload(SlotNum slot, ViewNum view, const Digest& cut_dig) {
    return Encoder().str("prepare").u64(slot).u64(view).dig(cut_dig).finish();
}

Digest prep_vote_payload(SlotNum slot, ViewNum view, const Digest& dig) {
    return Encoder().str("prep-vote").u64(slot).u64(view).dig(dig).finish();
}

Digest confirm_ack_payload(SlotNum slot, ViewNum view, const Digest& dig) {
    return Encoder().str("confirm-ack").u64(slot).u64(view).dig(dig).finish();
}

Digest timeout_payload(const TimeoutMsg& t) {
    Encoder e;
    e.str("timeout").u64(t.slot).u64(t.view);
    e.boolean(t.high_qc != nullptr);
    if (t.high_qc) e.u64(t.high_qc->view).dig(t.high_qc->dig);
    e.boolean(t.high_prop != nullptr);
    if (t.high_prop) e.u64(t.high_prop->view).dig(t.high_prop->cut->dig);
    return e.finish();
}

CutPtr make_cut(SlotNum slot, std::vector<TipRef> tips) {
    auto c = std::make_shared<Cut>();
    c->slot = slot;
    c->tips = std::move(tips);
    c->dig = cut_digest(slot, c->tips);
    return c;
}

CutPtr genesis_cut(uint32_t n) {
    std::vector<TipRef> tips(n);
    for (uint32_t l = 0; l < n; ++l) tips[l].lane = l;
    return make_cut(0, std::move(tips));
}

CommitQCPtr genesis_commit(uint32_t n) {
    auto qc = std::make_shared<CommitQC>();
    qc->cut = genesis_cut(n);
    qc->dig = qc->cut->dig;
    qc->kind = CommitKind::Genesis;
    return qc;
}

SignedCutPtr genesis_prepare(uint32_t n) {
    auto p = std::make_shared<SignedCut>();
    p->cut = genesis_cut(n);
    return p;
}

}  // namespace autobahn
