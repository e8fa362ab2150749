#include "autobahn/data_lane.hpp"

#include <algorithm>
#include <set>

namespace autobahn {

const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::duplicate_position: return "duplicate_position";
        case RejectReason::bad_signature: return "bad_signature";
        case RejectReason::bad_parent_cert: return "bad_parent_cert";
        case RejectReason::malformed: return "malformed";
        case RejectReason::fork: return "fork";
        case RejectReason::buffer_full: return "buffer_full";
        case RejectReason::equivocation: return "equivocation";
    }
    return "?";
}

DataLanes::DataLanes(ReplicaId self, QuorumConfig q, const KeyRing* keys, LaneConfig cfg)
    : self_(self), q_(q), keys_(keys), cfg_(cfg), lanes_(q.n) {
    for (uint32_t l = 0; l < q.n; ++l) lanes_[l].lane = l;
}

bool DataLanes::can_propose() const {
    const auto& own = lanes_[self_];
    return !own.last_broadcast || own.last_broadcast->pos <= own.certified_pos();
}

ProposalPtr DataLanes::build(std::vector<Tx> batch, LanePos pos, std::optional<Digest> parent, PoAPtr parent_cert) {
    auto p = std::make_shared<DataProposal>();
    p->lane = self_;
    p->pos = pos;
    p->batch = std::move(batch);
    p->parent = parent;
    p->parent_cert = std::move(parent_cert);
    p->dig = proposal_payload(p->lane, p->pos, p->batch, p->parent);
    p->author_sig = keys_->sign(self_, p->dig);
    return p;
}

ProposalPtr DataLanes::create_proposal(std::vector<Tx> batch) {
    if (!can_propose()) throw LaneError("previous car is not certified yet");
    if (batch.size() > cfg_.batch_cap) throw LaneError("batch exceeds cap");
    auto& own = lanes_[self_];
    LanePos pos = own.certified_pos() + 1;
    std::optional<Digest> parent;
    PoAPtr cert;
    if (pos > 1) {
        cert = own.certs.rbegin()->second;
        parent = cert->dig;
    }
    auto p = build(std::move(batch), pos, parent, cert);
    own.last_broadcast = p;
    own.pending_votes.clear();
    own.outstanding_certified = false;
    return p;
}

ProposalPtr DataLanes::create_sibling(std::vector<Tx> batch) {
    auto& own = lanes_[self_];
    if (!own.last_broadcast) throw LaneError("no outstanding car");
    auto cur = own.last_broadcast;
    auto p = build(std::move(batch), cur->pos, cur->parent, cur->parent_cert);
    return p;
}

PoAPtr DataLanes::handle_vote(const Vote& v) {
    auto& own = lanes_[self_];
    if (v.lane != self_ || !own.last_broadcast || v.pos != own.last_broadcast->pos) return nullptr;
    if (own.outstanding_certified) return nullptr;
    if (v.sig.signer >= q_.n || !keys_->verify(v.sig, car_vote_payload(v.lane, v.pos, v.dig))) return nullptr;
    auto& votes = own.pending_votes[v.dig];
    if (!votes.emplace(v.sig.signer, v.sig).second) return nullptr;
    if (votes.size() != q_.poa) return nullptr;
    auto poa = std::make_shared<ProofOfAvailability>();
    poa->lane = v.lane;
    poa->pos = v.pos;
    poa->dig = v.dig;
    for (const auto& [_, a] : votes) poa->votes.push_back(a);
    own.outstanding_certified = true;
    learn_poa(poa);
    return poa;
}

bool DataLanes::verify_poa(const ProofOfAvailability& poa) const {
    if (poa.lane >= q_.n || poa.pos == 0 || poa.votes.size() < q_.poa) return false;
    std::set<ReplicaId> seen;
    Digest payload = car_vote_payload(poa.lane, poa.pos, poa.dig);
    for (const auto& a : poa.votes) {
        if (!seen.insert(a.signer).second) return false;
        if (!keys_->verify(a, payload)) return false;
    }
    return true;
}

bool DataLanes::verify_proposal(const DataProposal& p) const {
    if (p.author_sig.signer != p.lane) return false;
    if (proposal_payload(p.lane, p.pos, p.batch, p.parent) != p.dig) return false;
    return keys_->verify(p.author_sig, p.dig);
}

bool DataLanes::learn_poa(const PoAPtr& poa) {
    auto& ls = lanes_.at(poa->lane);
    return ls.certs.emplace(poa->pos, poa).second;
}

Vote DataLanes::make_vote(const DataProposal& p) const {
    return Vote{p.lane, p.pos, p.dig, keys_->sign(self_, car_vote_payload(p.lane, p.pos, p.dig))};
}

void DataLanes::insert(const ProposalPtr& p) {
    if (store_.emplace(p->dig, p).second) lanes_[p->lane].stored[p->pos].push_back(p->dig);
}

void DataLanes::store(const ProposalPtr& p) { insert(p); }

ProposalOutcome DataLanes::try_accept(LaneState& ls, const ProposalPtr& p) {
    if (p->pos <= ls.accepted_pos) return Rejected{RejectReason::duplicate_position};
    if (p->pos > ls.accepted_pos + 1) {
        if (ls.buffered >= cfg_.buffer_cap) return Rejected{RejectReason::buffer_full};
        auto& slot = ls.buffer[p->pos];
        for (const auto& q : slot)
            if (q->dig == p->dig) return Buffered{};
        slot.push_back(p);
        ++ls.buffered;
        return Buffered{};
    }
    if (p->pos > 1 && ls.accepted.at(p->pos - 1) != *p->parent) return Rejected{RejectReason::fork};
    // A sibling fetched earlier (an uncertified leader tip) already occupies this position.
    if (conflicts(TipRef{p->lane, p->pos, p->dig, nullptr})) return Rejected{RejectReason::equivocation};
    ls.accepted[p->pos] = p->dig;
    ls.accepted_pos = p->pos;
    insert(p);
    return make_vote(*p);
}

ProposalOutcome DataLanes::handle_proposal(const ProposalPtr& p, std::vector<Vote>* replayed) {
    if (p->lane >= q_.n || p->pos == 0 || (p->pos > 1) != p->parent.has_value() ||
        (p->pos > 1) != (p->parent_cert != nullptr) || p->batch.size() > cfg_.batch_cap)
        return Rejected{RejectReason::malformed};
    for (const auto& tx : p->batch)
        if (tx.size > cfg_.tx_size_cap) return Rejected{RejectReason::malformed};
    if (!verify_proposal(*p)) return Rejected{RejectReason::bad_signature};
    if (p->pos > 1) {
        const auto& c = *p->parent_cert;
        if (c.lane != p->lane || c.pos != p->pos - 1 || c.dig != *p->parent || !verify_poa(c))
            return Rejected{RejectReason::bad_parent_cert};
        learn_poa(p->parent_cert);
    }
    auto& ls = lanes_[p->lane];
    auto out = try_accept(ls, p);
    if (std::holds_alternative<Vote>(out)) {
        auto more = adopt_committed(p->lane);  // replays buffered successors
        if (replayed) replayed->insert(replayed->end(), more.begin(), more.end());
    }
    return out;
}

std::vector<Vote> DataLanes::adopt_committed(ReplicaId lane) {
    auto& ls = lanes_[lane];
    std::vector<Vote> votes;
    // Committed history overrides whatever this replica accepted at or below last_commit
    // (possibly a dead sibling). Positions above the old frontier were never voted, so
    // jumping the frontier forward cannot produce a second vote for any position.
    if (ls.last_commit > 0 && ls.accepted_pos <= ls.last_commit) {
        ls.accepted[ls.last_commit] = ls.committed.at(ls.last_commit);
        ls.accepted_pos = ls.last_commit;
    }
    for (;;) {
        LanePos next = ls.accepted_pos + 1;
        auto b = ls.buffer.find(next);
        if (b == ls.buffer.end()) break;
        auto cands = std::move(b->second);
        ls.buffered -= cands.size();
        ls.buffer.erase(b);
        bool advanced = false;
        for (const auto& p : cands) {
            auto out = try_accept(ls, p);
            if (auto* v = std::get_if<Vote>(&out)) {
                votes.push_back(*v);
                advanced = true;
                break;
            }
        }
        if (!advanced) break;
    }
    // Anything buffered at or below the frontier can never be voted.
    while (!ls.buffer.empty() && ls.buffer.begin()->first <= ls.accepted_pos) {
        ls.buffered -= ls.buffer.begin()->second.size();
        ls.buffer.erase(ls.buffer.begin());
    }
    return votes;
}

bool DataLanes::conflicts(const TipRef& t) const {
    const auto& ls = lanes_.at(t.lane);
    if (t.pos <= ls.last_commit) return false;
    auto it = ls.stored.find(t.pos);
    if (it == ls.stored.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(), [&](const Digest& d) { return d != t.dig; });
}

TipRef DataLanes::certified_tip(ReplicaId lane) const {
    const auto& ls = lanes_.at(lane);
    TipRef t;
    t.lane = lane;
    if (ls.certs.empty()) return t;
    const auto& c = ls.certs.rbegin()->second;
    t.pos = c->pos;
    t.dig = c->dig;
    t.cert = c;
    return t;
}

TipRef DataLanes::optimistic_tip(ReplicaId lane) const {
    const auto& ls = lanes_.at(lane);
    TipRef t = certified_tip(lane);
    if (lane == self_) {
        if (ls.last_broadcast && ls.last_broadcast->pos > t.pos)
            t = TipRef{lane, ls.last_broadcast->pos, ls.last_broadcast->dig, nullptr};
    } else if (ls.accepted_pos > t.pos) {
        t = TipRef{lane, ls.accepted_pos, ls.accepted.at(ls.accepted_pos), nullptr};
    }
    return t;
}

ProposalPtr DataLanes::find(const Digest& d) const {
    auto it = store_.find(d);
    return it == store_.end() ? nullptr : it->second;
}

std::vector<ProposalPtr> DataLanes::chain(const Digest& tip, LanePos tip_pos, LanePos from) const {
    std::vector<ProposalPtr> out;
    if (tip_pos < from) return out;
    out.reserve(tip_pos - from + 1);
    Digest cur = tip;
    for (LanePos pos = tip_pos;; --pos) {
        auto p = find(cur);
        if (!p || p->pos != pos) return {};
        out.push_back(p);
        if (pos == from) break;
        cur = *p->parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

void DataLanes::mark_committed(const ProposalPtr& p) {
    auto& ls = lanes_[p->lane];
    ls.committed[p->pos] = p->dig;
    if (p->pos > ls.last_commit) ls.last_commit = p->pos;
}

size_t DataLanes::gc_forks(ReplicaId lane) {
    auto& ls = lanes_[lane];
    size_t dropped = 0;
    for (auto it = ls.stored.begin(); it != ls.stored.end() && it->first <= ls.last_commit; ++it) {
        auto c = ls.committed.find(it->first);
        auto& digs = it->second;
        for (auto d = digs.begin(); d != digs.end();) {
            if (c != ls.committed.end() && *d == c->second) {
                ++d;
                continue;
            }
            // Positions skipped by a fork switch have no committed entry; their stored
            // proposals are abandoned too.
            store_.erase(*d);
            d = digs.erase(d);
            ++dropped;
        }
    }
    return dropped;
}

uint64_t DataLanes::unresolved_txs(ReplicaId lane, LanePos certified_floor) const {
    const auto& ls = lanes_.at(lane);
    LanePos floor = std::max({ls.certified_pos(), ls.last_commit, certified_floor});
    uint64_t txs = 0;
    for (auto it = ls.stored.upper_bound(floor); it != ls.stored.end(); ++it)
        for (const auto& d : it->second) {
            if (ls.committed.count(it->first) && ls.committed.at(it->first) == d) continue;
            txs += store_.at(d)->batch.size();
        }
    return txs;
}

}  // namespace autobahn
