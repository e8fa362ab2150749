#include "autobahn/ordering.hpp"

#include <algorithm>

namespace autobahn {

const char* to_string(SyncVerdict v) {
    switch (v) {
        case SyncVerdict::accepted: return "accepted";
        case SyncVerdict::not_servable: return "not_servable";
        case SyncVerdict::wrong_count: return "wrong_count";
        case SyncVerdict::broken_chain: return "broken_chain";
        case SyncVerdict::digest_mismatch: return "digest_mismatch";
        case SyncVerdict::unexpected: return "unexpected";
    }
    return "?";
}

SyncVerdict validate_sync_reply(const SyncRequest& req, const SyncReply& rep, const DataLanes& lanes) {
    if (rep.req_id != req.req_id || rep.lane != req.lane || rep.from != req.from || rep.to != req.to ||
        rep.tip != req.tip)
        return SyncVerdict::unexpected;
    if (!rep.servable) return SyncVerdict::not_servable;
    if (req.to < req.from || rep.chain.size() != req.to - req.from + 1) return SyncVerdict::wrong_count;
    for (size_t i = 0; i < rep.chain.size(); ++i) {
        const auto& p = rep.chain[i];
        if (!p || p->lane != req.lane || p->pos != req.from + i || !lanes.verify_proposal(*p))
            return SyncVerdict::broken_chain;
        if (i > 0 && (!p->parent || *p->parent != rep.chain[i - 1]->dig)) return SyncVerdict::broken_chain;
    }
    if (rep.chain.back()->dig != req.tip) return SyncVerdict::digest_mismatch;
    return SyncVerdict::accepted;
}

std::vector<LogEntry> zip_lanes(SlotNum slot, const std::vector<std::vector<ProposalPtr>>& per_lane) {
    std::vector<LogEntry> out;
    size_t longest = 0;
    for (const auto& v : per_lane) longest = std::max(longest, v.size());
    for (size_t i = 0; i < longest; ++i)
        for (ReplicaId l = 0; l < per_lane.size(); ++l)
            if (i < per_lane[l].size()) {
                const auto& p = per_lane[l][i];
                out.push_back(LogEntry{slot, l, p->pos, p});
            }
    return out;
}

Ordering::Ordering(ReplicaId self, QuorumConfig q, DataLanes* lanes, Outbox* out, Observer* obs, OrderingConfig cfg)
    : self_(self), q_(q), lanes_(lanes), out_(out), obs_(obs), cfg_(cfg) {}

void Ordering::on_commit(const CommitQCPtr& qc) {
    if (qc->slot <= finalized_) return;
    pending_.try_emplace(qc->slot, PendingCommit{qc->slot, qc->cut});
}

void Ordering::prefetch(const Cut& cut) {
    for (const auto& t : cut.tips)
        if (t.pos > 0 && t.cert) wants_[t.lane].push_back(Want{t.pos, t.dig, t.cert, std::nullopt});
}

void Ordering::fetch_tip(const TipRef& tip, ReplicaId hint) {
    if (tip.pos > 0) wants_[tip.lane].push_back(Want{tip.pos, tip.dig, tip.cert, hint});
}

std::optional<std::pair<LanePos, Digest>> Ordering::first_missing(ReplicaId lane, LanePos pos,
                                                                   const Digest& tip) const {
    LanePos lc = lanes_->lane(lane).last_commit;
    Digest cur = tip;
    for (LanePos p = pos; p > lc; --p) {
        auto prop = lanes_->find(cur);
        if (!prop || prop->pos != p) return std::make_pair(p, cur);
        if (p == lc + 1 || !prop->parent) break;
        cur = *prop->parent;
    }
    return std::nullopt;
}

bool Ordering::covered(ReplicaId lane, LanePos from, LanePos to) const {
    for (const auto& [_, o] : syncs_)
        if (o.req.lane == lane && o.req.from <= from && o.req.to >= to) return true;
    return false;
}

std::vector<ReplicaId> Ordering::targets_for(ReplicaId lane, const PoAPtr& cert, std::optional<ReplicaId> hint) const {
    std::vector<ReplicaId> order;
    auto add = [&](ReplicaId r) {
        if (r != self_ && std::find(order.begin(), order.end(), r) == order.end()) order.push_back(r);
    };
    if (hint) add(*hint);
    if (cert) {
        std::vector<ReplicaId> signers;
        for (const auto& a : cert->votes) signers.push_back(a.signer);
        std::sort(signers.begin(), signers.end());
        for (auto r : signers) add(r);
    }
    add(lane);
    for (ReplicaId r = 0; r < q_.n; ++r) add(r);
    return order;
}

void Ordering::start_sync(ReplicaId lane, LanePos from, LanePos to, const Digest& dig, std::vector<ReplicaId> targets) {
    Outstanding o;
    o.req = SyncRequest{next_req_++, lane, from, to, dig};
    o.targets = std::move(targets);
    o.rec.lane = lane;
    o.rec.from = from;
    o.rec.to = to;
    o.rec.started = out_->now();
    auto& ref = syncs_.emplace(o.req.req_id, std::move(o)).first->second;
    probe(ref);
}

void Ordering::probe(Outstanding& o) {
    if (o.targets.empty()) return;
    o.asked = o.targets[o.next % o.targets.size()];
    ++o.next;
    out_->send(o.asked, o.req);
    out_->set_timer(TimerId{TimerId::Sync, o.req.req_id, 0}, cfg_.sync_timeout);
}

void Ordering::schedule_syncs() {
    for (ReplicaId l = 0; l < q_.n; ++l) {
        LanePos lc = lanes_->lane(l).last_commit;
        std::vector<Want> cands;
        for (const auto& [_, pc] : pending_) {
            const auto& t = pc.cut->tips[l];
            if (t.pos > lc) cands.push_back(Want{t.pos, t.dig, t.cert, std::nullopt});
        }
        if (auto w = wants_.find(l); w != wants_.end()) {
            auto& v = w->second;
            v.erase(std::remove_if(v.begin(), v.end(),
                                   [&](const Want& x) { return x.pos <= lc || !first_missing(l, x.pos, x.dig); }),
                    v.end());
            cands.insert(cands.end(), v.begin(), v.end());
            if (v.empty()) wants_.erase(w);
        }
        if (cands.empty()) continue;
        std::stable_sort(cands.begin(), cands.end(), [](const Want& a, const Want& b) { return a.pos > b.pos; });
        for (const auto& c : cands) {
            auto m = first_missing(l, c.pos, c.dig);
            if (!m || covered(l, lc + 1, m->first)) continue;
            start_sync(l, lc + 1, m->first, m->second, targets_for(l, c.cert, c.hint));
        }
    }
}

SyncReply Ordering::handle_sync_request(ReplicaId from, const SyncRequest& req) {
    SyncReply rep{req.req_id, req.lane, req.from, req.to, req.tip, false, {}};
    bool refuse = req.lane >= q_.n || (refuse_sync && refuse_sync(req.lane));
    if (!refuse && req.from >= 1 && req.to >= req.from) {
        rep.chain = lanes_->chain(req.tip, req.to, req.from);
        rep.servable = !rep.chain.empty();
    }
    if (from != self_) out_->send(from, rep);
    return rep;
}

SyncVerdict Ordering::handle_sync_reply(ReplicaId from, const SyncReply& rep) {
    auto it = syncs_.find(rep.req_id);
    if (it == syncs_.end()) return SyncVerdict::unexpected;
    auto& o = it->second;
    auto verdict = validate_sync_reply(o.req, rep, *lanes_);
    if (verdict == SyncVerdict::unexpected) return verdict;
    if (verdict == SyncVerdict::accepted) {
        for (const auto& p : rep.chain) lanes_->store(p);
        o.rec.exchanges++;
        o.rec.finished = out_->now();
        out_->cancel_timer(TimerId{TimerId::Sync, o.req.req_id, 0});
        records_.push_back(o.rec);
        if (obs_) obs_->sync_done(self_, o.rec);
        syncs_.erase(it);
        return verdict;
    }
    if (verdict == SyncVerdict::not_servable)
        o.rec.not_servable++;
    else
        o.rec.rejected++;
    if (from == o.asked) {
        out_->cancel_timer(TimerId{TimerId::Sync, o.req.req_id, 0});
        probe(o);
    }
    return verdict;
}

void Ordering::on_timer(const TimerId& id) {
    if (id.kind != TimerId::Sync) return;
    auto it = syncs_.find(id.a);
    if (it == syncs_.end()) return;
    it->second.rec.timeouts++;
    probe(it->second);
}

size_t Ordering::try_finalize() {
    size_t done = 0;
    for (auto it = pending_.find(finalized_ + 1); it != pending_.end(); it = pending_.find(finalized_ + 1)) {
        if (!finalize_one(it->second)) break;
        pending_.erase(it);
        ++done;
    }
    return done;
}

bool Ordering::finalize_one(const PendingCommit& pc) {
    std::vector<std::vector<ProposalPtr>> per_lane(q_.n);
    for (ReplicaId l = 0; l < q_.n; ++l) {
        const auto& t = pc.cut->tips[l];
        LanePos lc = lanes_->lane(l).last_commit;
        if (t.pos <= lc) continue;  // stale tip from a concurrent slot
        per_lane[l] = lanes_->chain(t.dig, t.pos, lc + 1);
        if (per_lane[l].empty()) return false;
    }
    auto entries = zip_lanes(pc.slot, per_lane);
    for (const auto& e : entries) {
        lanes_->mark_committed(e.prop);
        log_.push_back(e);
    }
    finalized_ = pc.slot;
    for (ReplicaId l = 0; l < q_.n; ++l) lanes_->gc_forks(l);
    if (obs_) obs_->finalized(self_, entries);
    if (on_finalized) on_finalized(pc.slot);
    for (ReplicaId l = 0; l < q_.n; ++l)
        for (const auto& v : lanes_->adopt_committed(l)) {
            if (obs_) obs_->car_voted(self_, v);
            out_->send(v.lane, v);
        }
    return true;
}

}  // namespace autobahn
