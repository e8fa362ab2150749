#include "autobahn/replica.hpp"

namespace autobahn {

const char* to_string(ByzMode m) {
    switch (m) {
        case ByzMode::None: return "none";
        case ByzMode::Equivocate: return "equivocate";
        case ByzMode::WithholdData: return "withhold_data";
        case ByzMode::LeaderTipAbuse: return "leader_tip_abuse";
    }
    return "?";
}

namespace {
ConsensusConfig adjust(ConsensusConfig c, ByzMode m) {
    if (m == ByzMode::Equivocate) c.mutate_double_vote = true;
    return c;
}
}  // namespace

Replica::Replica(ReplicaId id, QuorumConfig q, const KeyRing* keys, ReplicaConfig cfg, Outbox* out, Observer* obs)
    : id_(id),
      q_(q),
      keys_(keys),
      cfg_(cfg),
      out_(out),
      obs_(obs),
      lanes_(id, q, keys, cfg.lane),
      consensus_(id, q, keys, adjust(cfg.consensus, cfg.byz), &lanes_, out, obs),
      ordering_(id, q, &lanes_, out, obs, cfg.ordering) {
    consensus_.on_committed = [this](const CommitQCPtr& qc) { ordering_.on_commit(qc); };
    consensus_.on_voted_cut = [this](const Cut& c) { ordering_.prefetch(c); };
    consensus_.fetch_tip = [this](const TipRef& t, ReplicaId leader) { ordering_.fetch_tip(t, leader); };
    consensus_.intercept_prepare = [this](const PreparePtr& p) { return send_prepare(p); };
    ordering_.on_finalized = [this](SlotNum s) { consensus_.garbage_collect(s); };
    if (cfg_.byz == ByzMode::LeaderTipAbuse)
        ordering_.refuse_sync = [this](ReplicaId lane) { return lane == id_; };
}

void Replica::start() {
    consensus_.start();
    after_event();
}

std::vector<ReplicaId> Replica::others() const {
    std::vector<ReplicaId> v;
    for (ReplicaId r = 0; r < q_.n; ++r)
        if (r != id_) v.push_back(r);
    return v;
}

void Replica::cast_vote(const Vote& v) {
    if (obs_) obs_->car_voted(id_, v);
    out_->send(v.lane, v);
}

void Replica::deliver(ReplicaId from, const Message& m) {
    if (auto* p = std::get_if<ProposalPtr>(&m)) {
        std::vector<Vote> replayed;
        auto out = lanes_.handle_proposal(*p, &replayed);
        if (auto* v = std::get_if<Vote>(&out)) cast_vote(*v);
        for (const auto& v : replayed) cast_vote(v);
    } else if (auto* v = std::get_if<Vote>(&m)) {
        if (auto poa = lanes_.handle_vote(*v)) {
            if (obs_) obs_->poa_accepted(id_, *poa, true);
            if (cfg_.standalone_poa) out_->broadcast(PoAMsg{poa});
        }
    } else if (auto* pm = std::get_if<PoAMsg>(&m)) {
        if (pm->poa && lanes_.verify_poa(*pm->poa) && lanes_.learn_poa(pm->poa) && obs_)
            obs_->poa_accepted(id_, *pm->poa, true);
    } else if (auto* rq = std::get_if<SyncRequest>(&m)) {
        ordering_.handle_sync_request(from, *rq);
    } else if (auto* rp = std::get_if<SyncReply>(&m)) {
        ordering_.handle_sync_reply(from, *rp);
    } else {
        consensus_.handle(from, m);
    }
}

void Replica::on_timer(const TimerId& id) {
    if (id.kind == TimerId::Sync)
        ordering_.on_timer(id);
    else
        consensus_.on_timer(id);
}

void Replica::after_event() {
    propose_car();
    consensus_.poll();
    ordering_.try_finalize();
    ordering_.schedule_syncs();
}

void Replica::propose_car() {
    if (queue_.empty() || !lanes_.can_propose()) return;
    std::vector<Tx> batch;
    while (!queue_.empty() && batch.size() < cfg_.lane.batch_cap) {
        batch.push_back(queue_.front());
        queue_.pop_front();
    }
    auto p = lanes_.create_proposal(std::move(batch));
    own_cars_.push_back(p);
    send_car(p);
}

void Replica::send_car(const ProposalPtr& p) {
    auto peers = others();
    switch (cfg_.byz) {
        case ByzMode::None:
            out_->broadcast(p);
            return;
        case ByzMode::Equivocate: {
            // A sibling with forged transactions goes to the upper half of the peers.
            std::vector<Tx> fake;
            for (const auto& tx : p->batch) fake.push_back(Tx{(uint64_t{1} << 63) | (uint64_t(id_) << 48) | forged_++, tx.size});
            if (fake.empty()) fake.push_back(Tx{(uint64_t{1} << 63) | (uint64_t(id_) << 48) | forged_++, 1});
            auto sib = lanes_.create_sibling(std::move(fake));
            size_t half = peers.size() / 2;
            out_->send(id_, p);
            for (size_t i = 0; i < peers.size(); ++i) out_->send(peers[i], i < half ? p : sib);
            return;
        }
        case ByzMode::WithholdData:
            out_->send(id_, p);
            for (size_t i = 0; i < q_.f && i < peers.size(); ++i) out_->send(peers[i], p);
            return;
        case ByzMode::LeaderTipAbuse:
            out_->send(id_, p);
            return;
    }
}

bool Replica::send_prepare(const PreparePtr& p) {
    if (cfg_.byz != ByzMode::Equivocate) return false;
    // Alternate cut: one lane rolled back to genesis. Lower half (and self) get the
    // original first, the upper half only the alternate; everyone then also sees the
    // alternate, which correct replicas must refuse as a second proposal for the view.
    const Cut& cut = *p->p->cut;
    auto tips = cut.tips;
    ReplicaId victim = (id_ + 1) % q_.n;
    for (ReplicaId l = 0; l < q_.n; ++l)
        if (tips[(id_ + 1 + l) % q_.n].pos > 0) {
            victim = (id_ + 1 + l) % q_.n;
            break;
        }
    tips[victim] = TipRef{victim, 0, Digest{}, nullptr};
    auto alt_cut = make_cut(cut.slot, std::move(tips));
    auto alt = std::make_shared<Prepare>(Prepare{consensus_.sign_cut(p->p->slot, p->p->view, alt_cut), p->ticket});
    auto peers = others();
    size_t half = peers.size() / 2;
    out_->send(id_, p);
    for (size_t i = 0; i < half; ++i) out_->send(peers[i], p);
    for (const auto r : peers) out_->send(r, PreparePtr(alt));
    return true;
}

}  // namespace autobahn
