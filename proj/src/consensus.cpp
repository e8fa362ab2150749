#include "autobahn/consensus.hpp"

#include <algorithm>

namespace autobahn {

ReplicaId leader_for(SlotNum slot, ViewNum view, const QuorumConfig& q, LeaderSchedule schedule) {
    uint64_t base = schedule == LeaderSchedule::Offset ? slot * q.f : slot;
    return static_cast<ReplicaId>((base + view) % q.n);
}

bool check_coverage(const std::vector<TipRef>& local, const std::vector<TipRef>& reference, uint32_t threshold) {
    uint32_t advanced = 0;
    for (size_t l = 0; l < local.size() && l < reference.size(); ++l)
        if (local[l].pos > reference[l].pos) ++advanced;
    return advanced >= threshold;
}

std::optional<Winner> winning_proposal(const TimeoutCert& tc, const QuorumConfig& q, bool mutated) {
    std::optional<Winner> a;
    for (const auto& t : tc.timeouts) {
        if (!t->high_qc) continue;
        if (!a || t->high_qc->view > a->view) a = Winner{t->high_qc->cut, t->high_qc->view, Winner::Source::HighQC};
    }
    // Group highProps by cut digest. A re-proposal of the same cut in a later view is the
    // same proposal, so its reports may be spread over several views. A group is ranked by
    // its (f+1)-th highest view: f Byzantine reports cannot lift the rank on their own.
    std::map<Digest, std::map<ReplicaId, ViewNum>> seen;
    std::map<Digest, CutPtr> cuts;
    for (const auto& t : tc.timeouts) {
        if (!t->high_prop) continue;
        const auto& d = t->high_prop->cut->dig;
        auto& v = seen[d][t->sig.signer];
        v = std::max(v, t->high_prop->view);
        cuts.emplace(d, t->high_prop->cut);
    }
    std::optional<Winner> b;
    for (const auto& [d, who] : seen) {
        if (who.size() < q.poa) continue;
        std::vector<ViewNum> views;
        for (const auto& [_, v] : who) views.push_back(v);
        std::sort(views.rbegin(), views.rend());
        ViewNum rank = views[q.poa - 1];
        if (!b || rank > b->view) b = Winner{cuts.at(d), rank, Winner::Source::HighProp};
    }
    if (a && b) return mutated ? (a->view > b->view ? a : b) : (a->view >= b->view ? a : b);
    return a ? a : b;
}

bool parallel_ticket_check(SlotNum slot, uint32_t k, const SignedCut* prev_prepare, const CommitQC* bound) {
    if (slot == 0 || k == 0) return false;
    if (!prev_prepare || prev_prepare->slot != slot - 1) return false;
    if (slot <= k) return true;  // CommitQC_{s-k} is the genesis certificate
    return bound && bound->slot == slot - k;
}

// ---------------------------------------------------------------------------

bool Validator::quorum_of(const std::vector<Authenticator>& votes, uint32_t need, const Digest& payload) const {
    std::set<ReplicaId> seen;
    for (const auto& a : votes) {
        if (a.signer >= q_.n || !seen.insert(a.signer).second) return false;
        if (!keys_->verify(a, payload)) return false;
    }
    return seen.size() >= need;
}

bool Validator::poa(const ProofOfAvailability& p) const {
    if (p.lane >= q_.n || p.pos == 0 || p.votes.size() < q_.poa) return false;
    return quorum_of(p.votes, q_.poa, car_vote_payload(p.lane, p.pos, p.dig));
}

bool Validator::cut_shape(const Cut& c, SlotNum slot) const {
    if (c.slot != slot || c.tips.size() != q_.n) return false;
    for (uint32_t l = 0; l < q_.n; ++l) {
        const auto& t = c.tips[l];
        if (t.lane != l) return false;
        if (t.pos == 0 && (t.dig != Digest{} || t.cert)) return false;
        if (t.cert && (t.cert->lane != l || t.cert->pos != t.pos || t.cert->dig != t.dig)) return false;
    }
    return cut_digest(slot, c.tips) == c.dig;
}

bool Validator::signed_cut(const SignedCut& p) const {
    if (!p.cut) return false;
    if (p.slot == 0) return p.view == 0 && cut_shape(*p.cut, 0) && p.cut->dig == genesis_cut(q_.n)->dig;
    if (!cut_shape(*p.cut, p.slot)) return false;
    if (p.sig.signer != leader_for(p.slot, p.view, q_, schedule_)) return false;
    return keys_->verify(p.sig, prepare_payload(p.slot, p.view, p.cut->dig));
}

bool Validator::prepare_qc(const PrepareQC& qc) const {
    if (!qc.cut || qc.cut->dig != qc.dig || !cut_shape(*qc.cut, qc.slot)) return false;
    return quorum_of(qc.votes, q_.consensus, prep_vote_payload(qc.slot, qc.view, qc.dig));
}

bool Validator::commit_qc(const CommitQC& qc) const {
    if (!qc.cut || qc.cut->dig != qc.dig) return false;
    switch (qc.kind) {
        case CommitKind::Genesis:
            return qc.slot == 0 && qc.dig == genesis_cut(q_.n)->dig;
        case CommitKind::Fast:
            return qc.slot > 0 && cut_shape(*qc.cut, qc.slot) &&
                   quorum_of(qc.votes, q_.fast, prep_vote_payload(qc.slot, qc.view, qc.dig));
        case CommitKind::Slow:
            return qc.slot > 0 && cut_shape(*qc.cut, qc.slot) &&
                   quorum_of(qc.votes, q_.consensus, confirm_ack_payload(qc.slot, qc.view, qc.dig));
    }
    return false;
}

bool Validator::timeout(const TimeoutMsg& t) const {
    if (t.sig.signer >= q_.n || !keys_->verify(t.sig, timeout_payload(t))) return false;
    if (t.high_qc && (t.high_qc->slot != t.slot || t.high_qc->view > t.view || !prepare_qc(*t.high_qc))) return false;
    if (t.high_prop && (t.high_prop->slot != t.slot || t.high_prop->view > t.view || !signed_cut(*t.high_prop)))
        return false;
    return true;
}

bool Validator::tc(const TimeoutCert& tc) const {
    std::set<ReplicaId> seen;
    for (const auto& t : tc.timeouts) {
        if (!t || t->slot != tc.slot || t->view != tc.view) return false;
        if (!seen.insert(t->sig.signer).second || !timeout(*t)) return false;
    }
    return seen.size() >= q_.consensus;
}

const char* to_string(PrepareError e) {
    switch (e) {
        case PrepareError::bad_signature: return "bad_signature";
        case PrepareError::wrong_leader: return "wrong_leader";
        case PrepareError::bad_ticket: return "bad_ticket";
        case PrepareError::bad_cut: return "bad_cut";
        case PrepareError::stale_view: return "stale_view";
        case PrepareError::already_voted: return "already_voted";
        case PrepareError::timed_out: return "timed_out";
        case PrepareError::committed: return "committed";
        case PrepareError::equivocation: return "equivocation";
    }
    return "?";
}

// ---------------------------------------------------------------------------

Consensus::Consensus(ReplicaId self, QuorumConfig q, const KeyRing* keys, ConsensusConfig cfg, DataLanes* lanes,
                     Outbox* out, Observer* obs)
    : self_(self),
      q_(q),
      keys_(keys),
      cfg_(cfg),
      lanes_(lanes),
      out_(out),
      obs_(obs),
      val_(q, keys, cfg.schedule),
      genesis_commit_(genesis_commit(q.n)),
      genesis_prepare_(genesis_prepare(q.n)) {
    if (cfg_.coverage == 0) cfg_.coverage = q.n - q.f;
    first_prepare_[0] = genesis_prepare_;
}

void Consensus::start() { maybe_activate(1); }

CommitQCPtr Consensus::commit_of(SlotNum s) const {
    if (s == 0) return genesis_commit_;
    auto it = commit_log_.find(s);
    return it == commit_log_.end() ? nullptr : it->second;
}

const SlotInstance* Consensus::instance(SlotNum s) const {
    auto it = slots_.find(s);
    return it == slots_.end() ? nullptr : &it->second;
}

SlotInstance& Consensus::inst(SlotNum s) {
    auto [it, fresh] = slots_.try_emplace(s);
    if (fresh) it->second.slot = s;
    return it->second;
}

bool Consensus::ticket_ready(SlotNum s) const {
    if (cfg_.mode == Mode::Sequential) return committed(s - 1);
    if (!first_prepare_.count(s - 1)) return false;
    return s <= cfg_.k || committed(s - cfg_.k);
}

void Consensus::maybe_activate(SlotNum s) {
    if (s == 0 || committed(s) || s <= finalized_) return;
    if (ticket_ready(s)) activate(s);
}

void Consensus::activate(SlotNum s) {
    auto& in = inst(s);
    if (in.started) return;
    in.started = true;
    max_seen_ = std::max(max_seen_, s);
    arm_view_timer(in);
    try_propose(s);
}

void Consensus::arm_view_timer(SlotInstance& in) {
    out_->set_timer(TimerId{TimerId::View, in.slot, 0}, cfg_.view_timer);
}

void Consensus::record_first_prepare(const SignedCutPtr& p) {
    if (first_prepare_.emplace(p->slot, p).second) maybe_activate(p->slot + 1);
}

std::vector<TipRef> Consensus::local_tips(bool for_view0) const {
    std::vector<TipRef> tips;
    tips.reserve(q_.n);
    for (ReplicaId l = 0; l < q_.n; ++l) {
        TipRef t = lanes_->certified_tip(l);
        if (for_view0 && (cfg_.optimistic_tips || (cfg_.leader_tips && l == self_))) t = lanes_->optimistic_tip(l);
        tips.push_back(std::move(t));
    }
    return tips;
}

SignedCutPtr Consensus::sign_cut(SlotNum s, ViewNum v, CutPtr cut) const {
    auto sc = std::make_shared<SignedCut>();
    sc->slot = s;
    sc->view = v;
    sc->sig = keys_->sign(self_, prepare_payload(s, v, cut->dig));
    sc->cut = std::move(cut);
    return sc;
}

PreparePtr Consensus::try_propose(SlotNum s) {
    if (committed(s)) return nullptr;
    auto& in = inst(s);
    ViewNum v = in.view;
    if (!in.started || leader_for(s, v, q_, cfg_.schedule) != self_) return nullptr;
    if (in.proposed.count(v) || in.timed_out.count(v)) return nullptr;

    Ticket ticket;
    CutPtr cut;
    if (v == 0) {
        const Cut* ref = nullptr;
        if (cfg_.mode == Mode::Sequential) {
            ticket.kind = Ticket::Kind::Commit;
            ticket.commit = commit_of(s - 1);
            if (!ticket.commit) return nullptr;
            ref = ticket.commit->cut.get();
        } else {
            auto prev = first_prepare_.find(s - 1);
            if (prev == first_prepare_.end()) return nullptr;
            ticket.kind = Ticket::Kind::Parallel;
            ticket.prev = prev->second;
            ticket.commit = s > cfg_.k ? commit_of(s - cfg_.k) : genesis_commit_;
            if (!ticket.commit) return nullptr;
            ref = prev->second->cut.get();
        }
        auto tips = local_tips(true);
        if (!check_coverage(tips, ref->tips, cfg_.coverage)) return nullptr;
        cut = make_cut(s, std::move(tips));
    } else {
        auto tc = in.tcs.find(v - 1);
        if (tc == in.tcs.end()) return nullptr;
        ticket.kind = Ticket::Kind::Timeout;
        ticket.tc = tc->second;
        auto w = winning_proposal(*tc->second, q_, cfg_.mutate_winner_rule);
        cut = w ? w->cut : make_cut(s, local_tips(false));
    }
    auto sc = sign_cut(s, v, std::move(cut));
    auto p = std::make_shared<Prepare>(Prepare{sc, std::move(ticket)});
    in.proposed.insert(v);
    in.my_prop[v] = sc;
    if (obs_) obs_->prepared(self_, *sc);
    if (!intercept_prepare || !intercept_prepare(p)) out_->broadcast(p);
    return p;
}

std::vector<TipRef> Consensus::missing_payloads(const Cut& c) const {
    std::vector<TipRef> missing;
    for (const auto& t : c.tips)
        if (t.pos > 0 && !t.cert && !lanes_->has(t.dig)) missing.push_back(t);
    return missing;
}

PrepareOutcome Consensus::handle_prepare(ReplicaId, const PreparePtr& p) {
    const SignedCut& sc = *p->p;
    SlotNum s = sc.slot;
    ViewNum v = sc.view;
    if (s == 0) return PrepareRejected{PrepareError::bad_ticket};
    if (committed(s)) return PrepareRejected{PrepareError::committed};
    if (!sc.cut || !val_.signed_cut(sc)) {
        bool leader_ok = sc.sig.signer == leader_for(s, v, q_, cfg_.schedule);
        return PrepareRejected{leader_ok ? PrepareError::bad_signature : PrepareError::wrong_leader};
    }

    const Ticket& tk = p->ticket;
    if (v == 0) {
        if (cfg_.mode == Mode::Sequential) {
            if (tk.kind != Ticket::Kind::Commit || !tk.commit || tk.commit->slot != s - 1 || !val_.commit_qc(*tk.commit))
                return PrepareRejected{PrepareError::bad_ticket};
            learn_commit(tk.commit);
        } else {
            if (tk.kind != Ticket::Kind::Parallel || !tk.prev || !val_.signed_cut(*tk.prev))
                return PrepareRejected{PrepareError::bad_ticket};
            const CommitQC* bound = tk.commit && val_.commit_qc(*tk.commit) ? tk.commit.get() : nullptr;
            if (!parallel_ticket_check(s, cfg_.k, tk.prev.get(), bound)) return PrepareRejected{PrepareError::bad_ticket};
            record_first_prepare(tk.prev);
            if (s > cfg_.k) learn_commit(tk.commit);
        }
    } else {
        if (tk.kind != Ticket::Kind::Timeout || !tk.tc || tk.tc->slot != s || tk.tc->view != v - 1 || !val_.tc(*tk.tc))
            return PrepareRejected{PrepareError::bad_ticket};
        adopt_tc(tk.tc);
    }
    if (committed(s)) return PrepareRejected{PrepareError::committed};
    record_first_prepare(p->p);

    auto& in = inst(s);
    if (v < in.view) return PrepareRejected{PrepareError::stale_view};
    if (v > in.view) {
        buffer_future(in, sc.sig.signer, p);
        return BufferedView{};
    }
    if (in.timed_out.count(v)) return PrepareRejected{PrepareError::timed_out};
    if (in.prep_voted.count(v) && !cfg_.mutate_double_vote) return PrepareRejected{PrepareError::already_voted};

    const Cut& cut = *sc.cut;
    ReplicaId leader = leader_for(s, v, q_, cfg_.schedule);
    bool reproposal = false;
    if (v > 0) {
        auto w = winning_proposal(*tk.tc, q_, cfg_.mutate_winner_rule);
        if (w) {
            if (w->cut->dig != cut.dig) return PrepareRejected{PrepareError::bad_ticket};
            reproposal = true;
        }
    }
    if (!reproposal) {
        for (const auto& t : cut.tips) {
            if (t.pos == 0) continue;
            if (t.cert) {
                if (!val_.poa(*t.cert)) return PrepareRejected{PrepareError::bad_cut};
                continue;
            }
            // A view-change leader without a winner proposes certified tips only.
            bool allowed = v == 0 && (cfg_.optimistic_tips || (cfg_.leader_tips && t.lane == leader));
            if (!allowed) return PrepareRejected{PrepareError::bad_cut};
            // Fetching a sibling of a car we already hold would store two uncertified cars
            // for one position; the lane's author equivocated, so decline instead.
            if (lanes_->conflicts(t)) return PrepareRejected{PrepareError::equivocation};
        }
        auto missing = missing_payloads(cut);
        if (!missing.empty()) {
            bool first = in.deferred != p;
            in.deferred = p;
            if (first && fetch_tip)
                for (const auto& t : missing) fetch_tip(t, leader);
            return Deferred{std::move(missing)};
        }
        for (const auto& t : cut.tips)
            if (t.cert) lanes_->learn_poa(t.cert);
    }

    in.prep_voted.insert(v);
    if (in.deferred == p) in.deferred = nullptr;
    if (!in.prop || v > in.prop->view) in.prop = p->p;
    PrepVote vote{s, v, cut.dig, keys_->sign(self_, prep_vote_payload(s, v, cut.dig))};
    if (obs_) obs_->prep_voted(self_, vote);
    if (on_voted_cut) on_voted_cut(cut);
    return vote;
}

VoteOutcome Consensus::collect_prep_votes(const PrepVote& v) {
    if (committed(v.slot)) return Pending{};
    auto it = slots_.find(v.slot);
    if (it == slots_.end()) return Pending{};
    auto& in = it->second;
    auto mp = in.my_prop.find(v.view);
    if (mp == in.my_prop.end() || mp->second->cut->dig != v.dig) return Pending{};
    if (v.sig.signer >= q_.n || !keys_->verify(v.sig, prep_vote_payload(v.slot, v.view, v.dig))) return Pending{};
    auto& votes = in.prep_votes[v.view];
    if (!votes.emplace(v.sig.signer, v.sig).second) return Pending{};
    size_t c = votes.size();

    if (cfg_.fast_path && c >= q_.fast) {
        auto qc = std::make_shared<CommitQC>();
        qc->slot = v.slot;
        qc->view = v.view;
        qc->dig = v.dig;
        qc->kind = CommitKind::Fast;
        qc->cut = mp->second->cut;
        for (const auto& [_, a] : votes) qc->votes.push_back(a);
        out_->cancel_timer(TimerId{TimerId::FastWait, v.slot, v.view});
        if (obs_) obs_->commit_qc(self_, *qc);
        learn_commit(qc);
        broadcast_commit(qc);
        return CommitQCPtr(qc);
    }
    if (c == q_.consensus && !in.my_qc.count(v.view)) {
        if (cfg_.fast_path && cfg_.fast_wait > 0 && c < q_.fast) {
            out_->set_timer(TimerId{TimerId::FastWait, v.slot, v.view}, cfg_.fast_wait);
            return FastWaitArmed{};
        }
        form_prepare_qc(in, v.view);
        return in.my_qc.at(v.view);
    }
    return Pending{};
}

void Consensus::form_prepare_qc(SlotInstance& in, ViewNum v) {
    auto qc = std::make_shared<PrepareQC>();
    qc->slot = in.slot;
    qc->view = v;
    qc->cut = in.my_prop.at(v)->cut;
    qc->dig = qc->cut->dig;
    for (const auto& [_, a] : in.prep_votes[v]) qc->votes.push_back(a);
    in.my_qc[v] = qc;
    if (obs_) obs_->prepare_qc(self_, *qc);
    out_->broadcast(Confirm{qc});
}

std::optional<ConfirmAck> Consensus::handle_confirm(const Confirm& c) {
    const auto& qc = c.qc;
    if (!qc || committed(qc->slot) || !val_.prepare_qc(*qc)) return std::nullopt;
    auto& in = inst(qc->slot);
    if (!in.conf || qc->view > in.conf->view) in.conf = qc;
    if (qc->view < in.view) return std::nullopt;
    if (qc->view > in.view) {
        buffer_future(in, qc->votes.front().signer, c);
        return std::nullopt;
    }
    if (in.timed_out.count(qc->view) || in.acked.count(qc->view)) return std::nullopt;
    in.acked.insert(qc->view);
    ConfirmAck ack{qc->slot, qc->view, qc->dig, keys_->sign(self_, confirm_ack_payload(qc->slot, qc->view, qc->dig))};
    if (obs_) obs_->confirm_acked(self_, ack);
    return ack;
}

CommitQCPtr Consensus::collect_confirm_acks(const ConfirmAck& a) {
    if (committed(a.slot)) return nullptr;
    auto it = slots_.find(a.slot);
    if (it == slots_.end()) return nullptr;
    auto& in = it->second;
    auto mq = in.my_qc.find(a.view);
    if (mq == in.my_qc.end() || mq->second->dig != a.dig) return nullptr;
    if (a.sig.signer >= q_.n || !keys_->verify(a.sig, confirm_ack_payload(a.slot, a.view, a.dig))) return nullptr;
    auto& acks = in.acks[a.view];
    if (!acks.emplace(a.sig.signer, a.sig).second || acks.size() != q_.consensus) return nullptr;
    auto qc = std::make_shared<CommitQC>();
    qc->slot = a.slot;
    qc->view = a.view;
    qc->dig = a.dig;
    qc->kind = CommitKind::Slow;
    qc->cut = mq->second->cut;
    for (const auto& [_, s] : acks) qc->votes.push_back(s);
    if (obs_) obs_->commit_qc(self_, *qc);
    learn_commit(qc);
    broadcast_commit(qc);
    return qc;
}

void Consensus::broadcast_commit(const CommitQCPtr& qc) {
    for (ReplicaId r = 0; r < q_.n; ++r)
        if (r != self_) out_->send(r, CommitMsg{qc});
}

bool Consensus::learn_commit(const CommitQCPtr& qc) {
    if (!qc || committed(qc->slot)) return false;
    SlotNum s = qc->slot;
    commit_log_[s] = qc;
    commits_[s] = qc;
    max_seen_ = std::max(max_seen_, s);
    out_->cancel_timer(TimerId{TimerId::View, s, 0});
    if (auto it = slots_.find(s); it != slots_.end()) it->second.deferred = nullptr;
    if (obs_) obs_->committed(self_, *qc);
    if (on_committed) on_committed(qc);
    maybe_activate(s + 1);
    if (cfg_.mode == Mode::Parallel) maybe_activate(s + cfg_.k);
    check_catchup(s);
    return true;
}

TimeoutPtr Consensus::on_timer_expiry(SlotNum s) {
    if (committed(s)) return nullptr;
    auto it = slots_.find(s);
    if (it == slots_.end()) return nullptr;
    auto& in = it->second;
    if (in.timed_out.count(in.view)) return nullptr;
    in.timed_out.insert(in.view);
    auto t = std::make_shared<TimeoutMsg>();
    t->slot = s;
    t->view = in.view;
    t->high_qc = in.conf;
    t->high_prop = in.prop;
    t->sig = keys_->sign(self_, timeout_payload(*t));
    out_->broadcast(TimeoutPtr(t));
    return t;
}

TimeoutOutcome Consensus::handle_timeout(ReplicaId from, const TimeoutPtr& t) {
    if (!t || t->slot == 0 || !val_.timeout(*t)) return Pending{};
    SlotNum s = t->slot;
    if (committed(s)) {
        auto qc = commit_of(s);
        if (from != self_) out_->send(from, CommitMsg{qc});
        return ForwardCommit{qc};
    }
    auto& in = inst(s);
    max_seen_ = std::max(max_seen_, s);
    ViewNum v = t->view;
    if (v < in.view) {
        if (auto tc = in.tcs.find(v); tc != in.tcs.end() && from != self_) out_->send(from, TimeoutCertMsg{tc->second});
        return Pending{};
    }
    auto& got = in.timeouts[v];
    got.emplace(t->sig.signer, t);

    if (got.size() >= q_.consensus && !in.tcs.count(v)) {
        auto tc = std::make_shared<TimeoutCert>();
        tc->slot = s;
        tc->view = v;
        for (const auto& [_, m] : got) {
            tc->timeouts.push_back(m);
            if (tc->timeouts.size() == q_.consensus) break;
        }
        adopt_tc(tc);
        return TCFormed{tc};
    }
    if (got.size() >= q_.poa && !in.timed_out.count(v)) {
        in.timed_out.insert(v);
        auto own = std::make_shared<TimeoutMsg>();
        own->slot = s;
        own->view = v;
        own->high_qc = in.conf;
        own->high_prop = in.prop;
        own->sig = keys_->sign(self_, timeout_payload(*own));
        out_->broadcast(TimeoutPtr(own));
        return JoinMutiny{own};
    }
    return Pending{};
}

void Consensus::adopt_tc(const TimeoutCertPtr& tc) {
    if (committed(tc->slot)) return;
    auto& in = inst(tc->slot);
    bool fresh = in.tcs.emplace(tc->view, tc).second;
    if (fresh && obs_) obs_->timeout_cert(self_, *tc);
    if (tc->view >= in.view) enter_view(in, tc->view + 1);
}

void Consensus::enter_view(SlotInstance& in, ViewNum v) {
    in.view = v;
    in.started = true;
    if (in.deferred && in.deferred->p->view < v) in.deferred = nullptr;
    max_seen_ = std::max(max_seen_, in.slot);
    arm_view_timer(in);
    if (obs_) obs_->view_entered(self_, in.slot, v);
    replay_future(in);
    try_propose(in.slot);
}

bool Consensus::buffer_future(SlotInstance& in, ReplicaId from, const Message& m) {
    if (in.future.size() >= cfg_.view_buffer_cap) return false;
    in.future.emplace_back(from, m);
    return true;
}

void Consensus::replay_future(SlotInstance& in) {
    if (in.future.empty()) return;
    auto msgs = std::move(in.future);
    in.future.clear();
    SlotNum s = in.slot;
    for (auto& [from, m] : msgs) {
        handle(from, m);
        if (committed(s)) break;
    }
}

void Consensus::send_vote(const PrepVote& v) { out_->send(leader_for(v.slot, v.view, q_, cfg_.schedule), v); }

void Consensus::check_catchup(SlotNum seen) {
    if (catchup_armed_) return;
    SlotNum lowest = finalized_ + 1;
    while (committed(lowest)) ++lowest;
    if (lowest >= seen) return;
    catchup_armed_ = true;
    out_->set_timer(TimerId{TimerId::Catchup, 0, 0}, 2 * kUnit);
}

void Consensus::handle(ReplicaId from, const Message& m) {
    if (auto* p = std::get_if<PreparePtr>(&m)) {
        auto out = handle_prepare(from, *p);
        if (auto* v = std::get_if<PrepVote>(&out)) send_vote(*v);
    } else if (auto* v = std::get_if<PrepVote>(&m)) {
        collect_prep_votes(*v);
    } else if (auto* c = std::get_if<Confirm>(&m)) {
        if (auto ack = handle_confirm(*c)) out_->send(leader_for(ack->slot, ack->view, q_, cfg_.schedule), *ack);
    } else if (auto* a = std::get_if<ConfirmAck>(&m)) {
        collect_confirm_acks(*a);
    } else if (auto* cm = std::get_if<CommitMsg>(&m)) {
        if (cm->qc && cm->qc->slot > 0 && !committed(cm->qc->slot) && val_.commit_qc(*cm->qc)) learn_commit(cm->qc);
    } else if (auto* t = std::get_if<TimeoutPtr>(&m)) {
        handle_timeout(from, *t);
    } else if (auto* tm = std::get_if<TimeoutCertMsg>(&m)) {
        if (tm->tc && tm->tc->slot > 0 && val_.tc(*tm->tc)) adopt_tc(tm->tc);
    } else if (auto* rq = std::get_if<CommitRequest>(&m)) {
        CommitReply rep;
        for (auto it = commit_log_.lower_bound(rq->from); it != commit_log_.end() && it->first <= rq->to; ++it) {
            rep.qcs.push_back(it->second);
            if (rep.qcs.size() >= 256) break;
        }
        if (!rep.qcs.empty() && from != self_) out_->send(from, std::move(rep));
    } else if (auto* rp = std::get_if<CommitReply>(&m)) {
        for (const auto& qc : rp->qcs)
            if (qc && qc->slot > 0 && !committed(qc->slot) && val_.commit_qc(*qc)) learn_commit(qc);
    }
}

void Consensus::on_timer(const TimerId& id) {
    switch (id.kind) {
        case TimerId::View:
            on_timer_expiry(id.a);
            break;
        case TimerId::FastWait: {
            auto it = slots_.find(id.a);
            if (it == slots_.end() || committed(id.a)) break;
            auto& in = it->second;
            if (!in.my_qc.count(id.b) && in.prep_votes[id.b].size() >= q_.consensus) form_prepare_qc(in, id.b);
            break;
        }
        case TimerId::Catchup: {
            catchup_armed_ = false;
            SlotNum lowest = finalized_ + 1;
            while (committed(lowest)) ++lowest;
            SlotNum top = highest_committed();
            if (lowest < top) {
                catchup_peer_ = (catchup_peer_ + 1) % q_.n;
                if (catchup_peer_ == self_) catchup_peer_ = (catchup_peer_ + 1) % q_.n;
                out_->send(catchup_peer_, CommitRequest{lowest, top});
                catchup_armed_ = true;
                out_->set_timer(TimerId{TimerId::Catchup, 0, 0}, 2 * kUnit);
            }
            break;
        }
        default:
            break;
    }
}

void Consensus::poll() {
    std::vector<SlotNum> live;
    for (const auto& [s, in] : slots_)
        if (!committed(s) && (in.started || in.deferred)) live.push_back(s);
    for (SlotNum s : live) {
        auto it = slots_.find(s);
        if (it == slots_.end()) continue;
        if (auto d = it->second.deferred; d && missing_payloads(*d->p->cut).empty()) {
            auto out = handle_prepare(d->p->sig.signer, d);
            if (auto* v = std::get_if<PrepVote>(&out)) send_vote(*v);
            if (!std::holds_alternative<Deferred>(out)) {
                if (auto again = slots_.find(s); again != slots_.end()) again->second.deferred = nullptr;
            }
        }
        try_propose(s);
    }
}

void Consensus::garbage_collect(SlotNum finalized) {
    finalized_ = std::max(finalized_, finalized);
    if (finalized_ > cfg_.k) commits_.erase(commits_.begin(), commits_.upper_bound(finalized_ - cfg_.k));
    slots_.erase(slots_.begin(), slots_.upper_bound(finalized_));
    if (finalized_ > 1) first_prepare_.erase(first_prepare_.begin(), first_prepare_.lower_bound(finalized_ - 1));
    if (!first_prepare_.count(0) && finalized_ <= 1) first_prepare_[0] = genesis_prepare_;
}

}  // namespace autobahn
