#include "autobahn/harness.hpp"

namespace autobahn {

void ObserverList::car_voted(ReplicaId r, const Vote& v) { for (auto* o : list_) o->car_voted(r, v); }
void ObserverList::poa_accepted(ReplicaId r, const ProofOfAvailability& p, bool s) { for (auto* o : list_) o->poa_accepted(r, p, s); }
void ObserverList::prepared(ReplicaId r, const SignedCut& p) { for (auto* o : list_) o->prepared(r, p); }
void ObserverList::prep_voted(ReplicaId r, const PrepVote& v) { for (auto* o : list_) o->prep_voted(r, v); }
void ObserverList::confirm_acked(ReplicaId r, const ConfirmAck& a) { for (auto* o : list_) o->confirm_acked(r, a); }
void ObserverList::prepare_qc(ReplicaId r, const PrepareQC& qc) { for (auto* o : list_) o->prepare_qc(r, qc); }
void ObserverList::commit_qc(ReplicaId r, const CommitQC& qc) { for (auto* o : list_) o->commit_qc(r, qc); }
void ObserverList::committed(ReplicaId r, const CommitQC& qc) { for (auto* o : list_) o->committed(r, qc); }
void ObserverList::timeout_cert(ReplicaId r, const TimeoutCert& tc) { for (auto* o : list_) o->timeout_cert(r, tc); }
void ObserverList::view_entered(ReplicaId r, SlotNum s, ViewNum v) { for (auto* o : list_) o->view_entered(r, s, v); }
void ObserverList::finalized(ReplicaId r, const std::vector<LogEntry>& e) { for (auto* o : list_) o->finalized(r, e); }
void ObserverList::sync_done(ReplicaId r, const SyncRecord& rec) { for (auto* o : list_) o->sync_done(r, rec); }

bool SafetyChecker::correct(ReplicaId r) const { return !sim_ || sim_->replica(r).correct(); }

void SafetyChecker::fail(const std::string& what) {
    std::string at = sim_ ? "t=" + std::to_string(to_units(sim_->now())) + " " : "";
    violations_.push_back(at + what);
}

void SafetyChecker::certify(const char* what, SlotNum s, ViewNum v, const Digest& d) {
    auto [it, fresh] = certified_.try_emplace({s, v}, d);
    if (!fresh && it->second != d)
        fail(std::string("per-view uniqueness: conflicting ") + what + " for slot " + std::to_string(s) + " view " +
             std::to_string(v));
}

void SafetyChecker::car_voted(ReplicaId r, const Vote& v) {
    if (!correct(r)) return;
    auto& last = last_car_vote_[{r, v.lane}];
    if (v.pos <= last)
        fail("in-order voting: replica " + std::to_string(r) + " voted lane " + std::to_string(v.lane) + " pos " +
             std::to_string(v.pos) + " after pos " + std::to_string(last));
    last = std::max(last, v.pos);
}

void SafetyChecker::poa_accepted(ReplicaId, const ProofOfAvailability& p, bool) {
    std::set<ReplicaId> signers;
    bool some_correct = false;
    for (const auto& a : p.votes) {
        signers.insert(a.signer);
        some_correct = some_correct || correct(a.signer);
    }
    if (!sim_) return;
    if (signers.size() < sim_->quorum().poa || !some_correct)
        fail("PoA soundness: lane " + std::to_string(p.lane) + " pos " + std::to_string(p.pos) +
             " lacks a correct signer");
}

void SafetyChecker::prep_voted(ReplicaId r, const PrepVote& v) {
    if (!correct(r)) return;
    if (++prep_votes_[{r, v.slot, v.view}] > 1)
        fail("once-per-view: replica " + std::to_string(r) + " sent two Prep-Votes in slot " + std::to_string(v.slot) +
             " view " + std::to_string(v.view));
    votes_[v.slot].emplace_back(v.view, v.dig);
    if (auto c = committed_.find(v.slot); c != committed_.end() && v.view > c->second.first && v.dig != c->second.second)
        fail("cross-view persistence: slot " + std::to_string(v.slot) + " view " + std::to_string(v.view) +
             " vote differs from value committed in view " + std::to_string(c->second.first));
}

void SafetyChecker::confirm_acked(ReplicaId r, const ConfirmAck& a) {
    if (!correct(r)) return;
    if (++acks_[{r, a.slot, a.view}] > 1)
        fail("once-per-view: replica " + std::to_string(r) + " sent two Confirm-Acks in slot " +
             std::to_string(a.slot) + " view " + std::to_string(a.view));
}

void SafetyChecker::prepare_qc(ReplicaId, const PrepareQC& qc) { certify("PrepareQC", qc.slot, qc.view, qc.dig); }

void SafetyChecker::commit_qc(ReplicaId, const CommitQC& qc) { certify("CommitQC", qc.slot, qc.view, qc.dig); }

void SafetyChecker::committed(ReplicaId r, const CommitQC& qc) {
    if (!correct(r)) return;
    auto [it, fresh] = committed_.try_emplace(qc.slot, qc.view, qc.dig);
    if (!fresh) {
        if (it->second.second != qc.dig) fail("agreement: slot " + std::to_string(qc.slot) + " committed twice");
        if (qc.view < it->second.first) it->second.first = qc.view;
        return;
    }
    for (const auto& [v, d] : votes_[qc.slot])
        if (v > qc.view && d != qc.dig)
            fail("cross-view persistence: slot " + std::to_string(qc.slot) + " has a correct vote in view " +
                 std::to_string(v) + " for another value");
}

void SafetyChecker::finalized(ReplicaId r, const std::vector<LogEntry>& entries) {
    if (!correct(r)) return;
    auto& len = log_len_[r];
    for (const auto& e : entries) {
        auto rec = std::make_tuple(e.lane, e.pos, e.prop->dig);
        if (len < reference_.size()) {
            if (reference_[len] != rec) {
                fail("log prefix: replica " + std::to_string(r) + " diverges at index " + std::to_string(len));
                return;
            }
        } else {
            reference_.push_back(rec);
        }
        ++len;
    }
}

void SafetyChecker::check_waste() {
    if (!sim_) return;
    std::vector<ReplicaId> byz;
    for (ReplicaId r = 0; r < sim_->size(); ++r)
        if (!sim_->replica(r).correct()) byz.push_back(r);
    if (byz.empty()) return;
    uint64_t bound = uint64_t(sim_->quorum().f) * batch_cap_;
    // A car below a PoA that exists anywhere (even one only the Byzantine owner holds) is
    // on the certified chain and gets committed once that PoA surfaces; it is not waste.
    std::vector<LanePos> frontier;
    for (auto b : byz) {
        LanePos top = 0;
        for (ReplicaId r = 0; r < sim_->size(); ++r)
            top = std::max(top, sim_->replica(r).lanes().lane(b).certified_pos());
        frontier.push_back(top);
    }
    for (ReplicaId r = 0; r < sim_->size(); ++r) {
        const auto& rep = sim_->replica(r);
        if (!rep.correct()) continue;
        uint64_t w = 0;
        for (size_t i = 0; i < byz.size(); ++i) w += rep.lanes().unresolved_txs(byz[i], frontier[i]);
        max_waste_ = std::max(max_waste_, w);
        if (w > bound)
            fail("bounded waste: replica " + std::to_string(r) + " stores " + std::to_string(w) +
                 " unresolved byzantine txs > " + std::to_string(bound));
    }
}

}  // namespace autobahn
