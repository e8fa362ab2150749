#include <algorithm>
#include <random>
#include <sstream>

#include "autobahn/harness.hpp"

namespace autobahn {

using nlohmann::json;

namespace {

constexpr uint64_t kForged = uint64_t{1} << 63;

uint32_t correct_count(const Simulator& sim) {
    uint32_t c = 0;
    for (ReplicaId r = 0; r < sim.size(); ++r) c += sim.replica(r).correct();
    return c;
}

Time median(std::vector<Time> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Commit and finalize events for the trace.
class TraceObserver : public Observer {
public:
    explicit TraceObserver(Simulator*& sim) : sim_(sim) {}
    void committed(ReplicaId r, const CommitQC& qc) override {
        sim_->trace({{"ev", "commit"}, {"r", r}, {"slot", qc.slot}, {"view", qc.view}, {"kind", int(qc.kind)},
                     {"dig", qc.dig.short_hex()}});
    }
    void finalized(ReplicaId r, const std::vector<LogEntry>& e) override {
        json ents = json::array();
        for (const auto& x : e) ents.push_back({x.lane, x.pos, x.prop->dig.short_hex()});
        sim_->trace({{"ev", "finalize"}, {"r", r}, {"entries", ents}});
    }
    void timeout_cert(ReplicaId r, const TimeoutCert& tc) override {
        sim_->trace({{"ev", "tc"}, {"r", r}, {"slot", tc.slot}, {"view", tc.view}});
    }

private:
    Simulator*& sim_;
};

}  // namespace

// ---- metrics ----

void MetricsCollector::injected(uint64_t id, ReplicaId lane, Time at) {
    index_[id] = txs_.size();
    txs_.push_back(TxRecord{id, lane, at, -1, -1, 0});
}

void MetricsCollector::committed(ReplicaId r, const CommitQC& qc) {
    if (!sim_->replica(r).correct()) return;
    auto [it, fresh] = commit_view_.try_emplace(qc.slot, qc.view);
    if (!fresh) it->second = std::min(it->second, qc.view);
    commit_time_.try_emplace(qc.slot, sim_->now());
}

void MetricsCollector::finalized(ReplicaId r, const std::vector<LogEntry>& entries) {
    if (!sim_->replica(r).correct()) return;
    uint32_t need = correct_count(*sim_);
    auto& seen = seen_[r];
    for (const auto& e : entries)
        for (const auto& tx : e.prop->batch) {
            if (tx.id & kForged) continue;
            auto it = index_.find(tx.id);
            if (it == index_.end()) {
                ++unknown_;
                continue;
            }
            if (!seen.insert(tx.id).second) {
                ++duplicates_;
                continue;
            }
            auto& rec = txs_[it->second];
            if (rec.first_final < 0) rec.first_final = sim_->now();
            if (++rec.finals == need) rec.final_all = sim_->now();
        }
}

void MetricsCollector::sync_done(ReplicaId r, const SyncRecord& rec) { syncs_.emplace_back(r, rec); }

Hangover measure_hangover(const std::vector<TxRecord>& txs, Time blip_start, Time blip_end, Time window) {
    Hangover h;
    if (blip_end <= blip_start) return h;
    std::vector<Time> before;
    for (const auto& t : txs)
        if (t.final_all >= 0 && t.inject < blip_start && t.inject >= blip_start - window)
            before.push_back(t.final_all - t.inject);
    h.steady = median(before);

    // Backlog: everything issued before the good interval starts.
    Time last = blip_end;
    for (const auto& t : txs)
        if (t.inject < blip_end) last = std::max(last, t.final_all < 0 ? std::numeric_limits<Time>::max() / 4 : t.final_all);
    h.drain = last - blip_end;

    const TxRecord* first = nullptr;
    for (const auto& t : txs)
        if (t.inject >= blip_end && (!first || t.inject < first->inject)) first = &t;
    if (first && first->final_all >= 0) h.first_excess = std::max<Time>(0, first->final_all - first->inject - h.steady);

    // Slide windows of `window` over injection times after the blip.
    Time end_inject = 0;
    for (const auto& t : txs) end_inject = std::max(end_inject, t.inject);
    h.recovery = -1;
    for (Time w = blip_end; w + window <= end_inject; w += window / 2) {
        std::vector<Time> lat;
        bool incomplete = false;
        for (const auto& t : txs)
            if (t.inject >= w && t.inject < w + window) {
                if (t.final_all < 0) incomplete = true;
                else lat.push_back(t.final_all - t.inject);
            }
        if (incomplete || lat.empty()) continue;
        if (double(median(lat)) <= 1.1 * double(h.steady)) {
            h.recovery = w - blip_end;
            break;
        }
    }
    return h;
}

LivenessReport check_liveness(const std::vector<TxRecord>& txs, const std::map<SlotNum, ViewNum>& views,
                              const Simulator& sim, Time horizon, Time margin) {
    LivenessReport rep;
    rep.views = views;
    for (const auto& [_, v] : views) rep.worst_view = std::max(rep.worst_view, v);
    for (const auto& t : txs) {
        if (!sim.replica(t.lane).correct() || t.inject >= horizon - margin) continue;
        ++rep.eligible;
        if (t.final_all < 0) ++rep.unfinished;
    }
    rep.ok = rep.unfinished == 0;
    return rep;
}

// ---- running ----

std::vector<std::tuple<uint64_t, ReplicaId, Time>> plan_load(const Scenario& s) {
    std::vector<std::tuple<uint64_t, ReplicaId, Time>> plan;
    if (s.load.rate <= 0) return plan;
    std::vector<ReplicaId> lanes = s.load.lanes;
    if (lanes.empty())
        for (ReplicaId r = 0; r < s.n; ++r) lanes.push_back(r);
    Time end = s.load.end < 0 ? s.horizon : std::min(s.load.end, s.horizon);
    std::vector<std::pair<Time, ReplicaId>> times;
    for (auto lane : lanes) {
        if (s.load.kind == LoadSpec::Kind::Fixed) {
            Time gap = std::max<Time>(1, Time(double(s.delay.delta) / s.load.rate));
            for (Time t = s.load.start; t < end; t += gap) times.emplace_back(t, lane);
        } else {
            std::mt19937_64 rng(s.seed * 1000003 + lane);
            std::exponential_distribution<double> exp(s.load.rate / double(s.delay.delta));
            for (Time t = s.load.start + Time(exp(rng)); t < end; t += std::max<Time>(1, Time(exp(rng))))
                times.emplace_back(t, lane);
        }
    }
    std::stable_sort(times.begin(), times.end());
    uint64_t id = 0;
    for (const auto& [t, lane] : times) plan.emplace_back(++id, lane, t);
    return plan;
}

RunResult run_scenario(const Scenario& s, const RunOptions& opt) {
    validate_scenario(s);
    ObserverList observers;
    Simulator* simp = nullptr;
    SafetyChecker checker(nullptr, s.replica.lane);
    MetricsCollector metrics(nullptr);
    TraceObserver tracer(simp);
    observers.add(&checker);
    observers.add(&metrics);
    if (opt.trace) observers.add(&tracer);

    SimConfig cfg;
    cfg.q = s.quorum();
    cfg.seed = s.seed;
    cfg.delay = s.delay;
    cfg.faults = s.faults;
    cfg.replica = s.replica;
    cfg.trace = opt.trace;
    Simulator sim(cfg, &observers);
    simp = &sim;
    checker.bind(&sim);
    metrics.bind(&sim);

    bool byz = !s.faults.byzantine.empty();
    sim.stop = [&] {
        if (opt.check_waste && byz) checker.check_waste();
        return opt.abort_on_violation && !checker.ok();
    };
    for (const auto& [id, lane, t] : plan_load(s)) {
        sim.inject(t, lane, Tx{id, s.load.tx_size});
        metrics.injected(id, lane, t);
    }
    sim.start();
    sim.run_until(s.horizon);

    RunResult res;
    res.scenario = s;
    res.txs = metrics.txs();
    res.violations = checker.violations();
    res.stats = sim.stats();
    res.commit_views = metrics.commit_views();
    res.syncs = metrics.syncs();
    res.max_waste = checker.max_waste();
    Time margin = opt.liveness_margin >= 0 ? opt.liveness_margin
                                           : 3 * s.replica.consensus.view_timer + 20 * s.delay.delta;
    res.liveness = check_liveness(res.txs, res.commit_views, sim, s.horizon, margin);

    auto& c = res.conservation;
    c.injected = res.txs.size();
    for (const auto& t : res.txs) {
        if (t.first_final >= 0) ++c.finalized;
        else if (sim.replica(t.lane).correct()) ++c.pending;
        else ++c.byzantine_lost;
    }
    c.duplicates = metrics.duplicate_finals();
    c.unknown = metrics.unknown_finals();
    c.ok = c.duplicates == 0 && c.unknown == 0 && c.injected == c.finalized + c.pending + c.byzantine_lost;

    Time window = 10 * s.delay.delta;
    for (size_t i = 0; i < s.faults.silences.size(); ++i) {
        const auto& x = s.faults.silences[i];
        res.hangovers.emplace_back("silent[" + std::to_string(i) + "]", measure_hangover(res.txs, x.start, x.end, window));
    }
    for (size_t i = 0; i < s.faults.partitions.size(); ++i) {
        const auto& x = s.faults.partitions[i];
        res.hangovers.emplace_back("partitions[" + std::to_string(i) + "]",
                                   measure_hangover(res.txs, x.start, x.end, window));
    }
    res.finalized_slots = std::numeric_limits<SlotNum>::max();
    for (ReplicaId r = 0; r < sim.size(); ++r) {
        if (!sim.replica(r).correct()) continue;
        res.finalized_slots = std::min(res.finalized_slots, sim.replica(r).ordering().finalized_slot());
        res.log_entries = std::max(res.log_entries, sim.replica(r).ordering().log().size());
    }
    return res;
}

json RunResult::summary() const {
    std::vector<Time> lat;
    for (const auto& t : txs)
        if (t.final_all >= 0) lat.push_back(t.final_all - t.inject);
    std::sort(lat.begin(), lat.end());
    double md = double(scenario.delay.base);
    auto pct = [&](double p) { return lat.empty() ? 0.0 : double(lat[size_t(p * double(lat.size() - 1))]) / md; };
    double mean = 0;
    for (Time l : lat) mean += double(l) / md;
    if (!lat.empty()) mean /= double(lat.size());

    json j;
    j["scenario"] = scenario.name;
    j["seed"] = scenario.seed;
    j["n"] = scenario.n;
    j["horizon"] = to_units(scenario.horizon);
    j["ok"] = ok();
    j["violations"] = violations;
    j["txs"] = {{"injected", conservation.injected},
                {"finalized", conservation.finalized},
                {"pending", conservation.pending},
                {"byzantine_lost", conservation.byzantine_lost},
                {"duplicates", conservation.duplicates},
                {"unknown", conservation.unknown},
                {"conserved", conservation.ok}};
    j["latency_md"] = {{"mean", mean}, {"p50", pct(0.5)}, {"p99", pct(0.99)}, {"max", pct(1.0)}, {"samples", lat.size()}};
    j["throughput_per_delta"] =
        double(lat.size()) / std::max(1e-9, to_units(scenario.horizon) / to_units(scenario.delay.delta));
    j["finalized_slots"] = finalized_slots;
    j["log_entries"] = log_entries;
    j["liveness"] = {{"ok", liveness.ok},
                     {"eligible", liveness.eligible},
                     {"unfinished", liveness.unfinished},
                     {"worst_view", liveness.worst_view}};
    json hs = json::array();
    for (const auto& [name, h] : hangovers)
        hs.push_back({{"blip", name},
                      {"drain", to_units(h.drain)},
                      {"first_excess", to_units(h.first_excess)},
                      {"recovery", h.recovery < 0 ? json(nullptr) : json(to_units(h.recovery))},
                      {"steady", to_units(h.steady)}});
    j["hangovers"] = hs;
    uint64_t ex = 0, ns = 0, to = 0;
    for (const auto& [_, r] : syncs) {
        ex += r.exchanges;
        ns += r.not_servable;
        to += r.timeouts;
    }
    j["sync"] = {{"completed", syncs.size()}, {"exchanges", ex}, {"not_servable", ns}, {"timeouts", to}};
    j["max_byzantine_waste"] = max_waste;
    j["sim"] = {{"events", stats.events},
                {"sent", stats.sent},
                {"delivered", stats.delivered},
                {"dropped", stats.dropped},
                {"held", stats.held},
                {"late_in_sync", stats.late_in_sync}};
    return j;
}

std::string RunResult::metrics_csv() const {
    std::ostringstream out;
    out << "tx_id,inject_time,finalize_time,latency_units,latency_md\n";
    double md = double(scenario.delay.base);
    for (const auto& t : txs) {
        if (t.final_all < 0) continue;
        Time l = t.final_all - t.inject;
        out << t.id << ',' << to_units(t.inject) << ',' << to_units(t.final_all) << ',' << to_units(l) << ','
            << double(l) / md << '\n';
    }
    return out.str();
}

}  // namespace autobahn
