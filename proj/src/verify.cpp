#include <algorithm>
#include <atomic>
#include <mutex>
#include <random>
#include <thread>

#include "autobahn/harness.hpp"

namespace autobahn {

using nlohmann::json;

namespace {

struct Rng {
    std::mt19937_64 g;
    explicit Rng(uint64_t seed) : g(seed) {}
    uint64_t below(uint64_t n) { return n == 0 ? 0 : g() % n; }
    bool chance(double p) { return double(g() >> 11) * 0x1.0p-53 < p; }
    double real(double lo, double hi) { return lo + (hi - lo) * double(g() >> 11) * 0x1.0p-53; }
};

// Runs `count` independent jobs on a small pool; results stay in job order.
template <class Job>
void parallel_for(size_t count, unsigned threads, Job job) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = unsigned(std::min<size_t>(threads, std::max<size_t>(count, 1)));
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (size_t i = next++; i < count; i = next++) job(i);
        });
    for (auto& t : pool) t.join();
}

SuiteReport run_suite(const std::string& name, std::vector<Scenario> scenarios, unsigned threads,
                      bool require_liveness) {
    SuiteReport rep;
    rep.suite = name;
    std::vector<int> failed(scenarios.size(), 0);
    std::vector<std::string> why(scenarios.size());
    std::vector<uint64_t> events(scenarios.size(), 0);
    parallel_for(scenarios.size(), threads, [&](size_t i) {
        RunOptions opt;
        auto res = run_scenario(scenarios[i], opt);
        events[i] = res.stats.events;
        if (!res.violations.empty()) {
            failed[i] = 1;
            why[i] = res.violations.front();
        } else if (!res.conservation.ok) {
            failed[i] = 1;
            why[i] = "conservation";
        } else if (require_liveness && !res.liveness.ok) {
            failed[i] = 1;
            why[i] = "liveness: " + std::to_string(res.liveness.unfinished) + " txs unfinished";
        }
    });
    json fails = json::array();
    uint64_t total_events = 0;
    for (size_t i = 0; i < scenarios.size(); ++i) {
        ++rep.runs;
        total_events += events[i];
        if (!failed[i]) continue;
        ++rep.failures;
        if (rep.counterexamples.size() < 3) rep.counterexamples.push_back(scenarios[i]);
        if (fails.size() < 10) fails.push_back({{"scenario", scenarios[i].name}, {"seed", scenarios[i].seed}, {"reason", why[i]}});
    }
    rep.details = {{"failures", fails}, {"events", total_events}};
    return rep;
}

}  // namespace

void apply_mutation(Scenario& s, Mutation m) {
    if (m == Mutation::DoubleVote) s.replica.consensus.mutate_double_vote = true;
    if (m == Mutation::WinnerRule) s.replica.consensus.mutate_winner_rule = true;
}

Scenario random_safety_scenario(uint32_t n, uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ull + n);
    auto q = quorum_sizes(n);
    Scenario s;
    s.name = "safety-n" + std::to_string(n) + "-s" + std::to_string(seed);
    s.n = n;
    s.seed = seed;
    s.horizon = units(100);
    s.delay.delta = kUnit;
    s.delay.base = units(rng.real(0.3, 1.0));
    s.delay.jitter = rng.chance(0.5) ? Time(double(kUnit - s.delay.base) * rng.real(0, 1)) : 0;
    s.load.rate = rng.real(0.5, 2.0);
    s.load.kind = rng.chance(0.5) ? LoadSpec::Kind::Poisson : LoadSpec::Kind::Fixed;
    s.load.tx_size = 64;
    auto& cc = s.replica.consensus;
    cc.mode = rng.chance(0.7) ? Mode::Parallel : Mode::Sequential;
    cc.k = uint32_t(1 + rng.below(4));
    cc.fast_path = rng.chance(0.6);
    cc.fast_wait = units(rng.real(0, 0.5));
    cc.view_timer = units(double(std::vector<int>{3, 4, 6, 10}[rng.below(4)]));
    cc.leader_tips = rng.chance(0.7);
    cc.optimistic_tips = rng.chance(0.2);
    s.replica.lane.batch_cap = uint32_t(2 + rng.below(8));
    s.replica.standalone_poa = rng.chance(0.3);
    s.replica.ordering.sync_timeout = 2 * kUnit;

    std::vector<ReplicaId> ids(n);
    for (ReplicaId r = 0; r < n; ++r) ids[r] = r;
    std::shuffle(ids.begin(), ids.end(), rng.g);
    uint32_t byz = uint32_t(rng.below(q.f + 1));
    const ByzMode modes[] = {ByzMode::Equivocate, ByzMode::Equivocate, ByzMode::WithholdData, ByzMode::LeaderTipAbuse};
    for (uint32_t i = 0; i < byz; ++i) s.faults.byzantine.push_back({ids[i], modes[rng.below(4)]});

    auto window = [&](double max_len) {
        double start = rng.real(1, 70);
        double len = rng.real(1, max_len);
        return std::make_pair(units(start), units(std::min(start + len, 95.0)));
    };
    for (uint64_t i = 0, k = rng.below(4); i < k; ++i) {
        SilentFault f;
        f.id = ReplicaId(rng.below(n));
        std::tie(f.start, f.end) = window(20);
        f.scope = rng.chance(0.5) ? SilentFault::Scope::Consensus : SilentFault::Scope::All;
        s.faults.silences.push_back(f);
    }
    for (uint64_t i = 0, k = rng.below(3); i < k; ++i) {
        PartitionFault p;
        std::vector<ReplicaId> perm = ids;
        std::shuffle(perm.begin(), perm.end(), rng.g);
        size_t cut = 1 + rng.below(n - 1);
        p.groups = {std::vector<ReplicaId>(perm.begin(), perm.begin() + cut),
                    std::vector<ReplicaId>(perm.begin() + cut, perm.end())};
        std::tie(p.start, p.end) = window(25);
        p.lossy = rng.chance(0.2);
        s.faults.partitions.push_back(std::move(p));
    }
    if (rng.chance(0.3)) {
        DropFault d;
        d.from = int(rng.below(n));
        d.probability = rng.real(0.05, 0.5);
        std::tie(d.start, d.end) = window(30);
        s.faults.drops.push_back(d);
    }
    return s;
}

Scenario random_liveness_scenario(uint32_t n, uint64_t seed) {
    Rng rng(seed * 0xD1B54A32D192ED03ull + n);
    auto q = quorum_sizes(n);
    Scenario s;
    s.name = "liveness-n" + std::to_string(n) + "-s" + std::to_string(seed);
    s.n = n;
    s.seed = seed;
    s.horizon = units(160);
    s.load.rate = rng.real(0.5, 2.0);
    s.load.tx_size = 64;
    auto& cc = s.replica.consensus;
    cc.mode = rng.chance(0.7) ? Mode::Parallel : Mode::Sequential;
    cc.k = uint32_t(1 + rng.below(4));
    cc.fast_path = rng.chance(0.6);
    s.replica.lane.batch_cap = uint32_t(4 + rng.below(16));
    std::vector<ReplicaId> ids(n);
    for (ReplicaId r = 0; r < n; ++r) ids[r] = r;
    std::shuffle(ids.begin(), ids.end(), rng.g);
    uint32_t byz = uint32_t(rng.below(q.f + 1));
    const ByzMode modes[] = {ByzMode::Equivocate, ByzMode::WithholdData, ByzMode::LeaderTipAbuse};
    for (uint32_t i = 0; i < byz; ++i) s.faults.byzantine.push_back({ids[i], modes[rng.below(3)]});
    // Every fault heals well before the horizon so the synchronous suffix is long.
    for (uint64_t i = 0, k = rng.below(3); i < k; ++i) {
        SilentFault f;
        f.id = ReplicaId(rng.below(n));
        f.start = units(rng.real(5, 40));
        f.end = f.start + units(rng.real(1, 20));
        s.faults.silences.push_back(f);
    }
    if (rng.chance(0.5)) {
        PartitionFault p;
        p.groups = {std::vector<ReplicaId>(ids.begin(), ids.begin() + n / 2),
                    std::vector<ReplicaId>(ids.begin() + n / 2, ids.end())};
        p.start = units(rng.real(5, 40));
        p.end = p.start + units(rng.real(1, 20));
        s.faults.partitions.push_back(std::move(p));
    }
    return s;
}

Scenario blip_scenario(Time blip_len, uint64_t seed) {
    Scenario s;
    s.name = "blip-" + std::to_string(to_units(blip_len));
    s.n = 4;
    s.seed = seed;
    Time start = units(40);
    s.horizon = start + blip_len + units(80);
    s.load.rate = 2.0;
    s.load.tx_size = 64;
    s.replica.consensus.mode = Mode::Parallel;
    s.replica.consensus.k = 4;
    // Longer than any tested blip: the stalled slot resumes in view 0 when the leader
    // returns, so the whole blip accumulates lane backlog instead of being cut short by
    // a view change.
    s.replica.consensus.view_timer = units(100);
    SilentFault f;
    f.id = 1;
    f.start = start;
    f.end = start + blip_len;
    f.scope = SilentFault::Scope::Consensus;
    s.faults.silences.push_back(f);
    return s;
}

SuiteReport verify_safety(uint64_t seeds, Mutation m, unsigned threads) {
    std::vector<Scenario> all;
    for (uint32_t n : {4u, 7u})
        for (uint64_t seed = 1; seed <= seeds; ++seed) {
            auto s = random_safety_scenario(n, seed);
            apply_mutation(s, m);
            all.push_back(std::move(s));
        }
    return run_suite("safety", std::move(all), threads, false);
}

SuiteReport verify_liveness(uint64_t seeds, Mutation m, unsigned threads) {
    std::vector<Scenario> all;
    for (uint32_t n : {4u, 7u})
        for (uint64_t seed = 1; seed <= seeds; ++seed) {
            auto s = random_liveness_scenario(n, seed);
            apply_mutation(s, m);
            all.push_back(std::move(s));
        }
    return run_suite("liveness", std::move(all), threads, true);
}

SuiteReport verify_seamless(Mutation m) {
    SuiteReport rep;
    rep.suite = "seamless";
    json rows = json::array();
    std::vector<Time> hang;
    bool violations = false;
    for (double len : {2.0, 10.0, 50.0}) {
        auto s = blip_scenario(units(len));
        apply_mutation(s, m);
        auto res = run_scenario(s);
        ++rep.runs;
        violations = violations || !res.violations.empty();
        const auto& h = res.hangovers.front().second;
        hang.push_back(h.drain);
        rows.push_back({{"blip", len},
                        {"drain", to_units(h.drain)},
                        {"steady", to_units(h.steady)},
                        {"first_excess", to_units(h.first_excess)},
                        {"recovery", h.recovery < 0 ? json(nullptr) : json(to_units(h.recovery))}});
    }
    bool constant = hang[2] <= hang[0] + kUnit;
    bool bounded = std::all_of(hang.begin(), hang.end(), [](Time h) { return h <= kHangoverBound; });
    if (!constant || !bounded || violations) rep.failures = 1;
    rep.details = {{"rows", rows}, {"constant", constant}, {"bounded", bounded}, {"bound", to_units(kHangoverBound)}};
    return rep;
}

// ---- view-change model fuzz ----

FuzzOutcome view_change_fuzz(uint32_t n, uint64_t seed, bool mutated, std::ostream* log) {
    Rng rng(seed * 0xA24BAED4963EE407ull + n);
    auto q = quorum_sizes(n);
    const SlotNum slot = 1;
    std::vector<ReplicaId> ids(n);
    for (ReplicaId r = 0; r < n; ++r) ids[r] = r;
    std::shuffle(ids.begin(), ids.end(), rng.g);
    std::set<ReplicaId> byz(ids.begin(), ids.begin() + q.f);

    uint64_t fresh = 0;
    auto new_value = [&] {
        std::vector<TipRef> tips(n);
        for (ReplicaId l = 0; l < n; ++l) tips[l].lane = l;
        tips[0].pos = ++fresh;
        tips[0].dig = digest("value-" + std::to_string(fresh));
        return make_cut(slot, std::move(tips));
    };
    auto signed_cut = [&](ViewNum v, const CutPtr& c) {
        auto sc = std::make_shared<SignedCut>();
        sc->slot = slot;
        sc->view = v;
        sc->cut = c;
        return SignedCutPtr(sc);
    };
    auto make_qc = [&](ViewNum v, const CutPtr& c) {
        auto qc = std::make_shared<PrepareQC>();
        qc->slot = slot;
        qc->view = v;
        qc->dig = c->dig;
        qc->cut = c;
        return PrepareQCPtr(qc);
    };

    struct Local {
        SignedCutPtr prop;
        PrepareQCPtr conf;
    };
    std::map<ReplicaId, Local> local;
    std::vector<SignedCutPtr> all_props;
    std::vector<PrepareQCPtr> all_qcs;
    std::optional<std::pair<ViewNum, Digest>> committed;
    FuzzOutcome out;
    uint32_t views = uint32_t(3 + rng.below(6));
    out.views = views;

    // Timeout set of view v-1, from which the leader of v builds TCs.
    std::vector<TimeoutPtr> pool;
    auto byz_timeout = [&](ViewNum v, ReplicaId who) {
        auto t = std::make_shared<TimeoutMsg>();
        t->slot = slot;
        t->view = v;
        t->sig.signer = who;
        // Adversarial: hide QCs and push the newest proposal that conflicts with the newest QC.
        if (!all_qcs.empty() && rng.chance(0.3)) t->high_qc = all_qcs[rng.below(all_qcs.size())];
        if (!all_props.empty()) {
            SignedCutPtr pick;
            Digest avoid = all_qcs.empty() ? Digest{} : all_qcs.back()->dig;
            for (auto it = all_props.rbegin(); it != all_props.rend(); ++it)
                if ((*it)->cut->dig != avoid) {
                    pick = *it;
                    break;
                }
            if (!pick || rng.chance(0.2)) pick = all_props[rng.below(all_props.size())];
            t->high_prop = pick;
        }
        return TimeoutPtr(t);
    };
    auto pick_tc = [&](ViewNum v) {
        std::vector<TimeoutPtr> c = pool;
        std::shuffle(c.begin(), c.end(), rng.g);
        auto tc = std::make_shared<TimeoutCert>();
        tc->slot = slot;
        tc->view = v;
        tc->timeouts.assign(c.begin(), c.begin() + q.consensus);
        return TimeoutCertPtr(tc);
    };

    for (ViewNum v = 0; v < views; ++v) {
        ReplicaId leader = leader_for(slot, v, q);
        bool bad = byz.count(leader) != 0;

        // Each proposal is (value, ticket winner check passed).
        std::vector<CutPtr> values;
        auto value_for = [&](const TimeoutCertPtr& tc) {
            if (!tc) return new_value();
            auto w = winning_proposal(*tc, q, mutated);
            return w ? w->cut : new_value();
        };
        if (v == 0) {
            values.push_back(new_value());
            if (bad) values.push_back(new_value());
        } else {
            values.push_back(value_for(pick_tc(v - 1)));
            if (bad) values.push_back(value_for(pick_tc(v - 1)));
            if (bad && values[1]->dig == values[0]->dig && rng.chance(0.5)) {
                // Without a winner any value is acceptable; otherwise stick to one.
                auto tc = pick_tc(v - 1);
                if (!winning_proposal(*tc, q, mutated)) values[1] = new_value();
            }
        }

        // Deliver: a correct replica gets one of the values (or none).
        std::map<Digest, std::vector<ReplicaId>> voters;
        for (ReplicaId r = 0; r < n; ++r) {
            if (byz.count(r) || rng.chance(0.15)) continue;
            const auto& val = values[rng.below(values.size())];
            auto sc = signed_cut(v, val);
            local[r].prop = sc;
            all_props.push_back(sc);
            voters[val->dig].push_back(r);
            if (log) *log << "view " << v << ": replica " << r << " votes " << val->dig.short_hex() << "\n";
            if (committed && v > committed->first && val->dig != committed->second) ++out.violations;
        }
        for (const auto& val : values) all_props.push_back(signed_cut(v, val));

        for (const auto& val : values) {
            auto& vs = voters[val->dig];
            // Byzantine replicas vote for anything, so f extra votes are always available.
            if (vs.size() + q.f < q.consensus || rng.chance(0.25)) continue;
            auto qc = make_qc(v, val);
            all_qcs.push_back(qc);
            if (vs.size() + q.f >= q.fast && rng.chance(0.3)) {
                if (!committed) committed = std::make_pair(v, val->dig);
                if (log) *log << "view " << v << ": fast commit " << val->dig.short_hex() << "\n";
                continue;
            }
            std::vector<ReplicaId> acked;
            for (ReplicaId r : vs)  // a correct replica only acks in the view it voted in
                if (rng.chance(0.7)) {
                    local[r].conf = qc;
                    acked.push_back(r);
                }
            for (ReplicaId r = 0; r < n; ++r)
                if (!byz.count(r) && rng.chance(0.2) && local[r].prop && local[r].prop->view <= v)
                    local[r].conf = qc;  // Confirm reaches a non-voter; it still raises conf
            if (log) *log << "view " << v << ": qc " << val->dig.short_hex() << " acked by " << acked.size() << "\n";
            if (acked.size() + q.f >= q.consensus && rng.chance(0.6) && !committed) {
                committed = std::make_pair(v, val->dig);
                if (log) *log << "view " << v << ": slow commit " << val->dig.short_hex() << "\n";
            }
        }

        pool.clear();
        for (ReplicaId r = 0; r < n; ++r) {
            if (byz.count(r)) {
                pool.push_back(byz_timeout(v, r));
                continue;
            }
            auto t = std::make_shared<TimeoutMsg>();
            t->slot = slot;
            t->view = v;
            t->high_qc = local[r].conf;
            t->high_prop = local[r].prop;
            t->sig.signer = r;
            pool.push_back(t);
        }
    }
    out.committed = committed.has_value();
    return out;
}

SuiteReport verify_viewchange(uint64_t runs, Mutation m) {
    SuiteReport rep;
    rep.suite = "viewchange";
    uint64_t committed = 0, bad = 0;
    for (uint64_t i = 1; i <= runs; ++i) {
        uint32_t n = i % 2 ? 4 : 7;
        auto o = view_change_fuzz(n, i, m == Mutation::WinnerRule);
        ++rep.runs;
        committed += o.committed;
        if (o.violations) {
            ++rep.failures;
            bad += o.violations;
        }
    }
    rep.details = {{"runs_with_commit", committed}, {"contradicting_votes", bad}};
    return rep;
}

}  // namespace autobahn
