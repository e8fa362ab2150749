// One pass/fail line per acceptance criterion. Exit status is nonzero if any fails.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "autobahn/harness.hpp"

using namespace autobahn;
namespace fs = std::filesystem;

#ifndef AUTOBAHN_CLI
#error "AUTOBAHN_CLI must name the command-line binary"
#endif
#ifndef AUTOBAHN_SCENARIOS
#error "AUTOBAHN_SCENARIOS must name the scenario directory"
#endif

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
    std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
}

std::string md(Time t) {
    std::ostringstream s;
    s << to_units(t);
    return s.str();
}

// Timestamps of consensus events for one slot, taken from the simulator clock.
struct Probe : Observer {
    const Simulator* sim = nullptr;
    SlotNum slot = 1;
    std::map<ReplicaId, Time> prepared_at, formed_at, committed_at;
    std::map<uint64_t, std::map<ReplicaId, Time>> tx_final;
    std::map<SlotNum, std::pair<Time, ReplicaId>> first_prepare_v0;  // by slot, leader broadcasts at view 0
    std::map<SlotNum, CutPtr> committed_cut;
    std::function<void(SlotNum, ReplicaId)> on_prepare;

    void prepared(ReplicaId r, const SignedCut& p) override {
        if (p.slot == slot) prepared_at.try_emplace(r, sim->now());
        if (p.view == 0 && !first_prepare_v0.count(p.slot)) {
            first_prepare_v0[p.slot] = {sim->now(), r};
            if (on_prepare) on_prepare(p.slot, r);
        }
    }
    void commit_qc(ReplicaId r, const CommitQC& qc) override {
        if (qc.slot == slot) formed_at.try_emplace(r, sim->now());
    }
    void committed(ReplicaId r, const CommitQC& qc) override {
        if (qc.slot == slot) committed_at.try_emplace(r, sim->now());
        committed_cut.try_emplace(qc.slot, qc.cut);
    }
    void finalized(ReplicaId r, const std::vector<LogEntry>& es) override {
        for (const auto& e : es)
            for (const auto& tx : e.prop->batch) tx_final[tx.id].try_emplace(r, sim->now());
    }
};

SimConfig base_config(uint32_t n) {
    SimConfig c;
    c.q = quorum_sizes(n);
    c.delay.base = kUnit;
    c.delay.jitter = 0;
    c.replica.standalone_poa = true;
    return c;
}

// ---- 1: consensus latency in message delays ----
void criterion1() {
    bool ok = true;
    std::string detail;
    for (bool fast : {true, false}) {
        auto cfg = base_config(4);
        cfg.replica.consensus.fast_path = fast;
        Probe probe;
        Simulator sim(cfg, &probe);
        probe.sim = &sim;
        for (ReplicaId r = 0; r < 4; ++r) sim.inject(0, r, Tx{r + 1, 64});
        sim.start();
        sim.run_until(units(30));
        ReplicaId leader = leader_for(1, 0, cfg.q);
        if (!probe.prepared_at.count(leader) || probe.committed_at.size() != 4) {
            ok = false;
            detail += fast ? "fast: slot 1 did not commit everywhere; " : "slow: slot 1 did not commit everywhere; ";
            continue;
        }
        Time t0 = probe.prepared_at[leader];
        Time formed = probe.formed_at.count(leader) ? probe.formed_at[leader] - t0 : -1;
        Time all = 0;
        bool exact = true;
        Time want_all = fast ? 3 * kUnit : 5 * kUnit;
        Time want_formed = fast ? 2 * kUnit : 4 * kUnit;
        for (auto [r, t] : probe.committed_at) {
            all = std::max(all, t - t0);
            if (r != leader && t - t0 != want_all) exact = false;
        }
        bool kind_ok = false;
        if (auto* qc = sim.replica(leader).consensus().commit_of(1).get())
            kind_ok = qc->kind == (fast ? CommitKind::Fast : CommitKind::Slow);
        ok = ok && exact && formed == want_formed && all == want_all && kind_ok;
        detail += std::string(fast ? "fast" : "slow") + ": formed +" + md(formed) + " (want " + md(want_formed) +
                  "), all replicas +" + md(all) + " (want " + md(want_all) + "); ";
    }
    report(1, ok, detail);
}

// ---- 2: end-to-end latency, certified tips only ----
void criterion2() {
    bool ok = true;
    std::string detail;
    for (bool fast : {true, false}) {
        auto cfg = base_config(4);
        cfg.replica.consensus.fast_path = fast;
        cfg.replica.consensus.leader_tips = false;
        cfg.replica.consensus.optimistic_tips = false;
        Probe probe;
        Simulator sim(cfg, &probe);
        probe.sim = &sim;
        ReplicaId leader = leader_for(1, 0, cfg.q);
        // Every lane puts one car on the road at t=0; the watched tx sits in the leader's car.
        const uint64_t watched = 100;
        for (ReplicaId r = 0; r < 4; ++r) sim.inject(0, r, Tx{r == leader ? watched : r + 1, 64});
        sim.start();
        sim.run_until(units(40));
        const auto& fin = probe.tx_final[watched];
        Time all = -1;
        if (fin.size() == 4)
            for (auto [_, t] : fin) all = std::max(all, t);
        Time want = fast ? 6 * kUnit : 8 * kUnit;
        ok = ok && all == want;
        detail += std::string(fast ? "fast" : "slow") + ": finalized at all replicas at " +
                  (all < 0 ? std::string("never") : md(all)) + " md (want " + md(want) + "); ";
    }
    report(2, ok, detail);
}

// ---- 3: safety under adversarial schedules ----
void criterion3() {
    auto rep = verify_safety(500);
    std::string why;
    if (!rep.ok() && rep.details.contains("failures")) why = " first: " + rep.details["failures"].dump();
    report(3, rep.ok(), std::to_string(rep.runs) + " runs (n=4 and n=7, 500 seeds each), " +
                            std::to_string(rep.failures) + " with violations" + why);
}

// ---- 4: seamlessness ----
void criterion4() {
    auto rep = verify_seamless();
    std::string rows;
    for (const auto& r : rep.details["rows"])
        rows += "blip " + r["blip"].dump() + ": hangover " + r["drain"].dump() + "; ";
    report(4, rep.ok(), rows + "bound " + rep.details["bound"].dump() + " md, hangover(50) <= hangover(2)+1: " +
                            rep.details["constant"].dump());
}

// ---- 5: one-exchange sync ----
void criterion5() {
    bool ok = true;
    std::string detail;
    for (uint64_t L : {1ull, 10ull, 1000ull}) {
        auto cfg = base_config(4);
        cfg.replica.lane.batch_cap = 1;  // one tx per car: L txs make L proposals
        const ReplicaId lane = 0, cut_off = 3;
        Time start = units(5);
        // Lane 0 needs about 2 delays per car; leave slack for view changes of replica 3's slots.
        Time end = start + units(2.0 * L + 40);
        PartitionFault p;
        p.groups = {{cut_off}};
        p.start = start;
        p.end = end;
        p.lossy = true;
        cfg.faults.partitions.push_back(p);
        Probe probe;
        Simulator sim(cfg, &probe);
        probe.sim = &sim;
        for (uint64_t i = 1; i <= L; ++i) sim.inject(start, lane, Tx{i, 64});
        sim.start();
        sim.run_until(end + units(120));

        const auto& rep3 = sim.replica(cut_off);
        bool grew = sim.replica(lane).own_cars().size() == L;
        LanePos have = rep3.lanes().lane(lane).last_commit;
        std::vector<SyncRecord> recs;
        for (const auto& r : rep3.ordering().sync_records())
            if (r.lane == lane) recs.push_back(r);
        bool all_final = probe.tx_final.size() == L;
        for (const auto& [_, per] : probe.tx_final) all_final = all_final && per.count(cut_off);
        bool one = recs.size() == 1 && recs[0].exchanges == 1 && recs[0].not_servable <= sim.quorum().f &&
                   recs[0].to == L && recs[0].from == 1;
        ok = ok && grew && all_final && one && have == L;
        detail += "L=" + std::to_string(L) + ": " + std::to_string(recs.size()) + " sync(s)";
        if (!recs.empty())
            detail += " [" + std::to_string(recs[0].from) + ".." + std::to_string(recs[0].to) + ", exchanges " +
                      std::to_string(recs[0].exchanges) + ", not_servable " + std::to_string(recs[0].not_servable) +
                      "]";
        detail += ", committed pos " + std::to_string(have) + "; ";
    }
    report(5, ok, detail);
}

// ---- 6: reliable inclusion ----
void criterion6() {
    auto cfg = base_config(4);
    cfg.replica.consensus.view_timer = units(100);
    const Time blip_start = units(30), blip_end = units(60);
    SilentFault f;
    f.id = leader_for(1, 0, cfg.q);
    f.start = blip_start;
    f.end = blip_end;
    f.scope = SilentFault::Scope::Consensus;
    cfg.faults.silences.push_back(f);

    Probe probe;
    Simulator sim(cfg, &probe);
    probe.sim = &sim;
    // The first view-0 Prepare a correct leader issues after everything sent at the start of
    // the good interval has been delivered (strictly later than one delay bound).
    std::optional<SlotNum> watched;
    probe.on_prepare = [&](SlotNum s, ReplicaId r) {
        if (!watched && sim.now() > blip_end + cfg.delay.delta && sim.replica(r).correct()) watched = s;
    };
    uint64_t id = 0;
    for (Time t = 0; t < units(120); t += kUnit / 2)
        for (ReplicaId r = 0; r < 4; ++r) sim.inject(t, r, Tx{++id, 64});
    sim.start();
    sim.run_until(blip_end);
    // Highest PoA per lane held by any correct replica as the good interval starts.
    std::vector<LanePos> held(4, 0);
    for (ReplicaId x = 0; x < 4; ++x)
        for (ReplicaId l = 0; l < 4; ++l)
            held[l] = std::max(held[l], sim.replica(x).lanes().lane(l).certified_pos());
    sim.run_until(units(140));

    bool ok = watched && probe.committed_cut.count(*watched);
    std::string detail;
    if (ok) {
        const auto& cut = *probe.committed_cut[*watched];
        for (ReplicaId l = 0; l < 4; ++l) {
            ok = ok && cut.tips[l].pos >= held[l];
            detail += "lane " + std::to_string(l) + " held " + std::to_string(held[l]) + " committed " +
                      std::to_string(cut.tips[l].pos) + "; ";
        }
        detail = "slot " + std::to_string(*watched) + ": " + detail;
    } else {
        detail = "no committed post-blip view-0 slot from a correct leader";
    }
    report(6, ok, detail);
}

// ---- 7: bounded waste ----
void criterion7() {
    Scenario s;
    s.name = "waste";
    s.n = 4;
    s.seed = 3;
    s.horizon = units(150);
    s.load.rate = 6;
    s.load.tx_size = 64;
    s.replica.lane.batch_cap = 8;
    s.faults.byzantine.push_back(ByzantineFault{2, ByzMode::Equivocate});
    auto res = run_scenario(s);
    uint64_t bound = uint64_t(s.quorum().f) * s.replica.lane.batch_cap;
    bool ok = res.violations.empty() && res.max_waste <= bound;
    report(7, ok, "equivocating lane 2: max unresolved byzantine txs at a correct replica " +
                      std::to_string(res.max_waste) + " (bound f*b = " + std::to_string(bound) + "), violations " +
                      std::to_string(res.violations.size()));
}

// ---- 8: view-change recovery rule ----
TimeoutPtr timeout(ReplicaId who, ViewNum v, PrepareQCPtr qc, SignedCutPtr prop) {
    auto t = std::make_shared<TimeoutMsg>();
    t->slot = 1;
    t->view = v;
    t->high_qc = std::move(qc);
    t->high_prop = std::move(prop);
    t->sig.signer = who;
    return t;
}
CutPtr value(int tag) {
    std::vector<TipRef> tips(4);
    for (ReplicaId l = 0; l < 4; ++l) tips[l].lane = l;
    tips[0].pos = tag;
    tips[0].dig = digest("v" + std::to_string(tag));
    return make_cut(1, tips);
}
SignedCutPtr prop(ViewNum v, const CutPtr& c) {
    auto p = std::make_shared<SignedCut>();
    p->slot = 1;
    p->view = v;
    p->cut = c;
    return p;
}
PrepareQCPtr qc(ViewNum v, const CutPtr& c) {
    auto q = std::make_shared<PrepareQC>();
    q->slot = 1;
    q->view = v;
    q->dig = c->dig;
    q->cut = c;
    return q;
}

void criterion8() {
    auto q = quorum_sizes(4);
    auto X = value(1), Y = value(2);
    auto tc = [](std::vector<TimeoutPtr> ts) {
        TimeoutCert c;
        c.slot = 1;
        c.view = 3;
        c.timeouts = std::move(ts);
        return c;
    };
    auto wins = [&](const TimeoutCert& c, const CutPtr& want, bool mutated = false) {
        auto w = winning_proposal(c, q, mutated);
        return w && w->cut->dig == want->dig;
    };
    // (a) X fast-committed in view 1: every correct replica voted X, so f+1 of them sit in
    // any TC, some of them having re-voted X in view 2. The Byzantine member pushes Y.
    auto a = tc({timeout(0, 3, nullptr, prop(1, X)), timeout(1, 3, nullptr, prop(2, X)),
                 timeout(3, 3, qc(0, Y), prop(2, Y))});
    // (b) X slow-committed in view 1: its PrepareQC is in the TC and outranks older values.
    auto b = tc({timeout(0, 3, qc(1, X), prop(1, X)), timeout(1, 3, nullptr, prop(0, Y)),
                 timeout(2, 3, nullptr, prop(0, Y))});
    // (c) view tie: highQC X@1 against Y@1 carried by f+1 highProps (an equivocating leader).
    auto c = tc({timeout(0, 3, qc(1, X), prop(1, X)), timeout(1, 3, nullptr, prop(1, Y)),
                 timeout(3, 3, nullptr, prop(1, Y))});
    bool va = wins(a, X), vb = wins(b, X), vc = wins(c, X), vc_mut = wins(c, Y, true);

    auto clean = verify_viewchange(200);
    auto mutated = verify_viewchange(200, Mutation::WinnerRule);
    bool ok = va && vb && vc && vc_mut && clean.ok() && mutated.failures > 0;
    report(8, ok, std::string("vectors a/b/c: ") + (va ? "ok" : "bad") + "/" + (vb ? "ok" : "bad") + "/" +
                      (vc ? "ok" : "bad") + ", broken rule flips (c): " + (vc_mut ? "yes" : "no") +
                      "; fuzz 200 runs: " + std::to_string(clean.failures) + " violations, mutated rule caught in " +
                      std::to_string(mutated.failures) + " runs");
}

// ---- 9: offset leader schedule ----
// Oracle: slot s needs as many view changes as consecutive faulty leaders it meets.
uint64_t oracle_view_changes(uint32_t n, uint32_t k, LeaderSchedule sch, const std::set<ReplicaId>& faulty) {
    auto q = quorum_sizes(n);
    uint64_t total = 0;
    for (SlotNum s = 1; s <= k; ++s) {
        ViewNum v = 0;
        while (faulty.count(leader_for(s, v, q, sch))) ++v;
        total += v;
    }
    return total;
}

void criterion9() {
    bool ok = true;
    std::string detail;
    for (uint32_t n : {7u, 10u}) {
        auto q = quorum_sizes(n);
        uint32_t k = q.f;
        for (auto sch : {LeaderSchedule::Offset, LeaderSchedule::Unshifted}) {
            // Worst placement of f consecutive faulty ids for this schedule.
            std::set<ReplicaId> worst;
            uint64_t expect = 0;
            for (ReplicaId a = 0; a < n; ++a) {
                std::set<ReplicaId> fs;
                for (uint32_t i = 0; i < q.f; ++i) fs.insert((a + i) % n);
                auto c = oracle_view_changes(n, k, sch, fs);
                if (c > expect || worst.empty()) {
                    expect = c;
                    worst = fs;
                }
            }
            Scenario s;
            s.n = n;
            s.seed = 5;
            s.horizon = units(250);
            s.load.rate = 1;
            s.load.tx_size = 64;
            s.replica.consensus.mode = Mode::Parallel;
            s.replica.consensus.k = k;
            s.replica.consensus.schedule = sch;
            for (auto r : worst) s.faults.silences.push_back(SilentFault{r, 0, s.horizon - kUnit, SilentFault::Scope::All});
            auto res = run_scenario(s);
            uint64_t measured = 0;
            bool all = true;
            for (SlotNum sl = 1; sl <= k; ++sl) {
                auto it = res.commit_views.find(sl);
                if (it == res.commit_views.end()) all = false;
                else measured += it->second;
            }
            bool offset = sch == LeaderSchedule::Offset;
            bool bound = offset ? measured <= q.f + 1 : 2 * measured == uint64_t(k) * (q.f + 1);
            ok = ok && all && measured == expect && bound && res.violations.empty();
            detail += "n=" + std::to_string(n) + " k=" + std::to_string(k) + (offset ? " offset " : " unshifted ") +
                      std::to_string(measured) + " (oracle " + std::to_string(expect) + "); ";
        }
    }
    report(9, ok, detail);
}

// ---- 10: determinism ----
int sh(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void criterion10() {
    fs::path dir = fs::temp_directory_path() / ("autobahn-accept-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::string cli = AUTOBAHN_CLI, scen = std::string(AUTOBAHN_SCENARIOS) + "/faulty4.json";
    auto run = [&](const std::string& out, const std::string& seed) {
        return sh(cli + " run --scenario " + scen + " --seed " + seed + " --out " + (dir / out).string() +
                  " > /dev/null 2>&1");
    };
    int r1 = run("a", "11"), r2 = run("b", "11"), r3 = run("c", "12");
    auto diff = [&](const char* x, const char* y) {
        return sh(cli + " trace-diff " + (dir / x / "trace.ndjson").string() + " " +
                  (dir / y / "trace.ndjson").string() + " > /dev/null 2>&1");
    };
    int same = diff("a", "b"), other = diff("a", "c");
    bool bytes = false;
    {
        std::ifstream a(dir / "a" / "trace.ndjson", std::ios::binary), b(dir / "b" / "trace.ndjson", std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        bytes = !sa.empty() && sa == sb;
    }
    fs::remove_all(dir);
    bool ok = r1 == 0 && r2 == 0 && r3 == 0 && bytes && same == 0 && other == 1;
    report(10, ok, "two invocations byte-identical: " + std::string(bytes ? "yes" : "no") +
                       ", trace-diff exit " + std::to_string(same) + " (other seed: " + std::to_string(other) + ")");
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::function<void()>> all{criterion1, criterion2, criterion3, criterion4, criterion5,
                                           criterion6, criterion7, criterion8, criterion9, criterion10};
    if (argc > 1) {
        for (int i = 1; i < argc; ++i) {
            int n = std::atoi(argv[i]);
            if (n >= 1 && n <= 10) all[n - 1]();
        }
    } else {
        for (auto& c : all) c();
    }
    return failures ? 1 : 0;
}
