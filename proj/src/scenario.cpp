#include <cmath>
#include <fstream>

#include "autobahn/harness.hpp"

namespace autobahn {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ScenarioError(path, "expected object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) known = known || it.key() == a;
        if (!known) throw ScenarioError(path + "." + it.key(), "unknown field");
    }
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ScenarioError(path, "expected number");
    double v = j.get<double>();
    if (!std::isfinite(v)) throw ScenarioError(path, "not finite");
    return v;
}

uint64_t integer(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<int64_t>() < 0) throw ScenarioError(path, "expected non-negative integer");
    return j.get<uint64_t>();
}

bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ScenarioError(path, "expected boolean");
    return j.get<bool>();
}

std::string text(const json& j, const std::string& path) {
    if (!j.is_string()) throw ScenarioError(path, "expected string");
    return j.get<std::string>();
}

Time duration(const json& j, const std::string& path) {
    double v = number(j, path);
    if (v < 0) throw ScenarioError(path, "must be >= 0");
    return units(v);
}

ReplicaId replica_ref(const json& j, const std::string& path, uint32_t n) {
    auto r = integer(j, path);
    if (r >= n) throw ScenarioError(path, "replica " + std::to_string(r) + " does not exist");
    return ReplicaId(r);
}

double in_delta(Time t) { return to_units(t); }

}  // namespace

Scenario parse_scenario(const json& j) {
    only_keys(j, "$", {"version", "name", "n", "seed", "horizon", "delay", "load", "protocol", "faults"});
    if (!j.contains("version")) throw ScenarioError("$.version", "missing");
    if (integer(j["version"], "$.version") != Scenario::kVersion)
        throw ScenarioError("$.version", "unsupported version");
    Scenario s;
    if (j.contains("name")) s.name = text(j["name"], "$.name");
    if (j.contains("n")) s.n = uint32_t(integer(j["n"], "$.n"));
    QuorumConfig q;
    try {
        q = quorum_sizes(s.n);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("$.n", e.what());
    }
    if (j.contains("seed")) s.seed = integer(j["seed"], "$.seed");
    if (j.contains("horizon")) s.horizon = duration(j["horizon"], "$.horizon");

    if (j.contains("delay")) {
        const auto& d = j["delay"];
        only_keys(d, "$.delay", {"base", "jitter", "delta", "matrix"});
        if (d.contains("base")) s.delay.base = duration(d["base"], "$.delay.base");
        if (d.contains("jitter")) s.delay.jitter = duration(d["jitter"], "$.delay.jitter");
        if (d.contains("delta")) s.delay.delta = duration(d["delta"], "$.delay.delta");
        if (d.contains("matrix")) {
            const auto& m = d["matrix"];
            if (!m.is_array() || m.size() != s.n) throw ScenarioError("$.delay.matrix", "expected n x n array");
            for (size_t a = 0; a < m.size(); ++a) {
                std::string p = "$.delay.matrix[" + std::to_string(a) + "]";
                if (!m[a].is_array() || m[a].size() != s.n) throw ScenarioError(p, "expected n entries");
                std::vector<Time> row;
                for (size_t b = 0; b < s.n; ++b) row.push_back(duration(m[a][b], p + "[" + std::to_string(b) + "]"));
                s.delay.matrix.push_back(std::move(row));
            }
        }
    }
    Time delta = s.delay.delta;
    auto& cc = s.replica.consensus;
    cc.view_timer = 10 * delta;
    cc.fast_wait = delta / 5;
    s.replica.ordering.sync_timeout = 2 * delta;

    if (j.contains("load")) {
        const auto& l = j["load"];
        only_keys(l, "$.load", {"rate", "mode", "start", "end", "tx_size", "lanes"});
        if (l.contains("rate")) {
            s.load.rate = number(l["rate"], "$.load.rate");
            if (s.load.rate < 0) throw ScenarioError("$.load.rate", "must be >= 0");
        }
        if (l.contains("mode")) {
            auto m = text(l["mode"], "$.load.mode");
            if (m == "fixed") s.load.kind = LoadSpec::Kind::Fixed;
            else if (m == "poisson") s.load.kind = LoadSpec::Kind::Poisson;
            else throw ScenarioError("$.load.mode", "expected fixed|poisson");
        }
        if (l.contains("start")) s.load.start = duration(l["start"], "$.load.start");
        if (l.contains("end") && !l["end"].is_null()) s.load.end = duration(l["end"], "$.load.end");
        if (l.contains("tx_size")) s.load.tx_size = uint32_t(integer(l["tx_size"], "$.load.tx_size"));
        if (l.contains("lanes")) {
            if (!l["lanes"].is_array()) throw ScenarioError("$.load.lanes", "expected array");
            for (size_t i = 0; i < l["lanes"].size(); ++i)
                s.load.lanes.push_back(replica_ref(l["lanes"][i], "$.load.lanes[" + std::to_string(i) + "]", s.n));
        }
    }

    if (j.contains("protocol")) {
        const auto& p = j["protocol"];
        only_keys(p, "$.protocol",
                  {"mode", "k", "coverage", "fast_path", "fast_wait", "optimistic_tips", "leader_tips", "view_timer",
                   "batch_size", "tx_size_cap", "buffer_cap", "standalone_poa", "sync_timeout", "schedule",
                   "view_buffer_cap"});
        if (p.contains("mode")) {
            auto m = text(p["mode"], "$.protocol.mode");
            if (m == "parallel") cc.mode = Mode::Parallel;
            else if (m == "sequential") cc.mode = Mode::Sequential;
            else throw ScenarioError("$.protocol.mode", "expected sequential|parallel");
        }
        if (p.contains("k")) {
            cc.k = uint32_t(integer(p["k"], "$.protocol.k"));
            if (cc.k == 0) throw ScenarioError("$.protocol.k", "must be >= 1");
        }
        if (p.contains("coverage") && !p["coverage"].is_null()) {
            cc.coverage = uint32_t(integer(p["coverage"], "$.protocol.coverage"));
            if (cc.coverage == 0 || cc.coverage > s.n) throw ScenarioError("$.protocol.coverage", "must be in 1..n");
        }
        if (p.contains("fast_path")) cc.fast_path = boolean(p["fast_path"], "$.protocol.fast_path");
        if (p.contains("fast_wait")) cc.fast_wait = duration(p["fast_wait"], "$.protocol.fast_wait");
        if (p.contains("optimistic_tips")) cc.optimistic_tips = boolean(p["optimistic_tips"], "$.protocol.optimistic_tips");
        if (p.contains("leader_tips")) cc.leader_tips = boolean(p["leader_tips"], "$.protocol.leader_tips");
        if (p.contains("view_timer")) {
            cc.view_timer = duration(p["view_timer"], "$.protocol.view_timer");
            if (cc.view_timer <= 0) throw ScenarioError("$.protocol.view_timer", "must be > 0");
        }
        if (p.contains("batch_size")) {
            s.replica.lane.batch_cap = uint32_t(integer(p["batch_size"], "$.protocol.batch_size"));
            if (s.replica.lane.batch_cap == 0) throw ScenarioError("$.protocol.batch_size", "must be >= 1");
        }
        if (p.contains("tx_size_cap")) s.replica.lane.tx_size_cap = uint32_t(integer(p["tx_size_cap"], "$.protocol.tx_size_cap"));
        if (p.contains("buffer_cap")) s.replica.lane.buffer_cap = integer(p["buffer_cap"], "$.protocol.buffer_cap");
        if (p.contains("view_buffer_cap")) cc.view_buffer_cap = integer(p["view_buffer_cap"], "$.protocol.view_buffer_cap");
        if (p.contains("standalone_poa")) s.replica.standalone_poa = boolean(p["standalone_poa"], "$.protocol.standalone_poa");
        if (p.contains("sync_timeout")) {
            s.replica.ordering.sync_timeout = duration(p["sync_timeout"], "$.protocol.sync_timeout");
            if (s.replica.ordering.sync_timeout <= 0) throw ScenarioError("$.protocol.sync_timeout", "must be > 0");
        }
        if (p.contains("schedule")) {
            auto m = text(p["schedule"], "$.protocol.schedule");
            if (m == "offset") cc.schedule = LeaderSchedule::Offset;
            else if (m == "unshifted") cc.schedule = LeaderSchedule::Unshifted;
            else throw ScenarioError("$.protocol.schedule", "expected offset|unshifted");
        }
    }

    if (j.contains("faults")) {
        const auto& f = j["faults"];
        only_keys(f, "$.faults", {"partitions", "silent", "drops", "byzantine"});
        auto window = [&](const json& e, const std::string& p, Time& start, Time& end) {
            if (!e.contains("start") || !e.contains("end")) throw ScenarioError(p, "start and end required");
            start = duration(e["start"], p + ".start");
            end = duration(e["end"], p + ".end");
            if (end <= start) throw ScenarioError(p + ".end", "must be after start");
        };
        auto list = [&](const char* key) -> const json& {
            const auto& a = f[key];
            if (!a.is_array()) throw ScenarioError(std::string("$.faults.") + key, "expected array");
            return a;
        };
        if (f.contains("partitions"))
            for (size_t i = 0; const auto& e : list("partitions")) {
                std::string p = "$.faults.partitions[" + std::to_string(i++) + "]";
                only_keys(e, p, {"groups", "start", "end", "lossy"});
                PartitionFault pf;
                window(e, p, pf.start, pf.end);
                if (!e.contains("groups") || !e["groups"].is_array()) throw ScenarioError(p + ".groups", "expected array");
                for (size_t g = 0; g < e["groups"].size(); ++g) {
                    std::string gp = p + ".groups[" + std::to_string(g) + "]";
                    if (!e["groups"][g].is_array()) throw ScenarioError(gp, "expected array");
                    std::vector<ReplicaId> grp;
                    for (size_t m = 0; m < e["groups"][g].size(); ++m)
                        grp.push_back(replica_ref(e["groups"][g][m], gp + "[" + std::to_string(m) + "]", s.n));
                    pf.groups.push_back(std::move(grp));
                }
                if (e.contains("lossy")) pf.lossy = boolean(e["lossy"], p + ".lossy");
                s.faults.partitions.push_back(std::move(pf));
            }
        if (f.contains("silent"))
            for (size_t i = 0; const auto& e : list("silent")) {
                std::string p = "$.faults.silent[" + std::to_string(i++) + "]";
                only_keys(e, p, {"replica", "start", "end", "scope"});
                SilentFault sf;
                if (!e.contains("replica")) throw ScenarioError(p + ".replica", "missing");
                sf.id = replica_ref(e["replica"], p + ".replica", s.n);
                window(e, p, sf.start, sf.end);
                if (e.contains("scope")) {
                    auto sc = text(e["scope"], p + ".scope");
                    if (sc == "all") sf.scope = SilentFault::Scope::All;
                    else if (sc == "consensus") sf.scope = SilentFault::Scope::Consensus;
                    else throw ScenarioError(p + ".scope", "expected all|consensus");
                }
                s.faults.silences.push_back(sf);
            }
        if (f.contains("drops"))
            for (size_t i = 0; const auto& e : list("drops")) {
                std::string p = "$.faults.drops[" + std::to_string(i++) + "]";
                only_keys(e, p, {"from", "to", "probability", "start", "end", "kinds"});
                DropFault df;
                if (e.contains("from") && !e["from"].is_null()) df.from = int(replica_ref(e["from"], p + ".from", s.n));
                if (e.contains("to") && !e["to"].is_null()) df.to = int(replica_ref(e["to"], p + ".to", s.n));
                if (e.contains("probability")) {
                    df.probability = number(e["probability"], p + ".probability");
                    if (df.probability < 0 || df.probability > 1) throw ScenarioError(p + ".probability", "must be in [0,1]");
                }
                window(e, p, df.start, df.end);
                if (e.contains("kinds")) {
                    if (!e["kinds"].is_array()) throw ScenarioError(p + ".kinds", "expected array");
                    for (size_t k = 0; k < e["kinds"].size(); ++k)
                        df.kinds.push_back(text(e["kinds"][k], p + ".kinds[" + std::to_string(k) + "]"));
                }
                s.faults.drops.push_back(std::move(df));
            }
        if (f.contains("byzantine"))
            for (size_t i = 0; const auto& e : list("byzantine")) {
                std::string p = "$.faults.byzantine[" + std::to_string(i++) + "]";
                only_keys(e, p, {"replica", "mode"});
                ByzantineFault bf;
                if (!e.contains("replica")) throw ScenarioError(p + ".replica", "missing");
                bf.id = replica_ref(e["replica"], p + ".replica", s.n);
                auto m = e.contains("mode") ? text(e["mode"], p + ".mode") : std::string("equivocate");
                if (m == "equivocate") bf.mode = ByzMode::Equivocate;
                else if (m == "withhold_data") bf.mode = ByzMode::WithholdData;
                else if (m == "leader_tip_abuse") bf.mode = ByzMode::LeaderTipAbuse;
                else throw ScenarioError(p + ".mode", "expected equivocate|withhold_data|leader_tip_abuse");
                s.faults.byzantine.push_back(bf);
            }
    }
    validate_scenario(s);
    return s;
}

void validate_scenario(const Scenario& s) {
    QuorumConfig q;
    try {
        q = quorum_sizes(s.n);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("$.n", e.what());
    }
    if (s.horizon <= 0) throw ScenarioError("$.horizon", "must be > 0");
    if (s.delay.base <= 0 && s.delay.matrix.empty()) throw ScenarioError("$.delay.base", "must be > 0");
    if (s.delay.delta <= 0) throw ScenarioError("$.delay.delta", "must be > 0");
    Time worst = s.delay.base;
    for (const auto& row : s.delay.matrix)
        for (Time t : row) worst = std::max(worst, t);
    if (worst + s.delay.jitter > s.delay.delta) throw ScenarioError("$.delay", "base + jitter exceeds declared delta");
    auto past = [&](Time end, const std::string& p) {
        if (end >= s.horizon) throw ScenarioError(p, "schedule entry ends at or past the horizon");
    };
    for (size_t i = 0; i < s.faults.partitions.size(); ++i)
        past(s.faults.partitions[i].end, "$.faults.partitions[" + std::to_string(i) + "].end");
    for (size_t i = 0; i < s.faults.silences.size(); ++i)
        past(s.faults.silences[i].end, "$.faults.silent[" + std::to_string(i) + "].end");
    for (size_t i = 0; i < s.faults.drops.size(); ++i)
        past(s.faults.drops[i].end, "$.faults.drops[" + std::to_string(i) + "].end");
    std::set<ReplicaId> byz;
    for (const auto& b : s.faults.byzantine) byz.insert(b.id);
    if (byz.size() > q.f) throw ScenarioError("$.faults.byzantine", "more than f byzantine replicas");
    if (s.load.end >= 0 && s.load.end < s.load.start) throw ScenarioError("$.load.end", "before start");
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path, "cannot open");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError("$", std::string("invalid JSON: ") + e.what());
    }
    return parse_scenario(j);
}

json scenario_to_json(const Scenario& s) {
    const auto& cc = s.replica.consensus;
    json j;
    j["version"] = Scenario::kVersion;
    j["name"] = s.name;
    j["n"] = s.n;
    j["seed"] = s.seed;
    j["horizon"] = in_delta(s.horizon);
    j["delay"] = {{"base", in_delta(s.delay.base)}, {"jitter", in_delta(s.delay.jitter)}, {"delta", in_delta(s.delay.delta)}};
    if (!s.delay.matrix.empty()) {
        json m = json::array();
        for (const auto& row : s.delay.matrix) {
            json r = json::array();
            for (Time t : row) r.push_back(in_delta(t));
            m.push_back(r);
        }
        j["delay"]["matrix"] = m;
    }
    j["load"] = {{"rate", s.load.rate},
                 {"mode", s.load.kind == LoadSpec::Kind::Fixed ? "fixed" : "poisson"},
                 {"start", in_delta(s.load.start)},
                 {"end", s.load.end < 0 ? json(nullptr) : json(in_delta(s.load.end))},
                 {"tx_size", s.load.tx_size}};
    if (!s.load.lanes.empty()) j["load"]["lanes"] = s.load.lanes;
    j["protocol"] = {{"mode", cc.mode == Mode::Parallel ? "parallel" : "sequential"},
                     {"k", cc.k},
                     {"coverage", cc.coverage == 0 ? json(nullptr) : json(cc.coverage)},
                     {"fast_path", cc.fast_path},
                     {"fast_wait", in_delta(cc.fast_wait)},
                     {"optimistic_tips", cc.optimistic_tips},
                     {"leader_tips", cc.leader_tips},
                     {"view_timer", in_delta(cc.view_timer)},
                     {"batch_size", s.replica.lane.batch_cap},
                     {"tx_size_cap", s.replica.lane.tx_size_cap},
                     {"buffer_cap", s.replica.lane.buffer_cap},
                     {"view_buffer_cap", cc.view_buffer_cap},
                     {"standalone_poa", s.replica.standalone_poa},
                     {"sync_timeout", in_delta(s.replica.ordering.sync_timeout)},
                     {"schedule", cc.schedule == LeaderSchedule::Offset ? "offset" : "unshifted"}};
    json f = json::object();
    f["partitions"] = json::array();
    for (const auto& p : s.faults.partitions)
        f["partitions"].push_back(
            {{"groups", p.groups}, {"start", in_delta(p.start)}, {"end", in_delta(p.end)}, {"lossy", p.lossy}});
    f["silent"] = json::array();
    for (const auto& x : s.faults.silences)
        f["silent"].push_back({{"replica", x.id},
                               {"start", in_delta(x.start)},
                               {"end", in_delta(x.end)},
                               {"scope", x.scope == SilentFault::Scope::All ? "all" : "consensus"}});
    f["drops"] = json::array();
    for (const auto& d : s.faults.drops) {
        json e = {{"probability", d.probability}, {"start", in_delta(d.start)}, {"end", in_delta(d.end)}};
        if (d.from >= 0) e["from"] = d.from;
        if (d.to >= 0) e["to"] = d.to;
        if (!d.kinds.empty()) e["kinds"] = d.kinds;
        f["drops"].push_back(e);
    }
    f["byzantine"] = json::array();
    for (const auto& b : s.faults.byzantine) f["byzantine"].push_back({{"replica", b.id}, {"mode", to_string(b.mode)}});
    j["faults"] = f;
    return j;
}

}  // namespace autobahn
