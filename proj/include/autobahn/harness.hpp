#pragma once

#include <stdexcept>
#include <string>

#include "autobahn/sim_net.hpp"

namespace autobahn {

// ---- scenarios ----

struct LoadSpec {
    enum class Kind { Fixed, Poisson };
    double rate = 1.0;             // transactions per Δ per lane
    Kind kind = Kind::Fixed;
    Time start = 0;
    Time end = -1;                 // -1: until the horizon
    uint32_t tx_size = 512;
    std::vector<ReplicaId> lanes;  // empty: every replica
};

struct Scenario {
    static constexpr int kVersion = 1;
    std::string name = "unnamed";
    uint32_t n = 4;
    uint64_t seed = 1;
    Time horizon = 200 * kUnit;
    DelayModel delay;
    LoadSpec load;
    FaultSchedule faults;
    ReplicaConfig replica;

    QuorumConfig quorum() const { return quorum_sizes(n); }
};

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string path, const std::string& reason)
        : std::runtime_error(path + ": " + reason), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// Strict parse: unknown keys, wrong types and out-of-range values raise ScenarioError
// naming the offending JSON path. Times are given in units of Δ.
Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario_file(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& s);
void validate_scenario(const Scenario& s);

// ---- observers ----

class ObserverList : public Observer {
public:
    void add(Observer* o) { list_.push_back(o); }
    void car_voted(ReplicaId r, const Vote& v) override;
    void poa_accepted(ReplicaId r, const ProofOfAvailability& p, bool sound) override;
    void prepared(ReplicaId r, const SignedCut& p) override;
    void prep_voted(ReplicaId r, const PrepVote& v) override;
    void confirm_acked(ReplicaId r, const ConfirmAck& a) override;
    void prepare_qc(ReplicaId r, const PrepareQC& qc) override;
    void commit_qc(ReplicaId r, const CommitQC& qc) override;
    void committed(ReplicaId r, const CommitQC& qc) override;
    void timeout_cert(ReplicaId r, const TimeoutCert& tc) override;
    void view_entered(ReplicaId r, SlotNum s, ViewNum v) override;
    void finalized(ReplicaId r, const std::vector<LogEntry>& e) override;
    void sync_done(ReplicaId r, const SyncRecord& rec) override;

private:
    std::vector<Observer*> list_;
};

// Omniscient cross-replica invariant checks. Byzantine replicas are exempt from the
// per-replica rules but their certificates still count for uniqueness.
class SafetyChecker : public Observer {
public:
    SafetyChecker(const Simulator* sim, LaneConfig lane) : sim_(sim), batch_cap_(lane.batch_cap) {}
    void bind(const Simulator* sim) { sim_ = sim; }

    void car_voted(ReplicaId r, const Vote& v) override;
    void poa_accepted(ReplicaId r, const ProofOfAvailability& p, bool sound) override;
    void prep_voted(ReplicaId r, const PrepVote& v) override;
    void confirm_acked(ReplicaId r, const ConfirmAck& a) override;
    void prepare_qc(ReplicaId r, const PrepareQC& qc) override;
    void commit_qc(ReplicaId r, const CommitQC& qc) override;
    void committed(ReplicaId r, const CommitQC& qc) override;
    void finalized(ReplicaId r, const std::vector<LogEntry>& e) override;

    // Bounded-waste check over every correct replica; call after each event.
    void check_waste();

    bool ok() const { return violations_.empty(); }
    const std::vector<std::string>& violations() const { return violations_; }
    uint64_t max_waste() const { return max_waste_; }
    size_t reference_log_size() const { return reference_.size(); }

private:
    bool correct(ReplicaId r) const;
    void fail(const std::string& what);
    void certify(const char* what, SlotNum s, ViewNum v, const Digest& d);

    const Simulator* sim_;
    uint32_t batch_cap_;
    std::vector<std::string> violations_;
    std::map<std::pair<SlotNum, ViewNum>, Digest> certified_;
    std::map<SlotNum, std::pair<ViewNum, Digest>> committed_;
    std::map<SlotNum, std::vector<std::pair<ViewNum, Digest>>> votes_;  // correct prep-votes
    std::map<std::tuple<ReplicaId, SlotNum, ViewNum>, int> prep_votes_, acks_;
    std::map<std::pair<ReplicaId, ReplicaId>, LanePos> last_car_vote_;
    std::vector<std::tuple<ReplicaId, LanePos, Digest>> reference_;
    std::map<ReplicaId, size_t> log_len_;
    uint64_t max_waste_ = 0;
};

// ---- metrics ----

struct TxRecord {
    uint64_t id = 0;
    ReplicaId lane = 0;
    Time inject = 0;
    Time first_final = -1;  // first correct replica
    Time final_all = -1;    // last correct replica
    uint32_t finals = 0;
};

class MetricsCollector : public Observer {
public:
    explicit MetricsCollector(const Simulator* sim) : sim_(sim) {}
    void bind(const Simulator* sim) { sim_ = sim; }
    void injected(uint64_t id, ReplicaId lane, Time at);
    void committed(ReplicaId r, const CommitQC& qc) override;
    void finalized(ReplicaId r, const std::vector<LogEntry>& e) override;
    void sync_done(ReplicaId r, const SyncRecord& rec) override;

    const std::vector<TxRecord>& txs() const { return txs_; }
    const std::map<SlotNum, ViewNum>& commit_views() const { return commit_view_; }
    const std::map<SlotNum, Time>& commit_times() const { return commit_time_; }
    const std::vector<std::pair<ReplicaId, SyncRecord>>& syncs() const { return syncs_; }
    uint64_t duplicate_finals() const { return duplicates_; }
    uint64_t unknown_finals() const { return unknown_; }

private:
    const Simulator* sim_;
    std::vector<TxRecord> txs_;
    std::unordered_map<uint64_t, size_t> index_;
    std::map<ReplicaId, std::set<uint64_t>> seen_;
    std::map<SlotNum, ViewNum> commit_view_;
    std::map<SlotNum, Time> commit_time_;
    std::vector<std::pair<ReplicaId, SyncRecord>> syncs_;
    uint64_t duplicates_ = 0;
    uint64_t unknown_ = 0;
};

struct Hangover {
    Time drain = 0;         // blip end until every tx injected before the blip end is finalized
    Time first_excess = 0;  // latency of the first post-blip tx minus steady state
    Time recovery = 0;      // blip end until a window's median latency is within 10% of steady state
    Time steady = 0;        // median latency before the blip
};

// One slow-path consensus instance (5 md) plus one sync exchange (2 md).
constexpr Time kHangoverBound = 7 * kUnit;

Hangover measure_hangover(const std::vector<TxRecord>& txs, Time blip_start, Time blip_end, Time window);

struct LivenessReport {
    bool ok = true;
    uint64_t eligible = 0;   // correct-lane txs injected before horizon - margin
    uint64_t unfinished = 0;
    ViewNum worst_view = 0;
    std::map<SlotNum, ViewNum> views;
};

LivenessReport check_liveness(const std::vector<TxRecord>& txs, const std::map<SlotNum, ViewNum>& views,
                              const Simulator& sim, Time horizon, Time margin);

struct Conservation {
    uint64_t injected = 0, finalized = 0, pending = 0, byzantine_lost = 0;
    uint64_t duplicates = 0, unknown = 0;
    bool ok = false;
};

// ---- running ----

struct RunOptions {
    std::ostream* trace = nullptr;
    bool abort_on_violation = true;
    bool check_waste = true;
    Time liveness_margin = -1;  // -1: 3 view timers + 20Δ
};

struct RunResult {
    Scenario scenario;
    std::vector<TxRecord> txs;
    std::vector<std::string> violations;
    SimStats stats;
    LivenessReport liveness;
    Conservation conservation;
    std::vector<std::pair<std::string, Hangover>> hangovers;
    std::map<SlotNum, ViewNum> commit_views;
    std::vector<std::pair<ReplicaId, SyncRecord>> syncs;
    uint64_t max_waste = 0;
    SlotNum finalized_slots = 0;  // minimum over correct replicas
    size_t log_entries = 0;

    bool ok() const { return violations.empty() && conservation.ok; }
    nlohmann::json summary() const;
    std::string metrics_csv() const;
};

// Schedules the scenario's client load into a simulator. Returns injected txs (id, lane, time).
std::vector<std::tuple<uint64_t, ReplicaId, Time>> plan_load(const Scenario& s);

RunResult run_scenario(const Scenario& s, const RunOptions& opt = {});

// ---- verification suites ----

enum class Mutation { None, DoubleVote, WinnerRule };

struct SuiteReport {
    std::string suite;
    uint64_t runs = 0;
    uint64_t failures = 0;
    std::vector<Scenario> counterexamples;  // first few failing scenarios
    nlohmann::json details;
    bool ok() const { return failures == 0; }
};

Scenario random_safety_scenario(uint32_t n, uint64_t seed);
Scenario random_liveness_scenario(uint32_t n, uint64_t seed);
void apply_mutation(Scenario& s, Mutation m);

SuiteReport verify_safety(uint64_t seeds, Mutation m = Mutation::None, unsigned threads = 0);
SuiteReport verify_liveness(uint64_t seeds, Mutation m = Mutation::None, unsigned threads = 0);
SuiteReport verify_seamless(Mutation m = Mutation::None);
SuiteReport verify_viewchange(uint64_t runs, Mutation m = Mutation::None);

// One randomized view-change history on a single slot. Returns the number of times the
// selected winner contradicted an already committed value.
struct FuzzOutcome {
    bool committed = false;
    uint32_t violations = 0;
    uint32_t views = 0;
};
FuzzOutcome view_change_fuzz(uint32_t n, uint64_t seed, bool mutated = false, std::ostream* log = nullptr);

// Scenario for leader-silence blips used by the seamless suite.
Scenario blip_scenario(Time blip_len, uint64_t seed = 1);

}  // namespace autobahn
