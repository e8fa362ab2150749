#pragma once

#include <map>
#include <memory>
#include <ostream>
#include <queue>
#include <random>
#include <string>

#include "autobahn/replica.hpp"
#include "json.hpp"

namespace autobahn {

struct DelayModel {
    Time base = kUnit;                        // used when no matrix is given
    std::vector<std::vector<Time>> matrix;    // optional per ordered pair
    Time jitter = 0;                          // uniform extra delay in [0, jitter]
    Time delta = kUnit;                       // declared bound

    Time link(ReplicaId from, ReplicaId to) const { return matrix.empty() ? base : matrix[from][to]; }
};

struct PartitionFault {
    std::vector<std::vector<ReplicaId>> groups;  // unlisted replicas form one more group
    Time start = 0, end = 0;
    bool lossy = false;                          // drop instead of releasing at heal
};

struct SilentFault {
    enum class Scope { All, Consensus };
    ReplicaId id = 0;
    Time start = 0, end = 0;
    Scope scope = Scope::All;
};

struct DropFault {
    int from = -1, to = -1;  // -1 matches any replica
    double probability = 1.0;
    Time start = 0, end = 0;
    std::vector<std::string> kinds;  // message kinds; empty matches all
};

struct ByzantineFault {
    ReplicaId id = 0;
    ByzMode mode = ByzMode::None;
};

struct FaultSchedule {
    std::vector<PartitionFault> partitions;
    std::vector<SilentFault> silences;
    std::vector<DropFault> drops;
    std::vector<ByzantineFault> byzantine;
};

struct SimConfig {
    QuorumConfig q;
    uint64_t seed = 1;
    DelayModel delay;
    FaultSchedule faults;
    ReplicaConfig replica;
    std::ostream* trace = nullptr;  // NDJSON records, one per event
};

struct SimStats {
    uint64_t events = 0;
    uint64_t sent = 0;
    uint64_t delivered = 0;
    uint64_t dropped = 0;
    uint64_t held = 0;          // delayed by a partition or silence window
    uint64_t late_in_sync = 0;  // unheld deliveries slower than the declared bound
};

class Simulator {
public:
    // Throws std::invalid_argument if more than f replicas are Byzantine or a referenced
    // replica does not exist.
    Simulator(SimConfig cfg, Observer* obs = nullptr);
    ~Simulator();

    void start();
    void inject(Time at, ReplicaId r, const Tx& tx);
    // Processes one event; false when the queue is empty.
    bool step();
    // Runs until the queue is empty, the next event lies beyond `horizon`, or `stop` returns true.
    void run_until(Time horizon);

    Time now() const { return now_; }
    const QuorumConfig& quorum() const { return cfg_.q; }
    Replica& replica(ReplicaId r) { return *replicas_.at(r); }
    const Replica& replica(ReplicaId r) const { return *replicas_.at(r); }
    size_t size() const { return replicas_.size(); }
    const SimStats& stats() const { return stats_; }
    const SimConfig& config() const { return cfg_; }
    const KeyRing& keys() const { return keys_; }
    bool idle() const { return queue_.empty(); }

    // Evaluated after every event; returning true halts the run (checker violations).
    std::function<bool()> stop;
    // Extra trace records from observers; `t` is added.
    void trace(nlohmann::json rec);

private:
    class Port;
    friend class Port;

    struct Deliver {
        ReplicaId from, to;
        Message msg;
        Time sent;
    };
    struct Fire {
        ReplicaId to;
        TimerId id;
        uint64_t gen;
    };
    struct Inject {
        ReplicaId to;
        Tx tx;
    };
    struct Marker {
        std::string what;
        int index;
    };
    struct Event {
        Time t;
        uint64_t seq;
        std::variant<Deliver, Fire, Inject, Marker> body;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const { return a.t != b.t ? a.t > b.t : a.seq > b.seq; }
    };

    void push(Time t, std::variant<Deliver, Fire, Inject, Marker> body);
    void send(ReplicaId from, ReplicaId to, Message m);
    void set_timer(ReplicaId r, TimerId id, Time delay);
    void cancel_timer(ReplicaId r, TimerId id);
    bool separated(const PartitionFault& p, ReplicaId a, ReplicaId b) const;
    double uniform();

    SimConfig cfg_;
    Observer* obs_;
    std::mt19937_64 rng_;
    KeyRing keys_;
    std::vector<std::unique_ptr<Port>> ports_;
    std::vector<std::unique_ptr<Replica>> replicas_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::map<std::pair<ReplicaId, TimerId>, uint64_t> timers_;
    uint64_t seq_ = 0;
    uint64_t gen_ = 0;
    Time now_ = 0;
    SimStats stats_;
};

}  // namespace autobahn
