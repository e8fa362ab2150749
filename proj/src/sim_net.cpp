#include "autobahn/sim_net.hpp"

#include <algorithm>
#include <stdexcept>

namespace autobahn {

class Simulator::Port : public Outbox {
public:
    Port(Simulator* sim, ReplicaId id) : sim_(sim), id_(id) {}
    Time now() const override { return sim_->now_; }
    void send(ReplicaId to, Message m) override { sim_->send(id_, to, std::move(m)); }
    void broadcast(Message m) override {
        for (ReplicaId r = 0; r < sim_->cfg_.q.n; ++r) sim_->send(id_, r, m);
    }
    void set_timer(TimerId id, Time delay) override { sim_->set_timer(id_, id, delay); }
    void cancel_timer(TimerId id) override { sim_->cancel_timer(id_, id); }

private:
    Simulator* sim_;
    ReplicaId id_;
};

Simulator::Simulator(SimConfig cfg, Observer* obs)
    : cfg_(std::move(cfg)), obs_(obs), rng_(cfg_.seed), keys_(cfg_.q.n, cfg_.seed) {
    const auto& q = cfg_.q;
    std::vector<ByzMode> modes(q.n, ByzMode::None);
    uint32_t byz = 0;
    for (const auto& b : cfg_.faults.byzantine) {
        if (b.id >= q.n) throw std::invalid_argument("byzantine replica out of range");
        if (modes[b.id] == ByzMode::None && b.mode != ByzMode::None) ++byz;
        modes[b.id] = b.mode;
    }
    if (byz > q.f) throw std::invalid_argument("more than f byzantine replicas");
    for (const auto& s : cfg_.faults.silences)
        if (s.id >= q.n) throw std::invalid_argument("silent replica out of range");
    for (const auto& p : cfg_.faults.partitions)
        for (const auto& g : p.groups)
            for (auto r : g)
                if (r >= q.n) throw std::invalid_argument("partition member out of range");
    if (!cfg_.delay.matrix.empty()) {
        if (cfg_.delay.matrix.size() != q.n) throw std::invalid_argument("delay matrix must be n x n");
        for (const auto& row : cfg_.delay.matrix)
            if (row.size() != q.n) throw std::invalid_argument("delay matrix must be n x n");
    }

    for (ReplicaId r = 0; r < q.n; ++r) {
        ports_.push_back(std::make_unique<Port>(this, r));
        ReplicaConfig rc = cfg_.replica;
        rc.byz = modes[r];
        replicas_.push_back(std::make_unique<Replica>(r, q, &keys_, rc, ports_.back().get(), obs_));
    }
}

Simulator::~Simulator() = default;

double Simulator::uniform() { return double(rng_() >> 11) * 0x1.0p-53; }

void Simulator::push(Time t, std::variant<Deliver, Fire, Inject, Marker> body) {
    queue_.push(Event{t, seq_++, std::move(body)});
}

void Simulator::start() {
    const auto& f = cfg_.faults;
    for (size_t i = 0; i < f.partitions.size(); ++i) {
        push(f.partitions[i].start, Marker{"partition_start", int(i)});
        push(f.partitions[i].end, Marker{"partition_end", int(i)});
    }
    for (size_t i = 0; i < f.silences.size(); ++i) {
        push(f.silences[i].start, Marker{"silence_start", int(i)});
        push(f.silences[i].end, Marker{"silence_end", int(i)});
    }
    for (auto& r : replicas_) r->start();
}

void Simulator::inject(Time at, ReplicaId r, const Tx& tx) { push(at, Inject{r, tx}); }

bool Simulator::separated(const PartitionFault& p, ReplicaId a, ReplicaId b) const {
    auto group_of = [&](ReplicaId r) {
        for (size_t g = 0; g < p.groups.size(); ++g)
            if (std::find(p.groups[g].begin(), p.groups[g].end(), r) != p.groups[g].end()) return int(g);
        return -1;
    };
    return group_of(a) != group_of(b);
}

void Simulator::send(ReplicaId from, ReplicaId to, Message m) {
    ++stats_.sent;
    if (from == to) {
        push(now_, Deliver{from, to, std::move(m), now_});
        return;
    }
    Time d = cfg_.delay.link(from, to);
    if (cfg_.delay.jitter > 0) d += std::min(cfg_.delay.jitter, Time(uniform() * double(cfg_.delay.jitter + 1)));
    Time at = now_ + d;
    bool held = false;

    for (const auto& s : cfg_.faults.silences) {
        if (s.id != from || now_ < s.start || now_ >= s.end) continue;
        if (s.scope == SilentFault::Scope::Consensus && message_class(m) != MsgClass::Consensus) continue;
        at = std::max(at, s.end + d);
        held = true;
    }
    for (const auto& p : cfg_.faults.partitions) {
        if (now_ < p.start || now_ >= p.end || !separated(p, from, to)) continue;
        if (p.lossy) {
            ++stats_.dropped;
            return;
        }
        at = std::max(at, p.end + d);
        held = true;
    }
    for (const auto& r : cfg_.faults.drops) {
        if (now_ < r.start || now_ >= r.end) continue;
        if ((r.from >= 0 && ReplicaId(r.from) != from) || (r.to >= 0 && ReplicaId(r.to) != to)) continue;
        if (!r.kinds.empty() && std::find(r.kinds.begin(), r.kinds.end(), message_kind(m)) == r.kinds.end()) continue;
        if (r.probability >= 1.0 || uniform() < r.probability) {
            ++stats_.dropped;
            return;
        }
    }
    if (held) ++stats_.held;
    else if (at - now_ > cfg_.delay.delta) ++stats_.late_in_sync;
    push(at, Deliver{from, to, std::move(m), now_});
}

void Simulator::set_timer(ReplicaId r, TimerId id, Time delay) {
    uint64_t g = ++gen_;
    timers_[{r, id}] = g;
    push(now_ + std::max<Time>(delay, 1), Fire{r, id, g});
}

void Simulator::cancel_timer(ReplicaId r, TimerId id) { timers_.erase({r, id}); }

void Simulator::trace(nlohmann::json rec) {
    if (!cfg_.trace) return;
    rec["t"] = now_;
    *cfg_.trace << rec.dump() << '\n';
}

bool Simulator::step() {
    if (queue_.empty()) return false;
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.t;
    ++stats_.events;
    std::visit(
        [&](auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, Deliver>) {
                ++stats_.delivered;
                if (cfg_.trace) {
                    trace({{"ev", "deliver"},
                           {"from", b.from},
                           {"to", b.to},
                           {"kind", message_kind(b.msg)},
                           {"dig", message_digest(b.msg).short_hex()}});
                }
                auto& r = *replicas_[b.to];
                r.deliver(b.from, b.msg);
                r.after_event();
            } else if constexpr (std::is_same_v<T, Fire>) {
                auto it = timers_.find({b.to, b.id});
                if (it == timers_.end() || it->second != b.gen) return;
                timers_.erase(it);
                if (cfg_.trace)
                    trace({{"ev", "timer"}, {"to", b.to}, {"kind", int(b.id.kind)}, {"a", b.id.a}, {"b", b.id.b}});
                auto& r = *replicas_[b.to];
                r.on_timer(b.id);
                r.after_event();
            } else if constexpr (std::is_same_v<T, Inject>) {
                if (cfg_.trace) trace({{"ev", "inject"}, {"to", b.to}, {"tx", b.tx.id}});
                auto& r = *replicas_[b.to];
                r.submit(b.tx);
                r.after_event();
            } else {
                if (cfg_.trace) trace({{"ev", "fault"}, {"what", b.what}, {"index", b.index}});
            }
        },
        ev.body);
    return true;
}

void Simulator::run_until(Time horizon) {
    while (!queue_.empty() && queue_.top().t <= horizon) {
        step();
        if (stop && stop()) return;
    }
    if (now_ < horizon && queue_.empty()) return;
    now_ = std::max(now_, horizon);
}

}  // namespace autobahn
