#pragma once

#include <memory>
#include <vector>

#include "autobahn/data_lane.hpp"

namespace autobahn::test {

// n data-lane instances sharing one key ring; cars are carried around by hand.
struct LaneCluster {
    QuorumConfig q;
    KeyRing keys;
    std::vector<std::unique_ptr<DataLanes>> r;

    explicit LaneCluster(uint32_t n, LaneConfig cfg = {}) : q(quorum_sizes(n)), keys(n, 7) {
        for (ReplicaId i = 0; i < n; ++i) r.push_back(std::make_unique<DataLanes>(i, q, &keys, cfg));
    }

    // Delivers `p` to `to` (everyone when empty) and returns their votes to the author.
    PoAPtr deliver(const ProposalPtr& p, std::vector<ReplicaId> to = {}) {
        if (to.empty())
            for (ReplicaId i = 0; i < q.n; ++i) to.push_back(i);
        PoAPtr poa;
        for (ReplicaId i : to) {
            auto out = r[i]->handle_proposal(p);
            if (auto* v = std::get_if<Vote>(&out))
                if (auto c = r[p->lane]->handle_vote(*v)) poa = c;
        }
        return poa;
    }

    // A certified car from `owner`, seen by everyone.
    ProposalPtr car(ReplicaId owner, std::vector<Tx> batch) {
        auto p = r[owner]->create_proposal(std::move(batch));
        deliver(p);
        return p;
    }
};

inline std::vector<Tx> txs(uint64_t first, size_t count) {
    std::vector<Tx> out;
    for (size_t i = 0; i < count; ++i) out.push_back(Tx{first + i, 64});
    return out;
}

}  // namespace autobahn::test
