#include "fedcip/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedcip/rng.hpp"

namespace fedcip {

FlatParams prune(const FlatParams& params, double eta) {
    if (eta < 0.0 || eta >= 1.0) throw ParameterError("prune: eta must be in [0, 1)");
    FlatParams out = params;
    const std::size_t n_zero =
        static_cast<std::size_t>(std::floor(eta * static_cast<double>(out.size())));
    if (n_zero == 0) return out;

    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ma = std::fabs(out.values[a]);
        const double mb = std::fabs(out.values[b]);
        return ma != mb ? ma < mb : a < b;
    });
    for (std::size_t i = 0; i < n_zero; ++i) out.values[order[i]] = 0.0;
    return out;
}

FlatParams finetune(const FlatParams& params, const Dataset& data,
                    std::span<const std::size_t> indices, int rounds, double lr,
                    std::uint64_t seed) {
    if (rounds < 1) throw ParameterError("finetune: rounds must be >= 1");
    return train_local(params, data, indices, rounds, lr,
                       mix_seed(seed, {seed_domain::kAttack}));
}

LeakEvent leak(const RunArtifacts& artifacts, int traitor_id, int cycle_index,
               const AttackSpec& attack, const Dataset* data,
               const ClientPartition* partition) {
    const auto snap = artifacts.cycle_snapshots.find(cycle_index);
    if (snap == artifacts.cycle_snapshots.end()) {
        throw ParameterError("leak: no snapshot for cycle " + std::to_string(cycle_index));
    }
    if (static_cast<std::size_t>(cycle_index) >= artifacts.logs.size()) {
        throw ParameterError("leak: no log for cycle " + std::to_string(cycle_index));
    }
    const CycleLog& log = artifacts.logs[cycle_index];
    if (!std::binary_search(log.selected.begin(), log.selected.end(), traitor_id)) {
        throw ProtocolError("client " + std::to_string(traitor_id) +
                            " was not selected in cycle " + std::to_string(cycle_index) +
                            " and cannot leak a model it never received");
    }

    LeakEvent event;
    event.traitor_id = traitor_id;
    event.cycle_index = cycle_index;
    event.attack = attack;
    switch (attack.kind) {
        case AttackKind::None:
            event.model = snap->second;
            break;
        case AttackKind::Prune:
            event.model = prune(snap->second, attack.prune_eta);
            break;
        case AttackKind::Finetune: {
            if (data == nullptr || partition == nullptr) {
                throw ParameterError("leak: fine-tuning needs the traitor's data shard");
            }
            const auto& shard = partition->assignments.at(traitor_id);
            event.model = finetune(snap->second, *data, shard, attack.finetune_rounds,
                                   attack.finetune_lr, attack.seed);
            break;
        }
    }
    return event;
}

std::vector<int> plan_traitor_leaks(const std::vector<CycleLog>& logs, int traitor_id,
                                    int n, std::uint64_t seed) {
    if (n < 1) throw ParameterError("plan_traitor_leaks: need at least one leak");
    std::vector<int> participated;
    for (const CycleLog& log : logs) {
        if (std::binary_search(log.selected.begin(), log.selected.end(), traitor_id)) {
            participated.push_back(log.cycle_index);
        }
    }
    if (participated.size() < static_cast<std::size_t>(n)) {
        throw ScenarioError("traitor " + std::to_string(traitor_id) + " participated in " +
                            std::to_string(participated.size()) + " cycles, cannot leak " +
                            std::to_string(n) + " models");
    }
    Engine eng(mix_seed(seed, {seed_domain::kTracking, static_cast<std::uint64_t>(traitor_id)}));
    const auto picks = eng.sample_without_replacement(participated.size(), n);
    std::vector<int> out;
    out.reserve(n);
    for (std::size_t p : picks) out.push_back(participated[p]);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace fedcip
