#pragma once

#include <cstdint>
#include <vector>

#include "fedcip/federation.hpp"
#include "fedcip/model.hpp"

namespace fedcip {

enum class AttackKind { None, Prune, Finetune };

/// What a traitor does to a stolen model before leaking it.
struct AttackSpec {
    AttackKind kind = AttackKind::None;
    double prune_eta = 0.0;   // Prune: fraction of smallest-|w| coordinates zeroed
    int finetune_rounds = 0;  // Finetune: epochs of continued local training
    double finetune_lr = 0.01;
    std::uint64_t seed = 0;
};

/// A stolen model as it leaves the traitor: the cycle snapshot it received,
/// possibly post-attack. Identity fields exist only inside the simulation;
/// the serialized leak deliberately carries none of them.
struct LeakEvent {
    int traitor_id = 0;
    int cycle_index = 0;
    FlatParams model;
    AttackSpec attack;
};

/// Zeroes the floor(eta * len) coordinates of smallest absolute value,
/// ties broken towards the lower index. Biases are ranked like any other
/// coordinate.
FlatParams prune(const FlatParams& params, double eta);

/// Continued training on the attacker's own data shard.
FlatParams finetune(const FlatParams& params, const Dataset& data,
                    std::span<const std::size_t> indices, int rounds, double lr,
                    std::uint64_t seed);

/// Builds the leak for one cycle, applying the attack to a copy; the
/// artifacts' snapshot is untouched. Rejects cycles the traitor was not
/// selected in: a client cannot leak a model it never received.
LeakEvent leak(const RunArtifacts& artifacts, int traitor_id, int cycle_index,
               const AttackSpec& attack, const Dataset* data = nullptr,
               const ClientPartition* partition = nullptr);

/// n distinct cycles sampled from the traitor's participation, ascending.
std::vector<int> plan_traitor_leaks(const std::vector<CycleLog>& logs, int traitor_id,
                                    int n, std::uint64_t seed);

}  // namespace fedcip
