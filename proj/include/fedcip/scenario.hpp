#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcip/federation.hpp"
#include "fedcip/model.hpp"

namespace fedcip {

/// Where a scenario's data comes from: seeded synthetic blobs, or IDX image
/// files on disk. For synthetic data one pool of train+test samples is drawn
/// and split, so both sides share the same class geometry.
struct DatasetConfig {
    enum class Source { Synthetic, Idx };
    Source source = Source::Synthetic;
    int train_samples = 400;
    int test_samples = 200;
    int features = 20;
    int classes = 4;
    std::string train_images;
    std::string train_labels;
    std::string test_images;  // optional; accuracy falls back to training data
    std::string test_labels;
};

/// Attack grid evaluated against the final cycle snapshot after a run.
struct AttackGridConfig {
    std::vector<double> prune_etas;
    std::vector<int> finetune_rounds;

    bool empty() const { return prune_etas.empty() && finetune_rounds.empty(); }
};

/// One experiment, fully determined by this document plus nothing else.
/// The seed is mandatory; there are no wall-clock defaults anywhere.
struct ScenarioConfig {
    std::uint64_t seed = 0;
    FederationConfig federation;
    DatasetConfig dataset;
    PartitionMode partition_mode = PartitionMode::Iid;
    AttackGridConfig attacks;
    std::string output_dir = "out";
};

/// Parses and validates a scenario document. Errors name the offending
/// field, e.g. "federation.rounds: expected a positive integer".
ScenarioConfig parse_scenario(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

/// Materialized data for a run.
struct ScenarioData {
    Dataset train;
    std::optional<Dataset> test;
    ClientPartition partition;

    const Dataset* test_ptr() const { return test.has_value() ? &*test : nullptr; }
};

ScenarioData prepare_data(const ScenarioConfig& cfg);

/// prepare_data + run_training.
RunArtifacts run_scenario(const ScenarioConfig& cfg);

/// Result of one attack-grid cell.
struct AttackGridRow {
    std::string attack;
    double parameter = 0.0;
    double wmdacc = 0.0;
    double accuracy = 0.0;
    int identified_cycle = -1;
    int true_cycle = -1;
};

/// Applies the configured attack grid to the final cycle snapshot and scores
/// each attacked model against the run's own logs.
std::vector<AttackGridRow> run_attack_grid(const ScenarioConfig& cfg,
                                           const RunArtifacts& artifacts,
                                           const ScenarioData& data);

void save_attack_grid_csv(const std::vector<AttackGridRow>& rows,
                          const std::filesystem::path& path);

}  // namespace fedcip
