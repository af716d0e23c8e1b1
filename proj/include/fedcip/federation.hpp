#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "fedcip/model.hpp"
#include "fedcip/watermark.hpp"

namespace fedcip {

/// Run parameters of one federation. The server's entire role is client
/// selection, averaging and logging; it never touches individual parameters,
/// so the scheme stays compatible with encrypted aggregation.
struct FederationConfig {
    int clients = 10;            // K
    double selection_rate = 0.5; // C, fraction selected per cycle
    int rounds = 30;
    WatermarkConfig wm;
    double lr = 0.01;
    int local_epochs = 2;
    int batch_size = 32;
    std::vector<int> hidden_layers = {128, 128};
    std::uint64_t master_seed = 0;
    bool embed_watermarks = true;

    int selected_per_cycle() const;
    int num_cycles() const;  // ceil(rounds / cycle_length); final cycle may be short
    void validate() const;
};

/// Server-side record of one cycle: who participated, which watermark each
/// participant embedded and where. This log is the whole evidence base for
/// verification and tracking.
struct CycleLog {
    int cycle_index = 0;
    std::vector<int> selected;                // ascending
    std::map<int, Watermark> watermarks;      // client id -> FWM of this cycle
    std::map<int, SlotSet> slot_sets;         // client id -> fixed positions
    Watermark federated_watermark;            // concatenation, ascending id

    bool operator==(const CycleLog& other) const = default;
};

/// Accuracy and detection trace, one row per round.
struct RoundMetric {
    int round = 0;
    double accuracy = 0.0;
    int cycle = 0;
    double wmdacc = 0.0;

    bool operator==(const RoundMetric& other) const = default;
};

/// Everything a finished run leaves behind.
struct RunArtifacts {
    FederationConfig config;
    FlatParams final_model;
    std::map<int, FlatParams> cycle_snapshots;  // cycle index -> global at cycle end
    std::vector<CycleLog> logs;
    std::vector<RoundMetric> metrics;
    RegionPartition regions;
};

/// Observer invoked after every aggregation with the raw client submissions;
/// lets tests assert that the global model is exactly their mean.
using RoundObserver = std::function<void(int round, const std::vector<FlatParams>& submissions,
                                         const FlatParams& aggregated)>;

/// The round(C*K) clients of one cycle, ascending, resampled per cycle.
std::vector<int> select_clients(int num_clients, double selection_rate, int cycle_index,
                                std::uint64_t master_seed);

/// Coordinate-wise mean with equal client weights.
FlatParams fedavg(const std::vector<FlatParams>& models);

/// Identical copies of the global model, one per selected client. Clients
/// outside the selection receive nothing this cycle.
std::vector<FlatParams> distribute_model(const FlatParams& global,
                                         const std::vector<int>& selected);

/// One round: each selected client trains its copy on its shard and embeds
/// its cycle watermark (replacement rule in the cycle's first round,
/// reinforcement rule afterwards); the server averages the submissions.
FlatParams run_round(const FlatParams& global, const CycleLog& cycle,
                     bool first_round_of_cycle, int round_index,
                     const FederationConfig& cfg, const Dataset& data,
                     const ClientPartition& partition, RoundObserver observer = nullptr);

/// Runs all rounds grouped into cycles: fresh selection and federated
/// watermark per cycle, snapshot and log at every cycle end. Accuracy is
/// measured on test_data when given, otherwise on the training data.
RunArtifacts run_training(const FederationConfig& cfg, const Dataset& data,
                          const ClientPartition& partition,
                          const Dataset* test_data = nullptr,
                          RoundObserver observer = nullptr);

/// Reconstruction helpers: together with the config these rebuild every
/// logged selection, slot set and watermark from the master seed alone.
std::vector<int> reconstruct_selection(const FederationConfig& cfg, int cycle_index);
Watermark reconstruct_watermark(const FederationConfig& cfg, int cycle_index, int client_id);
RegionPartition reconstruct_regions(const FederationConfig& cfg, const ModelArch& arch);
SlotSet reconstruct_slots(const FederationConfig& cfg, const ModelArch& arch, int client_id);

/// The watermark a given model currently carries in the logged slot
/// positions of one cycle, concatenated in ascending client-id order.
Watermark observed_federated_watermark(const FlatParams& model, const CycleLog& log);

/// Per-cycle detection score: the federated watermark's detection accuracy
/// right after the cycle's replacement round. Later rounds of a cycle
/// reinforce the watermark and mask replacement failures, so this is the
/// score that exposes mis-tuned embedding strengths.
double replacement_detection(const RunArtifacts& artifacts, int cycle_index);

/// Mean replacement detection over the final `window` cycles of a run.
double tail_replacement_detection(const RunArtifacts& artifacts, int window = 5);

/// Architecture used by a run: input width, configured hidden layers, one
/// output per class.
ModelArch build_arch(const FederationConfig& cfg, const Dataset& data);

}  // namespace fedcip
