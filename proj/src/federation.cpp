#include "fedcip/federation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcip/rng.hpp"

namespace fedcip {

int FederationConfig::selected_per_cycle() const {
    return static_cast<int>(std::lround(selection_rate * clients));
}

int FederationConfig::num_cycles() const {
    return (rounds + wm.cycle_length - 1) / wm.cycle_length;
}

void FederationConfig::validate() const {
    if (clients < 1) throw ConfigError("config: need at least one client");
    if (selection_rate <= 0.0 || selection_rate > 1.0) {
        throw ConfigError("config: selection rate must be in (0, 1]");
    }
    if (rounds < 1) throw ConfigError("config: need at least one round");
    if (lr <= 0.0) throw ConfigError("config: learning rate must be positive");
    if (local_epochs < 1) throw ConfigError("config: local epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch size must be >= 1");
    wm.validate();
    const int n = selected_per_cycle();
    if (n < 1) throw ConfigError("config: selection rate rounds to zero clients");
    if (n > clients) throw ConfigError("config: selection exceeds client count");
    for (int h : hidden_layers) {
        if (h < 1) throw ConfigError("config: hidden layer sizes must be >= 1");
    }
}

std::vector<int> select_clients(int num_clients, double selection_rate, int cycle_index,
                                std::uint64_t master_seed) {
    if (num_clients < 1) throw ConfigError("select_clients: need at least one client");
    if (selection_rate <= 0.0 || selection_rate > 1.0) {
        throw ConfigError("select_clients: selection rate must be in (0, 1]");
    }
    const int count = static_cast<int>(std::lround(selection_rate * num_clients));
    if (count < 1) throw ConfigError("select_clients: selection rate rounds to zero clients");

    Engine eng(mix_seed(master_seed,
                        {seed_domain::kSelection, static_cast<std::uint64_t>(cycle_index)}));
    const auto picks = eng.sample_without_replacement(num_clients, count);
    std::vector<int> out;
    out.reserve(picks.size());
    for (std::size_t p : picks) out.push_back(static_cast<int>(p));
    std::sort(out.begin(), out.end());
    return out;
}

FlatParams fedavg(const std::vector<FlatParams>& models) {
    if (models.empty()) throw ParameterError("fedavg: no models to aggregate");
    const ModelArch& arch = models.front().arch;
    for (const FlatParams& m : models) {
        if (m.arch != arch) throw ParameterError("fedavg: architecture mismatch");
        if (m.values.size() != models.front().values.size()) {
            throw ParameterError("fedavg: parameter length mismatch");
        }
    }
    FlatParams mean;
    mean.arch = arch;
    mean.values.assign(models.front().values.size(), 0.0);
    for (const FlatParams& m : models) {
        for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += m.values[i];
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    for (double& v : mean.values) v *= inv;
    return mean;
}

std::vector<FlatParams> distribute_model(const FlatParams& global,
                                         const std::vector<int>& selected) {
    return std::vector<FlatParams>(selected.size(), global);
}

FlatParams run_round(const FlatParams& global, const CycleLog& cycle,
                     bool first_round_of_cycle, int round_index,
                     const FederationConfig& cfg, const Dataset& data,
                     const ClientPartition& partition, RoundObserver observer) {
    std::vector<FlatParams> submissions = distribute_model(global, cycle.selected);
    for (std::size_t i = 0; i < cycle.selected.size(); ++i) {
        const int k = cycle.selected[i];
        const auto& shard = partition.assignments.at(k);
        const std::uint64_t train_seed =
            mix_seed(cfg.master_seed, {seed_domain::kBatchOrder,
                                       static_cast<std::uint64_t>(round_index),
                                       static_cast<std::uint64_t>(k)});
        FlatParams local = train_local(submissions[i], data, shard, cfg.local_epochs, cfg.lr,
                                       train_seed, cfg.batch_size);
        if (cfg.embed_watermarks) {
            const SlotSet& slots = cycle.slot_sets.at(k);
            const Watermark& wm = cycle.watermarks.at(k);
            local = first_round_of_cycle ? ffwm1(local, slots, wm, cfg.wm.beta)
                                         : ffwm2(local, slots, wm, cfg.wm.alpha);
        }
        submissions[i] = std::move(local);
    }
    FlatParams aggregated = fedavg(submissions);
    if (observer) observer(round_index, submissions, aggregated);
    return aggregated;
}

std::vector<int> reconstruct_selection(const FederationConfig& cfg, int cycle_index) {
    return select_clients(cfg.clients, cfg.selection_rate, cycle_index, cfg.master_seed);
}

Watermark reconstruct_watermark(const FederationConfig& cfg, int cycle_index, int client_id) {
    const std::uint64_t seed =
        mix_seed(cfg.master_seed, {seed_domain::kWatermarkBits,
                                   static_cast<std::uint64_t>(cycle_index),
                                   static_cast<std::uint64_t>(client_id)});
    return gen_watermark(seed, cfg.wm.bits_per_client);
}

RegionPartition reconstruct_regions(const FederationConfig& cfg, const ModelArch& arch) {
    return partition_regions(arch.param_count(), cfg.clients,
                             mix_seed(cfg.master_seed, {seed_domain::kRegions}));
}

SlotSet reconstruct_slots(const FederationConfig& cfg, const ModelArch& arch, int client_id) {
    const RegionPartition regions = reconstruct_regions(cfg, arch);
    const std::uint64_t seed = mix_seed(
        cfg.master_seed, {seed_domain::kSlots, static_cast<std::uint64_t>(client_id)});
    return select_slots(regions.regions.at(client_id), cfg.wm.bits_per_client, seed,
                        arch.bias_mask(), client_id);
}

Watermark observed_federated_watermark(const FlatParams& model, const CycleLog& log) {
    std::vector<std::pair<int, Watermark>> parts;
    parts.reserve(log.selected.size());
    for (int k : log.selected) parts.emplace_back(k, extract(model, log.slot_sets.at(k)));
    return concat_federated(parts);
}

double replacement_detection(const RunArtifacts& artifacts, int cycle_index) {
    const int first_round = cycle_index * artifacts.config.wm.cycle_length;
    for (const RoundMetric& m : artifacts.metrics) {
        if (m.round == first_round && m.cycle == cycle_index) return m.wmdacc;
    }
    throw ParameterError("replacement_detection: no metrics for cycle " +
                         std::to_string(cycle_index));
}

double tail_replacement_detection(const RunArtifacts& artifacts, int window) {
    const int cycles = static_cast<int>(artifacts.logs.size());
    if (cycles == 0) throw ParameterError("tail_replacement_detection: empty run");
    const int first = std::max(0, cycles - window);
    double sum = 0.0;
    int count = 0;
    for (int c = first; c < cycles; ++c) {
        sum += replacement_detection(artifacts, c);
        ++count;
    }
    return sum / count;
}

ModelArch build_arch(const FederationConfig& cfg, const Dataset& data) {
    ModelArch arch;
    arch.layer_sizes.push_back(static_cast<int>(data.n_features));
    for (int h : cfg.hidden_layers) arch.layer_sizes.push_back(h);
    arch.layer_sizes.push_back(static_cast<int>(data.n_classes));
    arch.validate();
    return arch;
}

RunArtifacts run_training(const FederationConfig& cfg, const Dataset& data,
                          const ClientPartition& partition, const Dataset* test_data,
                          RoundObserver observer) {
    cfg.validate();
    data.validate();
    if (partition.num_clients() != static_cast<std::size_t>(cfg.clients)) {
        throw ConfigError("config: partition does not match the client count");
    }
    for (const auto& shard : partition.assignments) {
        if (shard.empty()) throw ConfigError("config: a client has an empty shard");
    }

    const ModelArch arch = build_arch(cfg, data);
    const std::vector<bool> bias_mask = arch.bias_mask();

    RunArtifacts art;
    art.config = cfg;
    art.regions = reconstruct_regions(cfg, arch);

    // Slot positions are picked once, before round 0, and reused in every
    // cycle the client participates in.
    std::vector<SlotSet> slots;
    slots.reserve(cfg.clients);
    for (int k = 0; k < cfg.clients; ++k) {
        const std::uint64_t seed =
            mix_seed(cfg.master_seed, {seed_domain::kSlots, static_cast<std::uint64_t>(k)});
        slots.push_back(select_slots(art.regions.regions[k], cfg.wm.bits_per_client, seed,
                                     bias_mask, k));
    }

    FlatParams global =
        init_model(arch, mix_seed(cfg.master_seed, {seed_domain::kModelInit}));
    const Dataset& eval_data = test_data != nullptr ? *test_data : data;

    const int cycle_len = cfg.wm.cycle_length;
    for (int round = 0; round < cfg.rounds; ++round) {
        const int cycle = round / cycle_len;
        const bool first_of_cycle = round % cycle_len == 0;

        if (first_of_cycle) {
            CycleLog log;
            log.cycle_index = cycle;
            log.selected = reconstruct_selection(cfg, cycle);
            std::vector<std::pair<int, Watermark>> parts;
            for (int k : log.selected) {
                log.watermarks[k] = reconstruct_watermark(cfg, cycle, k);
                log.slot_sets[k] = slots[k];
                parts.emplace_back(k, log.watermarks[k]);
            }
            log.federated_watermark = concat_federated(parts);
            art.logs.push_back(std::move(log));
        }
        const CycleLog& log = art.logs.back();

        global = run_round(global, log, first_of_cycle, round, cfg, data, partition, observer);

        RoundMetric m;
        m.round = round;
        m.cycle = cycle;
        m.accuracy = evaluate(global, eval_data);
        m.wmdacc = wmdacc(log.federated_watermark, observed_federated_watermark(global, log));
        art.metrics.push_back(m);

        const bool last_of_cycle = round + 1 == cfg.rounds || (round + 1) % cycle_len == 0;
        if (last_of_cycle) art.cycle_snapshots[cycle] = global;
    }
    art.final_model = std::move(global);
    return art;
}

}  // namespace fedcip
