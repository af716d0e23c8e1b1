#include "fedcip/forensics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedcip/rng.hpp"

namespace fedcip {

CycleMatch identify_cycle(const FlatParams& leaked, const std::vector<CycleLog>& logs,
                          double tau) {
    if (logs.empty()) throw ParameterError("identify_cycle: no cycle logs");
    if (tau <= 0.0 || tau > 1.0) throw ParameterError("identify_cycle: tau must be in (0, 1]");

    for (const CycleLog& log : logs) {
        for (const auto& [id, slots] : log.slot_sets) {
            for (std::size_t idx : slots.slots) {
                if (idx >= leaked.size()) {
                    throw IncompatibleModelError(
                        "leaked model has " + std::to_string(leaked.size()) +
                        " parameters but the log references index " + std::to_string(idx));
                }
            }
        }
    }

    CycleMatch best;
    for (const CycleLog& log : logs) {
        const double score =
            wmdacc(log.federated_watermark, observed_federated_watermark(leaked, log));
        if (best.cycle_index < 0 || score >= best.wmdacc) {
            best.cycle_index = log.cycle_index;
            best.wmdacc = score;
        }
    }
    best.threshold_passed = best.wmdacc >= tau;
    return best;
}

SuspectReport suspects(const CycleMatch& match, const std::vector<CycleLog>& logs) {
    const auto it = std::find_if(logs.begin(), logs.end(), [&](const CycleLog& log) {
        return log.cycle_index == match.cycle_index;
    });
    if (it == logs.end()) {
        throw ParameterError("suspects: unknown cycle index " +
                             std::to_string(match.cycle_index));
    }
    SuspectReport report;
    report.match = match;
    if (match.threshold_passed) report.suspects = it->selected;
    return report;
}

TraitorVerdict track(const std::vector<SuspectReport>& reports) {
    if (reports.empty()) throw ParameterError("track: no reports");
    TraitorVerdict verdict;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const SuspectReport& r = reports[i];
        if (!r.match.threshold_passed) {
            throw ParameterError("track: report " + std::to_string(i) +
                                 " did not pass the detection threshold");
        }
        if (i == 0) {
            verdict.remaining = r.suspects;
        } else {
            std::vector<int> next;
            std::set_intersection(verdict.remaining.begin(), verdict.remaining.end(),
                                  r.suspects.begin(), r.suspects.end(),
                                  std::back_inserter(next));
            verdict.remaining = std::move(next);
        }
        if (verdict.remaining.empty()) {
            throw InconsistencyError(
                "suspect sets have an empty intersection after report " +
                std::to_string(i) + "; a cycle was mis-identified or more than one "
                "client is leaking");
        }
        verdict.history.push_back(verdict.remaining);
    }
    verdict.leaks_used = static_cast<int>(reports.size());
    verdict.unique = verdict.remaining.size() == 1;
    return verdict;
}

int expected_leaks(int num_clients, double selection_rate) {
    if (num_clients < 1) throw ParameterError("expected_leaks: need at least one client");
    if (selection_rate <= 0.0 || selection_rate >= 1.0) {
        throw ParameterError("expected_leaks: selection rate must be in (0, 1)");
    }
    int n = 0;
    double remaining = static_cast<double>(num_clients);
    while (remaining > 1.0) {
        remaining *= selection_rate;
        ++n;
    }
    return n;
}

double catch_probability(double selection_rate, int n_leaks) {
    if (selection_rate <= 0.0 || selection_rate >= 1.0) {
        throw ParameterError("catch_probability: selection rate must be in (0, 1)");
    }
    if (n_leaks < 1) throw ParameterError("catch_probability: need at least one leak");
    return 1.0 - std::pow(selection_rate, n_leaks);
}

TrackingStats simulate_tracking(const FederationConfig& cfg, int trials,
                                std::uint64_t seed) {
    if (trials < 1) throw ParameterError("simulate_tracking: trials must be >= 1");
    cfg.validate();
    if (cfg.selection_rate >= 1.0) {
        throw ParameterError("simulate_tracking: selection rate 1 keeps every client "
                             "a suspect forever");
    }

    TrackingStats stats;
    stats.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed =
            mix_seed(seed, {seed_domain::kTracking, static_cast<std::uint64_t>(t)});

        FederationConfig trial_cfg = cfg;
        trial_cfg.master_seed = trial_seed;

        const Dataset data = gen_synthetic_dataset(mix_seed(trial_seed, {1}), 200, 12, 4);
        const ClientPartition partition =
            partition_clients(data, trial_cfg.clients, PartitionMode::Iid,
                              mix_seed(trial_seed, {2}));
        const RunArtifacts art = run_training(trial_cfg, data, partition);

        Engine eng(mix_seed(trial_seed, {3}));
        const int traitor = static_cast<int>(eng.below(trial_cfg.clients));

        std::vector<int> cycles;
        for (const CycleLog& log : art.logs) {
            if (std::binary_search(log.selected.begin(), log.selected.end(), traitor)) {
                cycles.push_back(log.cycle_index);
            }
        }
        eng.shuffle(cycles);

        std::vector<SuspectReport> reports;
        bool done = false;
        for (int cycle : cycles) {
            const LeakEvent event = leak(art, traitor, cycle, AttackSpec{});
            const CycleMatch match = identify_cycle(event.model, art.logs);
            if (!match.threshold_passed) break;  // detection failed; trial incomplete
            reports.push_back(suspects(match, art.logs));
            const TraitorVerdict verdict = track(reports);
            if (verdict.unique) {
                ++stats.completed;
                stats.leaks_used.push_back(verdict.leaks_used);
                if (verdict.remaining.front() == traitor) ++stats.correct;
                done = true;
                break;
            }
        }
        if (!done) ++stats.skipped;
    }
    if (!stats.leaks_used.empty()) {
        stats.mean_leaks_used =
            std::accumulate(stats.leaks_used.begin(), stats.leaks_used.end(), 0.0) /
            static_cast<double>(stats.leaks_used.size());
    }
    return stats;
}

}  // namespace fedcip
