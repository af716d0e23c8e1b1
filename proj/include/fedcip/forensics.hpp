#pragma once

#include <cstdint>
#include <vector>

#include "fedcip/adversary.hpp"
#include "fedcip/federation.hpp"

namespace fedcip {

/// Detection threshold used when none is given. Sits between the chance
/// floor (~0.5 on unwatermarked models) and the worst attacked score the
/// scheme tolerates (>= 0.95 under pruning up to half the weights).
inline constexpr double kDefaultDetectionThreshold = 0.85;

/// Best-scoring cycle for a leaked model.
struct CycleMatch {
    int cycle_index = -1;
    double wmdacc = 0.0;       // maximum over all logged cycles
    bool threshold_passed = false;
};

/// The matched cycle's participant set; the traitor must be in it.
struct SuspectReport {
    CycleMatch match;
    std::vector<int> suspects;  // ascending; empty when the threshold failed
};

/// Intersection of suspect sets across leaks.
struct TraitorVerdict {
    std::vector<int> remaining;  // ascending
    bool unique = false;
    int leaks_used = 0;
    std::vector<std::vector<int>> history;  // remaining set after each report
};

/// Outcome of the Monte-Carlo tracking experiment.
struct TrackingStats {
    int trials = 0;
    int completed = 0;          // reached a unique verdict
    int skipped = 0;            // traitor participation too small to get there
    int correct = 0;            // completed trials naming the planted traitor
    std::vector<int> leaks_used;  // one entry per completed trial
    double mean_leaks_used = 0.0;
};

/// Scores the leaked model against every logged cycle (extract the selected
/// clients' slots, compare with the logged federated watermark) and returns
/// the argmax; ties go to the later cycle, since replacement means a late
/// perfect match dominates a stale one.
CycleMatch identify_cycle(const FlatParams& leaked, const std::vector<CycleLog>& logs,
                          double tau = kDefaultDetectionThreshold);

/// The matched cycle's selected clients, or nobody if the threshold failed.
SuspectReport suspects(const CycleMatch& match, const std::vector<CycleLog>& logs);

/// Intersects the reports in order. Every report must have passed the
/// threshold; an empty intersection is an error, not an empty verdict —
/// it means a cycle was mis-identified or the single-traitor assumption
/// does not hold.
TraitorVerdict track(const std::vector<SuspectReport>& reports);

/// Smallest n with K * C^n <= 1: the expected leak count that pins the
/// traitor down to one client.
int expected_leaks(int num_clients, double selection_rate);

/// Probability that n leaks suffice to identify the traitor: 1 - C^n.
double catch_probability(double selection_rate, int n_leaks);

/// Runs `trials` independent federations, plants one traitor each, leaks
/// cycle snapshots in seeded order until the verdict is unique, and
/// reports the distribution of leaks needed.
TrackingStats simulate_tracking(const FederationConfig& cfg, int trials,
                                std::uint64_t seed);

}  // namespace fedcip
