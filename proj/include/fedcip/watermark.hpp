#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedcip/errors.hpp"
#include "fedcip/model.hpp"

namespace fedcip {

/// Fixed-length sequence over {+1, -1}. One per client per cycle; the
/// concatenation over a cycle's selected clients forms the federated
/// watermark verified against leaked models.
struct Watermark {
    std::vector<int> bits;

    std::size_t size() const { return bits.size(); }
    void validate() const;

    bool operator==(const Watermark& other) const = default;
};

/// A client's fixed watermark positions. Chosen once inside the client's
/// exclusive region and never re-selected; slots are stored ascending.
struct SlotSet {
    int client_id = 0;
    std::vector<std::size_t> slots;

    bool operator==(const SlotSet& other) const = default;
};

/// Disjoint near-equal split of parameter indices among clients; region k
/// is the only place client k may write watermark bits.
struct RegionPartition {
    std::vector<std::vector<std::size_t>> regions;

    std::size_t num_clients() const { return regions.size(); }
};

/// Embedding strengths and shape of the per-cycle watermarks.
///   alpha         slot magnitude written in non-first rounds of a cycle
///   beta          shift strength of the first-round replacement rule
///   cycle_length  rounds per cycle (T); selection and watermark are constant
///                 within a cycle
///   bits_per_client  watermark length N for every client
///
/// Defaults sit inside the reliable bands: the first-round sign shift that
/// survives averaging over n selected clients is about 2*beta/n, which must
/// exceed the prior slot magnitude (about alpha) plus training drift.
struct WatermarkConfig {
    double alpha = 0.01;
    double beta = 1.0;
    int cycle_length = 3;
    int bits_per_client = 32;

    void validate() const;
};

/// The sign convention of the embedding and extraction rules: +1 for
/// positive weights, -1 for negative. Exact zero maps to +1 so that
/// detection stays deterministic on pruned models.
inline int weight_sign(double w) { return w < 0.0 ? -1 : 1; }

/// Each bit independently +1 or -1 with probability 1/2.
Watermark gen_watermark(std::uint64_t seed, int n_bits);

/// Splits a shuffled permutation of [0, param_count) into K disjoint regions
/// whose sizes differ by at most one. Regions are returned sorted.
RegionPartition partition_regions(std::size_t param_count, int num_clients,
                                  std::uint64_t seed);

/// Samples n_bits distinct slots from the region, ascending. Indices flagged
/// in bias_mask are avoided while enough unflagged ones exist.
SlotSet select_slots(const std::vector<std::size_t>& region, int n_bits,
                     std::uint64_t seed, const std::vector<bool>& bias_mask = {},
                     int client_id = 0);

/// Reads the watermark carried by the slot weights (sign rule above).
Watermark extract(const FlatParams& params, const SlotSet& slots);

/// First-round replacement rule: slot weights whose sign disagrees with the
/// new bit are shifted by 2*beta towards it; agreeing weights are untouched.
FlatParams ffwm1(const FlatParams& params, const SlotSet& slots, const Watermark& wm,
                 double beta);

/// Reinforcement rule for the remaining rounds of a cycle: slot weights are
/// overwritten with alpha * bit.
FlatParams ffwm2(const FlatParams& params, const SlotSet& slots, const Watermark& wm,
                 double alpha);

/// Concatenates per-client watermarks in ascending client-id order.
Watermark concat_federated(const std::vector<std::pair<int, Watermark>>& per_client);

/// Watermark detection accuracy: 1 - HammingDistance/N.
double wmdacc(const Watermark& expected, const Watermark& observed);

}  // namespace fedcip
