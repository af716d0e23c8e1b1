#include "fedcip/watermark.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fedcip/rng.hpp"

namespace fedcip {

void Watermark::validate() const {
    if (bits.empty()) throw ParameterError("watermark must hold at least one bit");
    for (int b : bits) {
        if (b != 1 && b != -1) throw ParameterError("watermark bits must be +1 or -1");
    }
}

void WatermarkConfig::validate() const {
    if (alpha <= 0.0) throw ConfigError("watermark alpha must be positive");
    if (beta <= 0.0) throw ConfigError("watermark beta must be positive");
    if (cycle_length < 1) throw ConfigError("cycle length must be >= 1");
    if (bits_per_client < 1) throw ConfigError("watermark length must be >= 1");
}

Watermark gen_watermark(std::uint64_t seed, int n_bits) {
    if (n_bits < 1) throw ParameterError("gen_watermark: length must be >= 1");
    Engine eng(seed);
    Watermark wm;
    wm.bits.resize(n_bits);
    for (int& b : wm.bits) b = (eng.next_u64() & 1u) ? 1 : -1;
    return wm;
}

RegionPartition partition_regions(std::size_t param_count, int num_clients,
                                  std::uint64_t seed) {
    if (num_clients < 1) throw ParameterError("partition_regions: need at least one client");
    if (param_count < static_cast<std::size_t>(num_clients)) {
        throw ParameterError("partition_regions: fewer parameters than clients");
    }
    std::vector<std::size_t> perm(param_count);
    for (std::size_t i = 0; i < param_count; ++i) perm[i] = i;
    Engine eng(seed);
    eng.shuffle(perm);

    RegionPartition part;
    part.regions.resize(num_clients);
    const std::size_t base = param_count / num_clients;
    const std::size_t extra = param_count % num_clients;
    std::size_t pos = 0;
    for (int k = 0; k < num_clients; ++k) {
        const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        auto& region = part.regions[k];
        region.assign(perm.begin() + pos, perm.begin() + pos + len);
        std::sort(region.begin(), region.end());
        pos += len;
    }
    return part;
}

SlotSet select_slots(const std::vector<std::size_t>& region, int n_bits,
                     std::uint64_t seed, const std::vector<bool>& bias_mask,
                     int client_id) {
    if (n_bits < 1) throw ParameterError("select_slots: watermark length must be >= 1");
    if (static_cast<std::size_t>(n_bits) > region.size()) {
        throw CapacityError("watermark length " + std::to_string(n_bits) +
                            " exceeds region size " + std::to_string(region.size()));
    }

    std::vector<std::size_t> pool;
    if (!bias_mask.empty()) {
        for (std::size_t idx : region) {
            if (idx < bias_mask.size() && !bias_mask[idx]) pool.push_back(idx);
        }
    }
    if (pool.size() < static_cast<std::size_t>(n_bits)) pool = region;

    Engine eng(seed);
    const auto picks = eng.sample_without_replacement(pool.size(), n_bits);
    SlotSet out;
    out.client_id = client_id;
    out.slots.reserve(n_bits);
    for (std::size_t p : picks) out.slots.push_back(pool[p]);
    std::sort(out.slots.begin(), out.slots.end());
    return out;
}

namespace {

void check_slots(const FlatParams& params, const SlotSet& slots) {
    for (std::size_t idx : slots.slots) {
        if (idx >= params.size()) {
            throw ParameterError("slot index " + std::to_string(idx) +
                                 " out of range for a model with " +
                                 std::to_string(params.size()) + " parameters");
        }
    }
}

void check_lengths(const SlotSet& slots, const Watermark& wm) {
    if (slots.slots.size() != wm.size()) {
        throw ParameterError("watermark length does not match the slot count");
    }
}

}  // namespace

Watermark extract(const FlatParams& params, const SlotSet& slots) {
    check_slots(params, slots);
    if (slots.slots.empty()) throw ParameterError("extract: empty slot set");
    Watermark wm;
    wm.bits.reserve(slots.slots.size());
    for (std::size_t idx : slots.slots) wm.bits.push_back(weight_sign(params.values[idx]));
    return wm;
}

FlatParams ffwm1(const FlatParams& params, const SlotSet& slots, const Watermark& wm,
                 double beta) {
    check_slots(params, slots);
    check_lengths(slots, wm);
    wm.validate();
    if (beta <= 0.0) throw ParameterError("ffwm1: beta must be positive");

    FlatParams out = params;
    for (std::size_t j = 0; j < slots.slots.size(); ++j) {
        const std::size_t idx = slots.slots[j];
        const double old = out.values[idx];
        const int carried = weight_sign(old);
        if (wm.bits[j] != carried) {
            out.values[idx] = old + beta * (wm.bits[j] - carried);
        }
    }
    return out;
}

FlatParams ffwm2(const FlatParams& params, const SlotSet& slots, const Watermark& wm,
                 double alpha) {
    check_slots(params, slots);
    check_lengths(slots, wm);
    wm.validate();
    if (alpha <= 0.0) throw ParameterError("ffwm2: alpha must be positive");

    FlatParams out = params;
    for (std::size_t j = 0; j < slots.slots.size(); ++j) {
        out.values[slots.slots[j]] = alpha * wm.bits[j];
    }
    return out;
}

Watermark concat_federated(const std::vector<std::pair<int, Watermark>>& per_client) {
    if (per_client.empty()) throw ParameterError("concat_federated: empty client list");
    std::vector<std::pair<int, const Watermark*>> ordered;
    ordered.reserve(per_client.size());
    for (const auto& [id, wm] : per_client) ordered.emplace_back(id, &wm);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i].first == ordered[i - 1].first) {
            throw ParameterError("concat_federated: duplicate client id " +
                                 std::to_string(ordered[i].first));
        }
    }
    Watermark fed;
    for (const auto& [id, wm] : ordered) {
        wm->validate();
        fed.bits.insert(fed.bits.end(), wm->bits.begin(), wm->bits.end());
    }
    return fed;
}

double wmdacc(const Watermark& expected, const Watermark& observed) {
    if (expected.size() != observed.size()) {
        throw ParameterError("wmdacc: watermark lengths differ");
    }
    if (expected.size() == 0) throw ParameterError("wmdacc: empty watermark");
    std::size_t hamming = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (expected.bits[i] != observed.bits[i]) ++hamming;
    }
    return 1.0 - static_cast<double>(hamming) / static_cast<double>(expected.size());
}

}  // namespace fedcip
