#include <doctest.h>

#include <cmath>
#include <set>

#include "fedcip/model.hpp"
#include "fedcip/rng.hpp"
#include "fedcip/watermark.hpp"

using namespace fedcip;

namespace {

FlatParams make_params(std::vector<double> values) {
    // A flat vector with a throwaway arch of matching length: n inputs, 1 output
    // needs n+1 params, so build arch {n-1, 1} when possible, else {1, k}.
    FlatParams p;
    const std::size_t n = values.size();
    // arch {a, b}: a*b + b = n. Use b=1, a=n-1.
    p.arch.layer_sizes = {static_cast<int>(n - 1), 1};
    p.values = std::move(values);
    return p;
}

SlotSet make_slots(std::vector<std::size_t> idx) {
    SlotSet s;
    s.client_id = 0;
    s.slots = std::move(idx);
    return s;
}

Watermark make_wm(std::vector<int> bits) {
    Watermark w;
    w.bits = std::move(bits);
    return w;
}

}  // namespace

TEST_CASE("gen_watermark emits +-1 bits deterministically") {
    const Watermark wm = gen_watermark(3, 8);
    CHECK(wm.size() == 8);
    for (int b : wm.bits) CHECK((b == 1 || b == -1));
    CHECK(gen_watermark(3, 8) == wm);
    CHECK(gen_watermark(4, 8) != wm);
    CHECK_THROWS_AS(gen_watermark(3, 0), ParameterError);
}

TEST_CASE("gen_watermark bits are balanced over many draws") {
    double sum = 0.0;
    int count = 0;
    for (int seed = 0; seed < 100; ++seed) {
        const Watermark wm = gen_watermark(seed, 100);
        for (int b : wm.bits) sum += b;
        count += 100;
    }
    CHECK(std::fabs(sum / count) < 0.05);
}

TEST_CASE("partition_regions splits evenly and disjointly") {
    const RegionPartition big = partition_regions(1'000'000, 10, 42);
    REQUIRE(big.num_clients() == 10);
    for (const auto& region : big.regions) CHECK(region.size() == 100'000);

    const RegionPartition singletons = partition_regions(10, 10, 1);
    for (const auto& region : singletons.regions) CHECK(region.size() == 1);

    Engine eng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t count = 50 + eng.below(500);
        const int clients = 1 + static_cast<int>(eng.below(9));
        const RegionPartition part = partition_regions(count, clients, eng.next_u64());
        std::set<std::size_t> seen;
        std::size_t min_size = count, max_size = 0;
        for (const auto& region : part.regions) {
            min_size = std::min(min_size, region.size());
            max_size = std::max(max_size, region.size());
            for (std::size_t i : region) {
                CHECK(i < count);
                CHECK(seen.insert(i).second);
            }
        }
        CHECK(seen.size() == count);
        CHECK(max_size - min_size <= 1);
    }

    CHECK_THROWS_AS(partition_regions(5, 6, 1), ParameterError);
}

TEST_CASE("select_slots samples inside the region, ascending, seeded") {
    const std::vector<std::size_t> region = {4, 9, 13, 22, 31, 40, 57};
    const SlotSet all = select_slots(region, 7, 5);
    CHECK(all.slots == region);

    const SlotSet some = select_slots(region, 3, 5);
    CHECK(some.slots.size() == 3);
    CHECK(std::is_sorted(some.slots.begin(), some.slots.end()));
    for (std::size_t s : some.slots) {
        CHECK(std::count(region.begin(), region.end(), s) == 1);
    }
    CHECK(select_slots(region, 3, 5).slots == some.slots);

    CHECK_THROWS_AS(select_slots(region, 8, 5), CapacityError);
}

TEST_CASE("select_slots avoids bias indices while it can") {
    // Mark indices 0..4 as biases in a 10-parameter model.
    std::vector<bool> mask(10, false);
    for (std::size_t i = 0; i < 5; ++i) mask[i] = true;
    const std::vector<std::size_t> region = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

    const SlotSet weights_only = select_slots(region, 4, 11, mask);
    for (std::size_t s : weights_only.slots) CHECK(s >= 5);

    // Not enough weight entries: falls back to the whole region.
    const SlotSet fallback = select_slots(region, 8, 11, mask);
    CHECK(fallback.slots.size() == 8);
}

TEST_CASE("extract follows the sign rule with zero mapping to +1") {
    const FlatParams p = make_params({0.7, -0.1, 2.0, 0.0});
    CHECK(extract(p, make_slots({0, 1, 2})).bits == std::vector<int>{1, -1, 1});
    CHECK(extract(p, make_slots({3})).bits == std::vector<int>{1});
    CHECK_THROWS_AS(extract(p, make_slots({17})), ParameterError);
}

TEST_CASE("ffwm1 shifts only disagreeing slots") {
    // -0.3 + 0.5 * (1 - (-1)) = 0.7; 0.2 already agrees and stays.
    const FlatParams p = make_params({0.2, -0.3, 5.0});
    const FlatParams out = ffwm1(p, make_slots({0, 1}), make_wm({1, 1}), 0.5);
    CHECK(out.values[0] == 0.2);
    CHECK(out.values[1] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(out.values[2] == 5.0);
    CHECK(p.values[1] == -0.3);

    // Agreement everywhere: output identical to input.
    const Watermark same = extract(p, make_slots({0, 1}));
    const FlatParams untouched = ffwm1(p, make_slots({0, 1}), same, 0.5);
    CHECK(untouched.values == p.values);

    CHECK_THROWS_AS(ffwm1(p, make_slots({0, 1}), make_wm({1}), 0.5), ParameterError);
    CHECK_THROWS_AS(ffwm1(p, make_slots({0}), make_wm({1}), 0.0), ParameterError);
}

TEST_CASE("ffwm1 applied twice equals applied once when the first flip lands") {
    Engine eng(123);
    for (int trial = 0; trial < 200; ++trial) {
        const double beta = eng.uniform(0.1, 2.0);
        std::vector<double> values(6);
        for (double& v : values) v = eng.uniform(-2.0 * beta, 2.0 * beta) * 0.999;
        const FlatParams p = make_params(values);
        const SlotSet slots = make_slots({0, 1, 2, 3, 4, 5});
        Watermark wm;
        for (int j = 0; j < 6; ++j) wm.bits.push_back(eng.next_u64() & 1 ? 1 : -1);

        const FlatParams once = ffwm1(p, slots, wm, beta);
        const FlatParams twice = ffwm1(once, slots, wm, beta);
        CHECK(once.values == twice.values);
    }
}

TEST_CASE("ffwm1 guarded correctness: |old| < 2*beta implies the new sign sticks") {
    Engine eng(321);
    int cases = 0;
    while (cases < 1000) {
        const double beta = eng.uniform(0.05, 3.0);
        const double old = eng.uniform(-2.0 * beta, 2.0 * beta) * 0.9999;
        const int bit = eng.next_u64() & 1 ? 1 : -1;
        const FlatParams p = make_params({old, 1.0, -1.0});
        const FlatParams out = ffwm1(p, make_slots({0}), make_wm({bit}), beta);
        CHECK(extract(out, make_slots({0})).bits[0] == bit);
        ++cases;
    }
}

TEST_CASE("ffwm2 overwrites slots with alpha times the bit") {
    const FlatParams p = make_params({0.5, -0.5, 3.0, 7.0});
    const FlatParams out = ffwm2(p, make_slots({0, 1, 2}), make_wm({1, -1, -1}), 0.01);
    CHECK(out.values[0] == 0.01);
    CHECK(out.values[1] == -0.01);
    CHECK(out.values[2] == -0.01);
    CHECK(out.values[3] == 7.0);
    CHECK_THROWS_AS(ffwm2(p, make_slots({0}), make_wm({1, -1}), 0.01), ParameterError);
    CHECK_THROWS_AS(ffwm2(p, make_slots({0}), make_wm({1}), -0.5), ParameterError);
}

TEST_CASE("ffwm2 extraction fixed point holds for any positive alpha") {
    Engine eng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 16;
        std::vector<double> values(n + 4);
        for (double& v : values) v = eng.normal();
        const FlatParams p = make_params(values);
        std::vector<std::size_t> idx(eng.sample_without_replacement(values.size(), n));
        std::sort(idx.begin(), idx.end());
        Watermark wm;
        for (std::size_t j = 0; j < n; ++j) wm.bits.push_back(eng.next_u64() & 1 ? 1 : -1);
        const double alpha = std::exp(eng.uniform(std::log(1e-4), std::log(10.0)));

        const FlatParams out = ffwm2(p, make_slots(std::vector<std::size_t>(idx)), wm, alpha);
        CHECK(extract(out, make_slots(std::move(idx))) == wm);
    }
}

TEST_CASE("embedding locality: off-slot coordinates are bit-identical") {
    Engine eng(555);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> values(40);
        for (double& v : values) v = eng.normal();
        const FlatParams p = make_params(values);
        auto idx = eng.sample_without_replacement(40, 8);
        std::sort(idx.begin(), idx.end());
        const SlotSet slots = make_slots(std::vector<std::size_t>(idx));
        Watermark wm;
        for (int j = 0; j < 8; ++j) wm.bits.push_back(eng.next_u64() & 1 ? 1 : -1);

        const FlatParams a = ffwm1(p, slots, wm, 1.0);
        const FlatParams b = ffwm2(p, slots, wm, 0.01);
        const std::set<std::size_t> slot_set(idx.begin(), idx.end());
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!slot_set.count(i)) {
                CHECK(a.values[i] == p.values[i]);
                CHECK(b.values[i] == p.values[i]);
            }
        }
    }
}

TEST_CASE("concat_federated orders by client id and rejects duplicates") {
    std::vector<std::pair<int, Watermark>> parts;
    for (int k = 7; k >= 0; --k) parts.emplace_back(k, gen_watermark(k, 10));
    const Watermark fed = concat_federated(parts);
    CHECK(fed.size() == 80);

    // Order independence: sorted input gives the same result.
    std::vector<std::pair<int, Watermark>> sorted_parts(parts.rbegin(), parts.rend());
    CHECK(concat_federated(sorted_parts) == fed);

    // Ascending-id layout: client 0 occupies the first block.
    const Watermark wm0 = gen_watermark(0, 10);
    for (int j = 0; j < 10; ++j) CHECK(fed.bits[j] == wm0.bits[j]);

    const Watermark single = concat_federated({{3, wm0}});
    CHECK(single == wm0);

    parts.emplace_back(3, gen_watermark(9, 10));
    CHECK_THROWS_AS(concat_federated(parts), ParameterError);
    CHECK_THROWS_AS(concat_federated({}), ParameterError);
}

TEST_CASE("wmdacc counts Hamming agreement") {
    const Watermark a = make_wm({1, -1, 1, -1});
    CHECK(wmdacc(a, a) == 1.0);
    const Watermark flipped = make_wm({-1, 1, -1, 1});
    CHECK(wmdacc(a, flipped) == 0.0);
    const Watermark one_off = make_wm({1, -1, 1, 1});
    CHECK(wmdacc(a, one_off) == 0.75);
    CHECK_THROWS_AS(wmdacc(a, make_wm({1, 1})), ParameterError);
}

TEST_CASE("wmdacc symmetry and extremes over random pairs") {
    Engine eng(888);
    for (int trial = 0; trial < 200; ++trial) {
        Watermark a, b;
        for (int j = 0; j < 32; ++j) {
            a.bits.push_back(eng.next_u64() & 1 ? 1 : -1);
            b.bits.push_back(eng.next_u64() & 1 ? 1 : -1);
        }
        CHECK(wmdacc(a, b) == wmdacc(b, a));
        CHECK(wmdacc(a, a) == 1.0);
        Watermark neg = a;
        for (int& bit : neg.bits) bit = -bit;
        CHECK(wmdacc(a, neg) == 0.0);
    }
}

TEST_CASE("independent random watermarks score at chance") {
    double sum = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Watermark a = gen_watermark(2 * trial, 64);
        const Watermark b = gen_watermark(2 * trial + 1, 64);
        sum += wmdacc(a, b);
    }
    const double mean = sum / 1000.0;
    CHECK(mean > 0.45);
    CHECK(mean < 0.55);
}
