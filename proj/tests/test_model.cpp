#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fedcip/model.hpp"
#include "fedcip/rng.hpp"

using namespace fedcip;
namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> all_indices(const Dataset& data) {
    std::vector<std::size_t> idx(data.n_samples());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

// Central finite differences of the loss; the independent check for the
// analytic gradient.
std::vector<double> numeric_gradient(const FlatParams& params, const Dataset& data,
                                     const std::vector<std::size_t>& indices,
                                     double eps = 1e-5) {
    std::vector<double> grad(params.size());
    FlatParams probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe.values[i] = params.values[i] + eps;
        const double up = cross_entropy_loss(probe, data, indices);
        probe.values[i] = params.values[i] - eps;
        const double down = cross_entropy_loss(probe, data, indices);
        probe.values[i] = params.values[i];
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / name;
}

void write_idx_images(const fs::path& path, std::uint32_t magic, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols,
                      const std::vector<unsigned char>& pixels) {
    std::ofstream out(path, std::ios::binary);
    auto be32 = [&](std::uint32_t v) {
        const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                      static_cast<unsigned char>(v >> 16),
                                      static_cast<unsigned char>(v >> 8),
                                      static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(buf), 4);
    };
    be32(magic);
    be32(count);
    be32(rows);
    be32(cols);
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const fs::path& path, std::uint32_t magic, std::uint32_t count,
                      const std::vector<unsigned char>& labels) {
    std::ofstream out(path, std::ios::binary);
    auto be32 = [&](std::uint32_t v) {
        const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                      static_cast<unsigned char>(v >> 16),
                                      static_cast<unsigned char>(v >> 8),
                                      static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(buf), 4);
    };
    be32(magic);
    be32(count);
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

}  // namespace

TEST_CASE("synthetic dataset has balanced classes and fixed shape") {
    const Dataset ds = gen_synthetic_dataset(7, 400, 20, 4);
    CHECK(ds.n_samples() == 400);
    CHECK(ds.n_features == 20);
    CHECK(ds.n_classes == 4);
    std::vector<int> counts(4, 0);
    for (int l : ds.labels) ++counts[l];
    for (int c : counts) CHECK(c == 100);
}

TEST_CASE("synthetic dataset is deterministic per seed") {
    const Dataset a = gen_synthetic_dataset(7, 400, 20, 4);
    const Dataset b = gen_synthetic_dataset(7, 400, 20, 4);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    const Dataset c = gen_synthetic_dataset(8, 400, 20, 4);
    CHECK(a.features != c.features);
}

TEST_CASE("synthetic dataset rejects bad sizes") {
    CHECK_THROWS_AS(gen_synthetic_dataset(1, 3, 20, 4), ParameterError);
    CHECK_THROWS_AS(gen_synthetic_dataset(1, 400, 1, 4), ParameterError);
    CHECK_THROWS_AS(gen_synthetic_dataset(1, 400, 20, 1), ParameterError);
}

TEST_CASE("a short training run beats chance comfortably") {
    const Dataset ds = gen_synthetic_dataset(7, 400, 20, 4);
    const ModelArch arch{{20, 32, 32, 4}};
    FlatParams params = init_model(arch, 7);
    // 200 SGD steps: batch 32 over 400 samples = 13 batches/epoch.
    const auto idx = all_indices(ds);
    for (int e = 0; e < 16; ++e) {
        params = train_local(params, ds, idx, 1, 0.01, 100 + e);
    }
    CHECK(evaluate(params, ds) > 0.5);
}

TEST_CASE("untrained models score near chance on balanced classes") {
    // A single random model maps each well-separated blob to one prediction,
    // so per-model accuracy is lumpy; the mean over inits concentrates at 1/4.
    const Dataset ds = gen_synthetic_dataset(11, 400, 20, 4);
    double sum = 0.0;
    const int inits = 40;
    for (int seed = 0; seed < inits; ++seed) {
        sum += evaluate(init_model(ModelArch{{20, 32, 32, 4}}, seed), ds);
    }
    const double mean = sum / inits;
    CHECK(mean > 0.15);
    CHECK(mean < 0.35);
}

TEST_CASE("init_model layout, determinism, zero biases") {
    const ModelArch arch{{20, 32, 32, 4}};
    CHECK(arch.param_count() == 1860);
    const FlatParams a = init_model(arch, 5);
    const FlatParams b = init_model(arch, 5);
    CHECK(a.values == b.values);
    CHECK(a.values.size() == 1860);

    const auto mask = arch.bias_mask();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (mask[i]) CHECK(a.values[i] == 0.0);
    }
    // weights bounded by sqrt(1/fan_in) per layer
    const auto spans = layer_spans(arch);
    for (const LayerSpan& s : spans) {
        const double bound = std::sqrt(1.0 / s.fan_in);
        for (std::size_t i = s.weights_begin; i < s.weights_end; ++i) {
            CHECK(std::fabs(a.values[i]) <= bound);
        }
    }
}

TEST_CASE("flat parameter round-trip through layer views is the identity") {
    const ModelArch arch{{5, 4, 3}};
    const FlatParams params = init_model(arch, 9);
    const FlatParams back = flatten(arch, unflatten(params));
    CHECK(back.values == params.values);
}

TEST_CASE("train_local validates inputs and leaves its argument alone") {
    const Dataset ds = gen_synthetic_dataset(3, 40, 6, 2);
    const FlatParams params = init_model(ModelArch{{6, 8, 2}}, 1);
    const std::vector<double> before = params.values;
    const auto idx = all_indices(ds);

    CHECK_THROWS_AS(train_local(params, ds, idx, 0, 0.01, 1), ParameterError);
    CHECK_THROWS_AS(train_local(params, ds, {}, 1, 0.01, 1), ParameterError);
    CHECK_THROWS_AS(train_local(params, ds, idx, 1, 0.0, 1), ParameterError);

    const FlatParams trained = train_local(params, ds, idx, 2, 0.01, 1);
    CHECK(params.values == before);
    CHECK(trained.values != before);

    const FlatParams again = train_local(params, ds, idx, 2, 0.01, 1);
    CHECK(trained.values == again.values);
}

TEST_CASE("two local epochs decrease the training loss") {
    const Dataset ds = gen_synthetic_dataset(7, 400, 20, 4);
    const FlatParams params = init_model(ModelArch{{20, 32, 32, 4}}, 7);
    const auto idx = all_indices(ds);
    const double before = cross_entropy_loss(params, ds, idx);
    const FlatParams trained = train_local(params, ds, idx, 2, 0.01, 42);
    const double after = cross_entropy_loss(trained, ds, idx);
    CHECK(after < before);
}

TEST_CASE("analytic gradient matches central finite differences") {
    // Tiny model: every coordinate checked.
    const Dataset ds = gen_synthetic_dataset(5, 12, 2, 2);
    const ModelArch tiny{{2, 2}};
    FlatParams params = init_model(tiny, 21);
    // Nudge away from ReLU kinks / symmetric init.
    Engine eng(99);
    for (double& v : params.values) v += 0.1 * eng.normal();

    const auto idx = all_indices(ds);
    const auto analytic = loss_gradient(params, ds, idx);
    const auto numeric = numeric_gradient(params, ds, idx);
    REQUIRE(analytic.size() == numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double tol = 1e-4 * std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric[i])});
        CHECK(std::fabs(analytic[i] - numeric[i]) <= tol);
    }

    // Deeper model with hidden ReLU layers.
    const Dataset ds2 = gen_synthetic_dataset(6, 20, 5, 3);
    FlatParams deep = init_model(ModelArch{{5, 4, 3}}, 22);
    const auto idx2 = all_indices(ds2);
    const auto analytic2 = loss_gradient(deep, ds2, idx2);
    const auto numeric2 = numeric_gradient(deep, ds2, idx2);
    for (std::size_t i = 0; i < analytic2.size(); ++i) {
        const double tol =
            1e-4 * std::max({1.0, std::fabs(analytic2[i]), std::fabs(numeric2[i])});
        CHECK(std::fabs(analytic2[i] - numeric2[i]) <= tol);
    }
}

TEST_CASE("evaluate is exact on self-labelled data and rejects misuse") {
    // Label every sample with the model's own prediction: accuracy 1.
    Dataset ds = gen_synthetic_dataset(13, 60, 8, 3);
    const FlatParams params = init_model(ModelArch{{8, 6, 3}}, 2);
    Dataset relabelled = ds;
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        // pick argmax by probing each class score via a 1-sample evaluate trick
        // (cheaper: recompute forward through evaluate on a single-sample set)
        Dataset single;
        single.n_features = ds.n_features;
        single.n_classes = ds.n_classes;
        single.features.assign(ds.sample(i).begin(), ds.sample(i).end());
        single.labels = {0};
        int best = 0;
        for (int c = 0; c < static_cast<int>(ds.n_classes); ++c) {
            single.labels[0] = c;
            if (evaluate(params, single) == 1.0) best = c;
        }
        relabelled.labels[i] = best;
    }
    CHECK(evaluate(params, relabelled) == 1.0);

    Dataset empty;
    empty.n_features = 8;
    empty.n_classes = 3;
    CHECK_THROWS_AS(evaluate(params, empty), ParameterError);

    const Dataset wrong = gen_synthetic_dataset(1, 10, 5, 3);
    CHECK_THROWS_AS(evaluate(params, wrong), ParameterError);
}

TEST_CASE("IDX loader round-trips a hand-written fixture") {
    const auto img_path = temp_file("fedcip_test_images.idx");
    const auto lab_path = temp_file("fedcip_test_labels.idx");
    // 4 images of 2x2 pixels.
    const std::vector<unsigned char> pixels = {0,   64,  128, 255,  //
                                               10,  20,  30,  40,   //
                                               255, 255, 0,   0,    //
                                               1,   2,   3,   4};
    write_idx_images(img_path, 0x00000803u, 4, 2, 2, pixels);
    write_idx_labels(lab_path, 0x00000801u, 4, {0, 1, 2, 1});

    const Dataset ds = load_idx(img_path, lab_path);
    CHECK(ds.n_samples() == 4);
    CHECK(ds.n_features == 4);
    CHECK(ds.n_classes == 3);
    CHECK(ds.labels == std::vector<int>{0, 1, 2, 1});
    CHECK(ds.features[0] == 0.0);
    CHECK(ds.features[1] == doctest::Approx(64.0 / 255.0));
    CHECK(ds.features[3] == 1.0);
}

TEST_CASE("IDX loader names the offending file on errors") {
    const auto img_path = temp_file("fedcip_bad_images.idx");
    const auto lab_path = temp_file("fedcip_bad_labels.idx");

    SUBCASE("bad image magic") {
        write_idx_images(img_path, 0xDEADBEEFu, 1, 2, 2, std::vector<unsigned char>(4, 0));
        write_idx_labels(lab_path, 0x00000801u, 1, {0});
        CHECK_THROWS_WITH_AS(load_idx(img_path, lab_path),
                             doctest::Contains(img_path.string().c_str()), FormatError);
    }
    SUBCASE("count mismatch names both files") {
        write_idx_images(img_path, 0x00000803u, 10, 1, 1, std::vector<unsigned char>(10, 0));
        write_idx_labels(lab_path, 0x00000801u, 9, std::vector<unsigned char>(9, 0));
        CHECK_THROWS_AS(load_idx(img_path, lab_path), FormatError);
    }
    SUBCASE("truncated pixel data") {
        write_idx_images(img_path, 0x00000803u, 4, 2, 2, std::vector<unsigned char>(7, 0));
        write_idx_labels(lab_path, 0x00000801u, 4, {0, 1, 0, 1});
        CHECK_THROWS_WITH_AS(load_idx(img_path, lab_path),
                             doctest::Contains("truncated"), FormatError);
    }
}

TEST_CASE("iid partition deals equal disjoint shards") {
    const Dataset ds = gen_synthetic_dataset(1, 400, 20, 4);
    const ClientPartition part = partition_clients(ds, 10, PartitionMode::Iid, 1);
    REQUIRE(part.num_clients() == 10);
    std::set<std::size_t> seen;
    for (const auto& shard : part.assignments) {
        CHECK(shard.size() == 40);
        for (std::size_t i : shard) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 400);

    const ClientPartition again = partition_clients(ds, 10, PartitionMode::Iid, 1);
    CHECK(again.assignments == part.assignments);
}

TEST_CASE("non-iid partition spans 2-5 labels per client and covers everything") {
    const Dataset ds = gen_synthetic_dataset(1, 400, 20, 4);
    const ClientPartition part = partition_clients(ds, 10, PartitionMode::NonIid, 1);
    std::set<std::size_t> seen;
    for (const auto& shard : part.assignments) {
        CHECK(!shard.empty());
        std::set<int> labels;
        for (std::size_t i : shard) {
            labels.insert(ds.labels[i]);
            CHECK(seen.insert(i).second);
        }
        CHECK(labels.size() >= 2);
        CHECK(labels.size() <= 5);
    }
    CHECK(seen.size() == 400);

    // More classes than the per-client cap: still covered, still within bounds.
    const Dataset wide = gen_synthetic_dataset(2, 600, 10, 10);
    const ClientPartition wide_part = partition_clients(wide, 10, PartitionMode::NonIid, 3);
    std::set<int> covered;
    for (const auto& shard : wide_part.assignments) {
        std::set<int> labels;
        for (std::size_t i : shard) labels.insert(wide.labels[i]);
        CHECK(labels.size() >= 2);
        CHECK(labels.size() <= 5);
        covered.insert(labels.begin(), labels.end());
    }
    CHECK(covered.size() == 10);
}

TEST_CASE("partition rejects more clients than samples") {
    const Dataset ds = gen_synthetic_dataset(1, 8, 4, 2);
    CHECK_THROWS_AS(partition_clients(ds, 9, PartitionMode::Iid, 1), ParameterError);
    CHECK_THROWS_AS(partition_clients(ds, 0, PartitionMode::Iid, 1), ParameterError);
}
