#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedcip/errors.hpp"

namespace fedcip {

/// Fully-connected classifier shape: layer_sizes = {input, hidden..., output}.
/// Hidden activations are ReLU; the output layer feeds softmax with
/// cross-entropy loss. The flat parameter layout is, per layer, the weight
/// matrix in row-major order (fan_out x fan_in) followed by the bias vector.
struct ModelArch {
    std::vector<int> layer_sizes;

    std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
    std::size_t param_count() const;
    void validate() const;

    /// true at indices holding a bias entry.
    std::vector<bool> bias_mask() const;

    bool operator==(const ModelArch& other) const = default;
};

/// Index ranges of one layer inside the flat vector.
struct LayerSpan {
    std::size_t weights_begin = 0;
    std::size_t weights_end = 0;  // one past
    std::size_t bias_begin = 0;
    std::size_t bias_end = 0;
    int fan_in = 0;
    int fan_out = 0;
};

std::vector<LayerSpan> layer_spans(const ModelArch& arch);

/// A model's trainable weights as one flat vector. Value type: copies are
/// cheap enough at this scale and every operation returns a fresh vector.
struct FlatParams {
    ModelArch arch;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    void validate() const;

    bool operator==(const FlatParams& other) const = default;
};

/// Per-layer matrix/bias view used by the round-trip tests and anything
/// that prefers shaped access.
struct LayerWeights {
    std::vector<double> weights;  // fan_out x fan_in, row-major
    std::vector<double> bias;     // fan_out
};

std::vector<LayerWeights> unflatten(const FlatParams& params);
FlatParams flatten(const ModelArch& arch, const std::vector<LayerWeights>& layers);

/// Labelled feature matrix, row-major n_samples x n_features.
struct Dataset {
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t n_samples() const { return labels.size(); }
    std::span<const double> sample(std::size_t i) const {
        return {features.data() + i * n_features, n_features};
    }
    void validate() const;
};

enum class PartitionMode { Iid, NonIid };

/// Disjoint split of sample indices among K clients. In NonIid mode every
/// client's shard spans between kMinLabels and kMaxLabels distinct labels.
struct ClientPartition {
    static constexpr int kMinLabels = 2;
    static constexpr int kMaxLabels = 5;

    PartitionMode mode = PartitionMode::Iid;
    std::vector<std::vector<std::size_t>> assignments;

    std::size_t num_clients() const { return assignments.size(); }
};

/// Gaussian-blob classification data: one seeded mean per class, unit-noise
/// samples around it, labels dealt round-robin so per-class counts differ by
/// at most one.
Dataset gen_synthetic_dataset(std::uint64_t seed, int n_samples, int n_features,
                              int n_classes);

/// Reads an IDX image/label file pair (big-endian, magic 0x803 / 0x801).
/// Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

ClientPartition partition_clients(const Dataset& data, int num_clients,
                                  PartitionMode mode, std::uint64_t seed);

/// Weights uniform in +-sqrt(1/fan_in), biases zero.
FlatParams init_model(const ModelArch& arch, std::uint64_t seed);

/// Mean cross-entropy loss over the given samples.
double cross_entropy_loss(const FlatParams& params, const Dataset& data,
                          std::span<const std::size_t> indices);

/// Analytic gradient of cross_entropy_loss with respect to every parameter.
std::vector<double> loss_gradient(const FlatParams& params, const Dataset& data,
                                  std::span<const std::size_t> indices);

/// Mini-batch SGD over the given shard; batch order is drawn from `seed`.
/// Returns a new vector, the input is never modified.
FlatParams train_local(const FlatParams& params, const Dataset& data,
                       std::span<const std::size_t> indices, int epochs, double lr,
                       std::uint64_t seed, int batch_size = 32);

/// Fraction of samples whose argmax prediction matches the label.
double evaluate(const FlatParams& params, const Dataset& data);

}  // namespace fedcip
