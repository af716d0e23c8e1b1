#include "fedcip/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "fedcip/rng.hpp"

namespace fedcip {

// ---------------------------------------------------------------------------
// ModelArch / FlatParams

std::size_t ModelArch::param_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        total += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] +
                 layer_sizes[l + 1];
    }
    return total;
}

void ModelArch::validate() const {
    if (layer_sizes.size() < 2) {
        throw ParameterError("model arch needs at least an input and an output layer");
    }
    for (int s : layer_sizes) {
        if (s < 1) throw ParameterError("model arch layer sizes must be >= 1");
    }
}

std::vector<bool> ModelArch::bias_mask() const {
    std::vector<bool> mask(param_count(), false);
    for (const LayerSpan& s : layer_spans(*this)) {
        for (std::size_t i = s.bias_begin; i < s.bias_end; ++i) mask[i] = true;
    }
    return mask;
}

std::vector<LayerSpan> layer_spans(const ModelArch& arch) {
    std::vector<LayerSpan> spans;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
        LayerSpan s;
        s.fan_in = arch.layer_sizes[l];
        s.fan_out = arch.layer_sizes[l + 1];
        s.weights_begin = offset;
        s.weights_end = offset + static_cast<std::size_t>(s.fan_in) * s.fan_out;
        s.bias_begin = s.weights_end;
        s.bias_end = s.bias_begin + s.fan_out;
        offset = s.bias_end;
        spans.push_back(s);
    }
    return spans;
}

void FlatParams::validate() const {
    arch.validate();
    if (values.size() != arch.param_count()) {
        throw ParameterError("parameter vector length does not match the architecture");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ParameterError("parameter vector contains NaN or Inf");
    }
}

std::vector<LayerWeights> unflatten(const FlatParams& params) {
    std::vector<LayerWeights> layers;
    for (const LayerSpan& s : layer_spans(params.arch)) {
        LayerWeights lw;
        lw.weights.assign(params.values.begin() + s.weights_begin,
                          params.values.begin() + s.weights_end);
        lw.bias.assign(params.values.begin() + s.bias_begin,
                       params.values.begin() + s.bias_end);
        layers.push_back(std::move(lw));
    }
    return layers;
}

FlatParams flatten(const ModelArch& arch, const std::vector<LayerWeights>& layers) {
    arch.validate();
    if (layers.size() != arch.num_layers()) {
        throw ParameterError("layer count does not match the architecture");
    }
    FlatParams out;
    out.arch = arch;
    out.values.reserve(arch.param_count());
    for (const LayerWeights& lw : layers) {
        out.values.insert(out.values.end(), lw.weights.begin(), lw.weights.end());
        out.values.insert(out.values.end(), lw.bias.begin(), lw.bias.end());
    }
    if (out.values.size() != arch.param_count()) {
        throw ParameterError("flattened length does not match the architecture");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const {
    if (n_samples() < 1) throw ParameterError("dataset is empty");
    if (n_classes < 1) throw ParameterError("dataset needs at least one class");
    if (features.size() != n_samples() * n_features) {
        throw ParameterError("feature matrix shape mismatch");
    }
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= n_classes) {
            throw ParameterError("label out of range");
        }
    }
    for (double f : features) {
        if (!std::isfinite(f)) throw ParameterError("feature matrix contains NaN or Inf");
    }
}

Dataset gen_synthetic_dataset(std::uint64_t seed, int n_samples, int n_features,
                              int n_classes) {
    if (n_classes < 2) throw ParameterError("gen_synthetic_dataset: n_classes must be >= 2");
    if (n_samples < n_classes) {
        throw ParameterError("gen_synthetic_dataset: n_samples must be >= n_classes");
    }
    if (n_features < 2) throw ParameterError("gen_synthetic_dataset: n_features must be >= 2");

    Engine eng(mix_seed(seed, {seed_domain::kDataGen}));

    // Class means at scale 3 versus unit noise keeps the blobs well separated
    // in a few dimensions already.
    std::vector<double> means(static_cast<std::size_t>(n_classes) * n_features);
    for (double& m : means) m = 3.0 * eng.normal();

    Dataset ds;
    ds.n_features = static_cast<std::size_t>(n_features);
    ds.n_classes = static_cast<std::size_t>(n_classes);
    ds.features.resize(static_cast<std::size_t>(n_samples) * n_features);
    ds.labels.resize(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const int c = i % n_classes;
        ds.labels[i] = c;
        for (int j = 0; j < n_features; ++j) {
            ds.features[static_cast<std::size_t>(i) * n_features + j] =
                means[static_cast<std::size_t>(c) * n_features + j] + eng.normal();
        }
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) {
        throw FormatError("truncated IDX header in " + path.string());
    }
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open " + images_path.string());
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open " + labels_path.string());

    const std::uint32_t img_magic = read_be32(img, images_path);
    if (img_magic != 0x00000803u) {
        throw FormatError("bad magic number in " + images_path.string() +
                          " (expected 0x00000803)");
    }
    const std::uint32_t n_images = read_be32(img, images_path);
    const std::uint32_t rows = read_be32(img, images_path);
    const std::uint32_t cols = read_be32(img, images_path);

    const std::uint32_t lab_magic = read_be32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        throw FormatError("bad magic number in " + labels_path.string() +
                          " (expected 0x00000801)");
    }
    const std::uint32_t n_labels = read_be32(lab, labels_path);
    if (n_images != n_labels) {
        throw FormatError("image/label count mismatch: " + images_path.string() + " has " +
                          std::to_string(n_images) + ", " + labels_path.string() + " has " +
                          std::to_string(n_labels));
    }

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    Dataset ds;
    ds.n_features = pixels;
    ds.features.resize(static_cast<std::size_t>(n_images) * pixels);
    ds.labels.resize(n_images);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels))) {
            throw FormatError("truncated image data in " + images_path.string());
        }
        for (std::size_t j = 0; j < pixels; ++j) {
            ds.features[static_cast<std::size_t>(i) * pixels + j] = buf[j] / 255.0;
        }
        char byte;
        if (!lab.read(&byte, 1)) {
            throw FormatError("truncated label data in " + labels_path.string());
        }
        ds.labels[i] = static_cast<unsigned char>(byte);
    }

    const int max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.n_classes = static_cast<std::size_t>(max_label) + 1;
    ds.validate();
    return ds;
}

namespace {

ClientPartition partition_iid(const Dataset& data, int num_clients, Engine& eng) {
    std::vector<std::size_t> order(data.n_samples());
    std::iota(order.begin(), order.end(), 0);
    eng.shuffle(order);

    ClientPartition part;
    part.mode = PartitionMode::Iid;
    part.assignments.resize(num_clients);
    const std::size_t base = data.n_samples() / num_clients;
    const std::size_t extra = data.n_samples() % num_clients;
    std::size_t pos = 0;
    for (int k = 0; k < num_clients; ++k) {
        const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        part.assignments[k].assign(order.begin() + pos, order.begin() + pos + len);
        pos += len;
    }
    return part;
}

// Label-skewed split: deal every label to some client first (coverage), then
// top each client up to a target of 2..5 distinct labels, then divide each
// label's samples among its owners.
ClientPartition partition_non_iid(const Dataset& data, int num_clients, Engine& eng) {
    const int n_classes = static_cast<int>(data.n_classes);
    const int max_labels = std::min(ClientPartition::kMaxLabels, n_classes);
    if (n_classes < ClientPartition::kMinLabels) {
        throw ParameterError("non-iid partition needs at least 2 classes");
    }
    if (n_classes > num_clients * max_labels) {
        throw ParameterError("non-iid partition cannot cover " + std::to_string(n_classes) +
                             " classes with " + std::to_string(num_clients) + " clients");
    }

    for (int attempt = 0; attempt < 32; ++attempt) {
        // Pass 1: deal a shuffled label deck cyclically so every label is owned.
        std::vector<int> deck(n_classes);
        std::iota(deck.begin(), deck.end(), 0);
        eng.shuffle(deck);
        std::vector<std::set<int>> owned(num_clients);
        for (int i = 0; i < n_classes; ++i) owned[i % num_clients].insert(deck[i]);

        // Pass 2: top up to a per-client target drawn from [2, max_labels].
        for (int k = 0; k < num_clients; ++k) {
            const int have = static_cast<int>(owned[k].size());
            const int lo = std::max(ClientPartition::kMinLabels, have);
            const int target = lo + static_cast<int>(eng.below(max_labels - lo + 1));
            std::vector<int> rest;
            for (int c = 0; c < n_classes; ++c) {
                if (!owned[k].count(c)) rest.push_back(c);
            }
            eng.shuffle(rest);
            for (int i = 0; i < target - have; ++i) owned[k].insert(rest[i]);
        }

        // Divide each label's samples among its owners, near-equal chunks.
        std::vector<std::vector<std::size_t>> by_label(n_classes);
        for (std::size_t i = 0; i < data.n_samples(); ++i) by_label[data.labels[i]].push_back(i);

        ClientPartition part;
        part.mode = PartitionMode::NonIid;
        part.assignments.resize(num_clients);
        for (int c = 0; c < n_classes; ++c) {
            std::vector<int> owners;
            for (int k = 0; k < num_clients; ++k) {
                if (owned[k].count(c)) owners.push_back(k);
            }
            eng.shuffle(by_label[c]);
            eng.shuffle(owners);
            const std::size_t n = by_label[c].size();
            const std::size_t base = n / owners.size();
            const std::size_t extra = n % owners.size();
            std::size_t pos = 0;
            for (std::size_t o = 0; o < owners.size(); ++o) {
                const std::size_t len = base + (o < extra ? 1 : 0);
                auto& dst = part.assignments[owners[o]];
                dst.insert(dst.end(), by_label[c].begin() + pos, by_label[c].begin() + pos + len);
                pos += len;
            }
        }

        // A sparse label can leave an owner without samples of it; accept the
        // partition only if every client realises >= 2 distinct labels.
        bool ok = true;
        for (int k = 0; k < num_clients && ok; ++k) {
            std::set<int> seen;
            for (std::size_t i : part.assignments[k]) seen.insert(data.labels[i]);
            ok = seen.size() >= ClientPartition::kMinLabels &&
                 seen.size() <= static_cast<std::size_t>(ClientPartition::kMaxLabels);
        }
        if (ok) {
            for (auto& shard : part.assignments) std::sort(shard.begin(), shard.end());
            return part;
        }
    }
    throw ScenarioError("could not build a non-iid partition with 2-5 labels per client");
}

}  // namespace

ClientPartition partition_clients(const Dataset& data, int num_clients, PartitionMode mode,
                                  std::uint64_t seed) {
    data.validate();
    if (num_clients < 1) throw ParameterError("partition_clients: need at least one client");
    if (static_cast<std::size_t>(num_clients) > data.n_samples()) {
        throw ParameterError("partition_clients: more clients than samples");
    }
    Engine eng(mix_seed(seed, {seed_domain::kPartition, static_cast<std::uint64_t>(mode)}));
    return mode == PartitionMode::Iid ? partition_iid(data, num_clients, eng)
                                      : partition_non_iid(data, num_clients, eng);
}

// ---------------------------------------------------------------------------
// MLP

FlatParams init_model(const ModelArch& arch, std::uint64_t seed) {
    arch.validate();
    Engine eng(mix_seed(seed, {seed_domain::kModelInit}));
    FlatParams params;
    params.arch = arch;
    params.values.assign(arch.param_count(), 0.0);
    for (const LayerSpan& s : layer_spans(arch)) {
        const double bound = std::sqrt(1.0 / s.fan_in);
        for (std::size_t i = s.weights_begin; i < s.weights_end; ++i) {
            params.values[i] = eng.uniform(-bound, bound);
        }
        // biases stay zero
    }
    return params;
}

namespace {

// Forward pass for one sample: fills activations[l] (post-ReLU for hidden
// layers, softmax probabilities for the output layer).
void forward_sample(const FlatParams& params, const std::vector<LayerSpan>& spans,
                    std::span<const double> x,
                    std::vector<std::vector<double>>& activations, double* loss_out,
                    int label) {
    const double* v = params.values.data();
    const double* input = x.data();
    std::size_t input_len = x.size();

    for (std::size_t l = 0; l < spans.size(); ++l) {
        const LayerSpan& s = spans[l];
        auto& out = activations[l];
        out.assign(s.fan_out, 0.0);
        for (int r = 0; r < s.fan_out; ++r) {
            const double* row = v + s.weights_begin + static_cast<std::size_t>(r) * s.fan_in;
            double z = v[s.bias_begin + r];
            for (std::size_t c = 0; c < input_len; ++c) z += row[c] * input[c];
            out[r] = z;
        }
        if (l + 1 < spans.size()) {
            for (double& z : out) z = z > 0.0 ? z : 0.0;  // ReLU
        }
        input = out.data();
        input_len = out.size();
    }

    // Softmax with max subtraction; loss via log-sum-exp.
    auto& logits = activations.back();
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp(z - zmax);
        sum += z;
    }
    if (loss_out != nullptr) {
        // logits[label] currently holds exp(z_label - zmax)
        *loss_out += std::log(sum) - std::log(logits[label]);
    }
    for (double& z : logits) z /= sum;
}

// Accumulates scale * dLoss/dParam for one sample into grad.
void backprop_sample(const FlatParams& params, const std::vector<LayerSpan>& spans,
                     std::span<const double> x, int label,
                     std::vector<std::vector<double>>& activations,
                     std::vector<double>& grad, double scale, double* loss_out) {
    forward_sample(params, spans, x, activations, loss_out, label);

    // delta of the output layer: softmax - onehot
    std::vector<double> delta = activations.back();
    delta[label] -= 1.0;

    const double* v = params.values.data();
    for (std::size_t l = spans.size(); l-- > 0;) {
        const LayerSpan& s = spans[l];
        const double* prev = l == 0 ? x.data() : activations[l - 1].data();
        const std::size_t prev_len = l == 0 ? x.size() : activations[l - 1].size();

        for (int r = 0; r < s.fan_out; ++r) {
            const double d = delta[r] * scale;
            double* grow = grad.data() + s.weights_begin + static_cast<std::size_t>(r) * s.fan_in;
            for (std::size_t c = 0; c < prev_len; ++c) grow[c] += d * prev[c];
            grad[s.bias_begin + r] += d;
        }

        if (l == 0) break;
        std::vector<double> next_delta(prev_len, 0.0);
        for (int r = 0; r < s.fan_out; ++r) {
            const double d = delta[r];
            const double* row = v + s.weights_begin + static_cast<std::size_t>(r) * s.fan_in;
            for (std::size_t c = 0; c < prev_len; ++c) next_delta[c] += row[c] * d;
        }
        // ReLU derivative: activations[l-1] is post-ReLU, zero means blocked.
        for (std::size_t c = 0; c < prev_len; ++c) {
            if (activations[l - 1][c] <= 0.0) next_delta[c] = 0.0;
        }
        delta = std::move(next_delta);
    }
}

void check_dims(const FlatParams& params, const Dataset& data) {
    params.arch.validate();
    if (static_cast<std::size_t>(params.arch.layer_sizes.front()) != data.n_features) {
        throw ParameterError("feature width does not match the model input layer");
    }
    if (static_cast<std::size_t>(params.arch.layer_sizes.back()) < data.n_classes) {
        throw ParameterError("output layer smaller than the number of classes");
    }
}

}  // namespace

double cross_entropy_loss(const FlatParams& params, const Dataset& data,
                          std::span<const std::size_t> indices) {
    check_dims(params, data);
    if (indices.empty()) throw ParameterError("cross_entropy_loss: empty index list");
    const auto spans = layer_spans(params.arch);
    std::vector<std::vector<double>> activations(spans.size());
    double loss = 0.0;
    for (std::size_t i : indices) {
        forward_sample(params, spans, data.sample(i), activations, &loss, data.labels[i]);
    }
    return loss / static_cast<double>(indices.size());
}

std::vector<double> loss_gradient(const FlatParams& params, const Dataset& data,
                                  std::span<const std::size_t> indices) {
    check_dims(params, data);
    if (indices.empty()) throw ParameterError("loss_gradient: empty index list");
    const auto spans = layer_spans(params.arch);
    std::vector<std::vector<double>> activations(spans.size());
    std::vector<double> grad(params.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(indices.size());
    for (std::size_t i : indices) {
        backprop_sample(params, spans, data.sample(i), data.labels[i], activations, grad,
                        scale, nullptr);
    }
    return grad;
}

FlatParams train_local(const FlatParams& params, const Dataset& data,
                       std::span<const std::size_t> indices, int epochs, double lr,
                       std::uint64_t seed, int batch_size) {
    check_dims(params, data);
    if (indices.empty()) throw ParameterError("train_local: empty index list");
    if (epochs < 1) throw ParameterError("train_local: epochs must be >= 1");
    if (lr <= 0.0) throw ParameterError("train_local: learning rate must be positive");
    if (batch_size < 1) throw ParameterError("train_local: batch size must be >= 1");

    Engine eng(mix_seed(seed, {seed_domain::kBatchOrder}));
    const auto spans = layer_spans(params.arch);
    std::vector<std::vector<double>> activations(spans.size());

    FlatParams out = params;
    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::vector<double> grad(out.size());
    for (int e = 0; e < epochs; ++e) {
        eng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                backprop_sample(out, spans, data.sample(order[i]), data.labels[order[i]],
                                activations, grad, scale, nullptr);
            }
            for (std::size_t j = 0; j < out.values.size(); ++j) {
                out.values[j] -= lr * grad[j];
            }
        }
    }
    return out;
}

double evaluate(const FlatParams& params, const Dataset& data) {
    check_dims(params, data);
    if (data.n_samples() == 0) throw ParameterError("evaluate: empty dataset");
    const auto spans = layer_spans(params.arch);
    std::vector<std::vector<double>> activations(spans.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
        forward_sample(params, spans, data.sample(i), activations, nullptr, data.labels[i]);
        const auto& probs = activations.back();
        const auto argmax = std::max_element(probs.begin(), probs.end()) - probs.begin();
        if (argmax == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.n_samples());
}

}  // namespace fedcip
