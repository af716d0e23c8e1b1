#include "fedcip/scenario.hpp"

#include <charconv>
#include <fstream>

#include "fedcip/forensics.hpp"
#include "fedcip/rng.hpp"
#include "fedcip/serialize.hpp"

namespace fedcip {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ConfigError(path + ": " + why);
}

const json* maybe(const json& j, const std::string& key) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

int get_int(const json& j, const std::string& path, int fallback, int min_value) {
    if (j.is_null()) return fallback;
    if (!j.is_number_integer()) fail(path, "expected an integer");
    const int v = j.get<int>();
    if (v < min_value) fail(path, "must be >= " + std::to_string(min_value));
    return v;
}

double get_double(const json& j, const std::string& path, double fallback) {
    if (j.is_null()) return fallback;
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::string get_string(const json& j, const std::string& path, const std::string& fallback) {
    if (j.is_null()) return fallback;
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

json at_or_null(const json& j, const std::string& key) {
    const json* p = maybe(j, key);
    return p == nullptr ? json() : *p;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

ScenarioConfig parse_scenario(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario: expected a JSON object");
    if (maybe(j, "version") != nullptr && at_or_null(j, "version").get<int>() != 1) {
        fail("version", "unsupported scenario version");
    }

    ScenarioConfig cfg;
    const json* seed = maybe(j, "seed");
    if (seed == nullptr) fail("seed", "required field is missing");
    if (!seed->is_number_unsigned() && !seed->is_number_integer()) {
        fail("seed", "expected an integer");
    }
    cfg.seed = seed->get<std::uint64_t>();

    const json fed = at_or_null(j, "federation");
    if (!fed.is_null() && !fed.is_object()) fail("federation", "expected an object");
    FederationConfig& f = cfg.federation;
    f.clients = get_int(at_or_null(fed, "clients"), "federation.clients", f.clients, 1);
    f.selection_rate =
        get_double(at_or_null(fed, "selection_rate"), "federation.selection_rate",
                   f.selection_rate);
    f.rounds = get_int(at_or_null(fed, "rounds"), "federation.rounds", f.rounds, 1);
    f.lr = get_double(at_or_null(fed, "lr"), "federation.lr", f.lr);
    f.local_epochs =
        get_int(at_or_null(fed, "local_epochs"), "federation.local_epochs", f.local_epochs, 1);
    f.batch_size =
        get_int(at_or_null(fed, "batch_size"), "federation.batch_size", f.batch_size, 1);
    if (const json* hidden = maybe(fed, "hidden_layers")) {
        if (!hidden->is_array()) fail("federation.hidden_layers", "expected an array");
        f.hidden_layers.clear();
        for (const auto& h : *hidden) {
            f.hidden_layers.push_back(
                get_int(h, "federation.hidden_layers[]", 0, 1));
        }
    }
    if (const json* embed = maybe(fed, "embed_watermarks")) {
        if (!embed->is_boolean()) fail("federation.embed_watermarks", "expected a boolean");
        f.embed_watermarks = embed->get<bool>();
    }
    const json wm = at_or_null(fed, "watermark");
    if (!wm.is_null() && !wm.is_object()) fail("federation.watermark", "expected an object");
    f.wm.alpha = get_double(at_or_null(wm, "alpha"), "federation.watermark.alpha", f.wm.alpha);
    f.wm.beta = get_double(at_or_null(wm, "beta"), "federation.watermark.beta", f.wm.beta);
    f.wm.cycle_length = get_int(at_or_null(wm, "cycle_length"),
                                "federation.watermark.cycle_length", f.wm.cycle_length, 1);
    f.wm.bits_per_client =
        get_int(at_or_null(wm, "bits_per_client"), "federation.watermark.bits_per_client",
                f.wm.bits_per_client, 1);
    f.master_seed = cfg.seed;

    const json ds = at_or_null(j, "dataset");
    if (!ds.is_null() && !ds.is_object()) fail("dataset", "expected an object");
    const std::string source = get_string(at_or_null(ds, "type"), "dataset.type", "synthetic");
    if (source == "synthetic") {
        cfg.dataset.source = DatasetConfig::Source::Synthetic;
        cfg.dataset.train_samples = get_int(at_or_null(ds, "train_samples"),
                                            "dataset.train_samples",
                                            cfg.dataset.train_samples, 1);
        cfg.dataset.test_samples = get_int(at_or_null(ds, "test_samples"),
                                           "dataset.test_samples", cfg.dataset.test_samples, 0);
        cfg.dataset.features =
            get_int(at_or_null(ds, "features"), "dataset.features", cfg.dataset.features, 2);
        cfg.dataset.classes =
            get_int(at_or_null(ds, "classes"), "dataset.classes", cfg.dataset.classes, 2);
    } else if (source == "idx") {
        cfg.dataset.source = DatasetConfig::Source::Idx;
        cfg.dataset.train_images =
            get_string(at_or_null(ds, "train_images"), "dataset.train_images", "");
        cfg.dataset.train_labels =
            get_string(at_or_null(ds, "train_labels"), "dataset.train_labels", "");
        if (cfg.dataset.train_images.empty() || cfg.dataset.train_labels.empty()) {
            fail("dataset", "idx source needs train_images and train_labels");
        }
        cfg.dataset.test_images =
            get_string(at_or_null(ds, "test_images"), "dataset.test_images", "");
        cfg.dataset.test_labels =
            get_string(at_or_null(ds, "test_labels"), "dataset.test_labels", "");
    } else {
        fail("dataset.type", "expected \"synthetic\" or \"idx\"");
    }

    const std::string mode = get_string(at_or_null(j, "partition"), "partition", "iid");
    if (mode == "iid") {
        cfg.partition_mode = PartitionMode::Iid;
    } else if (mode == "non_iid") {
        cfg.partition_mode = PartitionMode::NonIid;
    } else {
        fail("partition", "expected \"iid\" or \"non_iid\"");
    }

    const json attacks = at_or_null(j, "attacks");
    if (!attacks.is_null()) {
        if (!attacks.is_object()) fail("attacks", "expected an object");
        if (const json* etas = maybe(attacks, "prune_etas")) {
            if (!etas->is_array()) fail("attacks.prune_etas", "expected an array");
            for (const auto& e : *etas) {
                const double eta = get_double(e, "attacks.prune_etas[]", 0.0);
                if (eta < 0.0 || eta >= 1.0) fail("attacks.prune_etas[]", "must be in [0, 1)");
                cfg.attacks.prune_etas.push_back(eta);
            }
        }
        if (const json* rounds = maybe(attacks, "finetune_rounds")) {
            if (!rounds->is_array()) fail("attacks.finetune_rounds", "expected an array");
            for (const auto& r : *rounds) {
                cfg.attacks.finetune_rounds.push_back(
                    get_int(r, "attacks.finetune_rounds[]", 0, 1));
            }
        }
    }

    cfg.output_dir = get_string(at_or_null(j, "output_dir"), "output_dir", cfg.output_dir);
    cfg.federation.validate();
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_scenario(j);
}

json scenario_to_json(const ScenarioConfig& cfg) {
    json ds;
    if (cfg.dataset.source == DatasetConfig::Source::Synthetic) {
        ds = json{{"type", "synthetic"},
                  {"train_samples", cfg.dataset.train_samples},
                  {"test_samples", cfg.dataset.test_samples},
                  {"features", cfg.dataset.features},
                  {"classes", cfg.dataset.classes}};
    } else {
        ds = json{{"type", "idx"},
                  {"train_images", cfg.dataset.train_images},
                  {"train_labels", cfg.dataset.train_labels},
                  {"test_images", cfg.dataset.test_images},
                  {"test_labels", cfg.dataset.test_labels}};
    }
    json attacks = json::object();
    if (!cfg.attacks.prune_etas.empty()) attacks["prune_etas"] = cfg.attacks.prune_etas;
    if (!cfg.attacks.finetune_rounds.empty()) {
        attacks["finetune_rounds"] = cfg.attacks.finetune_rounds;
    }
    return json{{"version", 1},
                {"seed", cfg.seed},
                {"federation", config_to_json(cfg.federation)},
                {"dataset", ds},
                {"partition", cfg.partition_mode == PartitionMode::Iid ? "iid" : "non_iid"},
                {"attacks", attacks},
                {"output_dir", cfg.output_dir}};
}

ScenarioData prepare_data(const ScenarioConfig& cfg) {
    ScenarioData out;
    if (cfg.dataset.source == DatasetConfig::Source::Synthetic) {
        // One pool split into train/test keeps the class means shared.
        const int total = cfg.dataset.train_samples + cfg.dataset.test_samples;
        const Dataset pool = gen_synthetic_dataset(cfg.seed, total, cfg.dataset.features,
                                                   cfg.dataset.classes);
        Dataset train;
        train.n_features = pool.n_features;
        train.n_classes = pool.n_classes;
        const std::size_t n_train = static_cast<std::size_t>(cfg.dataset.train_samples);
        train.features.assign(pool.features.begin(),
                              pool.features.begin() + n_train * pool.n_features);
        train.labels.assign(pool.labels.begin(), pool.labels.begin() + n_train);
        out.train = std::move(train);
        if (cfg.dataset.test_samples > 0) {
            Dataset test;
            test.n_features = pool.n_features;
            test.n_classes = pool.n_classes;
            test.features.assign(pool.features.begin() + n_train * pool.n_features,
                                 pool.features.end());
            test.labels.assign(pool.labels.begin() + n_train, pool.labels.end());
            out.test = std::move(test);
        }
    } else {
        out.train = load_idx(cfg.dataset.train_images, cfg.dataset.train_labels);
        if (!cfg.dataset.test_images.empty()) {
            out.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        }
    }
    out.partition = partition_clients(out.train, cfg.federation.clients, cfg.partition_mode,
                                      cfg.seed);
    return out;
}

RunArtifacts run_scenario(const ScenarioConfig& cfg) {
    const ScenarioData data = prepare_data(cfg);
    return run_training(cfg.federation, data.train, data.partition, data.test_ptr());
}

std::vector<AttackGridRow> run_attack_grid(const ScenarioConfig& cfg,
                                           const RunArtifacts& artifacts,
                                           const ScenarioData& data) {
    std::vector<AttackGridRow> rows;
    if (cfg.attacks.empty() || artifacts.logs.empty()) return rows;

    const int true_cycle = artifacts.logs.back().cycle_index;
    const int leaker = artifacts.logs.back().selected.front();
    const Dataset& eval_data = data.test.has_value() ? *data.test : data.train;

    std::size_t cell = 0;
    auto evaluate_attack = [&](const AttackSpec& attack, const std::string& name,
                               double parameter) {
        const LeakEvent event =
            leak(artifacts, leaker, true_cycle, attack, &data.train, &data.partition);
        const CycleMatch match = identify_cycle(event.model, artifacts.logs);
        AttackGridRow row;
        row.attack = name;
        row.parameter = parameter;
        row.wmdacc = match.wmdacc;
        row.accuracy = evaluate(event.model, eval_data);
        row.identified_cycle = match.cycle_index;
        row.true_cycle = true_cycle;
        rows.push_back(row);
        ++cell;
    };

    for (double eta : cfg.attacks.prune_etas) {
        AttackSpec attack;
        attack.kind = AttackKind::Prune;
        attack.prune_eta = eta;
        evaluate_attack(attack, "prune", eta);
    }
    for (int rounds : cfg.attacks.finetune_rounds) {
        AttackSpec attack;
        attack.kind = AttackKind::Finetune;
        attack.finetune_rounds = rounds;
        attack.finetune_lr = cfg.federation.lr;
        attack.seed = mix_seed(cfg.seed, {seed_domain::kAttack, cell});
        evaluate_attack(attack, "finetune", static_cast<double>(rounds));
    }
    return rows;
}

void save_attack_grid_csv(const std::vector<AttackGridRow>& rows,
                          const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "attack,parameter,wmdacc,accuracy,identified_cycle,true_cycle\n";
    for (const AttackGridRow& r : rows) {
        out << r.attack << ',' << format_double(r.parameter) << ',' << format_double(r.wmdacc)
            << ',' << format_double(r.accuracy) << ',' << r.identified_cycle << ','
            << r.true_cycle << '\n';
    }
}

}  // namespace fedcip
