#include "fedcip/serialize.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

namespace fedcip {

using nlohmann::json;

namespace {

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return j;
}

void write_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void require_version(const json& j, int version, const std::string& what) {
    if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer() ||
        j["version"].get<int>() != version) {
        throw FormatError(what + ": missing or unsupported version (expected " +
                          std::to_string(version) + ")");
    }
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

json checkpoint_to_json(const FlatParams& params) {
    return json{{"version", 1}, {"arch", params.arch.layer_sizes}, {"values", params.values}};
}

FlatParams checkpoint_from_json(const json& j) {
    require_version(j, 1, "checkpoint");
    if (!j.contains("arch") || !j["arch"].is_array() || !j.contains("values") ||
        !j["values"].is_array()) {
        throw FormatError("checkpoint: expected fields arch and values");
    }
    FlatParams params;
    params.arch.layer_sizes = j["arch"].get<std::vector<int>>();
    params.values = j["values"].get<std::vector<double>>();
    try {
        params.validate();
    } catch (const ParameterError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return params;
}

void save_checkpoint(const FlatParams& params, const std::filesystem::path& path) {
    write_file(checkpoint_to_json(params), path);
}

FlatParams load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_json(parse_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json dataset_to_json(const Dataset& data) {
    json rows = json::array();
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
        const auto s = data.sample(i);
        rows.push_back(json(std::vector<double>(s.begin(), s.end())));
    }
    return json{{"version", 1},
                {"classes", data.n_classes},
                {"features", rows},
                {"labels", data.labels}};
}

Dataset dataset_from_json(const json& j) {
    require_version(j, 1, "dataset");
    Dataset data;
    data.n_classes = j.at("classes").get<std::size_t>();
    data.labels = j.at("labels").get<std::vector<int>>();
    const auto& rows = j.at("features");
    if (!rows.is_array() || rows.empty()) throw FormatError("dataset: empty feature matrix");
    data.n_features = rows.front().size();
    data.features.reserve(rows.size() * data.n_features);
    for (const auto& row : rows) {
        if (row.size() != data.n_features) {
            throw FormatError("dataset: ragged feature matrix");
        }
        for (const auto& v : row) data.features.push_back(v.get<double>());
    }
    try {
        data.validate();
    } catch (const ParameterError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
    return data;
}

json config_to_json(const FederationConfig& cfg) {
    return json{{"clients", cfg.clients},
                {"selection_rate", cfg.selection_rate},
                {"rounds", cfg.rounds},
                {"lr", cfg.lr},
                {"local_epochs", cfg.local_epochs},
                {"batch_size", cfg.batch_size},
                {"hidden_layers", cfg.hidden_layers},
                {"master_seed", cfg.master_seed},
                {"embed_watermarks", cfg.embed_watermarks},
                {"watermark",
                 {{"alpha", cfg.wm.alpha},
                  {"beta", cfg.wm.beta},
                  {"cycle_length", cfg.wm.cycle_length},
                  {"bits_per_client", cfg.wm.bits_per_client}}}};
}

FederationConfig config_from_json(const json& j) {
    FederationConfig cfg;
    cfg.clients = j.at("clients").get<int>();
    cfg.selection_rate = j.at("selection_rate").get<double>();
    cfg.rounds = j.at("rounds").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.local_epochs = j.at("local_epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    cfg.embed_watermarks = j.at("embed_watermarks").get<bool>();
    const auto& wm = j.at("watermark");
    cfg.wm.alpha = wm.at("alpha").get<double>();
    cfg.wm.beta = wm.at("beta").get<double>();
    cfg.wm.cycle_length = wm.at("cycle_length").get<int>();
    cfg.wm.bits_per_client = wm.at("bits_per_client").get<int>();
    return cfg;
}

json cycle_log_to_json(const CycleLog& log) {
    json watermarks = json::object();
    for (const auto& [id, wm] : log.watermarks) watermarks[std::to_string(id)] = wm.bits;
    json slots = json::object();
    for (const auto& [id, ss] : log.slot_sets) slots[std::to_string(id)] = ss.slots;
    return json{{"cycle", log.cycle_index},
                {"selected", log.selected},
                {"watermarks", watermarks},
                {"slots", slots},
                {"federated_watermark", log.federated_watermark.bits}};
}

CycleLog cycle_log_from_json(const json& j) {
    CycleLog log;
    log.cycle_index = j.at("cycle").get<int>();
    log.selected = j.at("selected").get<std::vector<int>>();
    for (const auto& [key, bits] : j.at("watermarks").items()) {
        Watermark wm;
        wm.bits = bits.get<std::vector<int>>();
        wm.validate();
        log.watermarks[std::stoi(key)] = std::move(wm);
    }
    for (const auto& [key, idxs] : j.at("slots").items()) {
        SlotSet ss;
        ss.client_id = std::stoi(key);
        ss.slots = idxs.get<std::vector<std::size_t>>();
        log.slot_sets[ss.client_id] = std::move(ss);
    }
    log.federated_watermark.bits = j.at("federated_watermark").get<std::vector<int>>();
    log.federated_watermark.validate();
    return log;
}

void save_run_log(const FederationConfig& cfg, const std::vector<CycleLog>& logs,
                  const std::filesystem::path& path) {
    const json cfg_json = config_to_json(cfg);
    json cycles = json::array();
    for (const CycleLog& log : logs) cycles.push_back(cycle_log_to_json(log));
    write_file(json{{"version", 1},
                    {"config", cfg_json},
                    {"config_hash", config_hash(cfg_json)},
                    {"cycles", cycles}},
               path);
}

std::vector<CycleLog> load_run_log(const std::filesystem::path& path,
                                   FederationConfig* cfg_out) {
    const json j = parse_file(path);
    try {
        require_version(j, 1, "run log");
        if (cfg_out != nullptr) *cfg_out = config_from_json(j.at("config"));
        std::vector<CycleLog> logs;
        for (const auto& c : j.at("cycles")) logs.push_back(cycle_log_from_json(c));
        return logs;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_metrics_csv(const std::vector<RoundMetric>& metrics,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "round,accuracy,cycle,wmdacc\n";
    for (const RoundMetric& m : metrics) {
        out << m.round << ',' << format_double(m.accuracy) << ',' << m.cycle << ','
            << format_double(m.wmdacc) << '\n';
    }
}

json attack_to_json(const AttackSpec& attack) {
    switch (attack.kind) {
        case AttackKind::None:
            return json{{"type", "none"}};
        case AttackKind::Prune:
            return json{{"type", "prune"}, {"eta", attack.prune_eta}};
        case AttackKind::Finetune:
            return json{{"type", "finetune"},
                        {"rounds", attack.finetune_rounds},
                        {"lr", attack.finetune_lr},
                        {"seed", attack.seed}};
    }
    throw ParameterError("attack_to_json: unknown attack kind");
}

AttackSpec attack_from_json(const json& j) {
    AttackSpec attack;
    const std::string type = j.at("type").get<std::string>();
    if (type == "none") {
        attack.kind = AttackKind::None;
    } else if (type == "prune") {
        attack.kind = AttackKind::Prune;
        attack.prune_eta = j.at("eta").get<double>();
    } else if (type == "finetune") {
        attack.kind = AttackKind::Finetune;
        attack.finetune_rounds = j.at("rounds").get<int>();
        attack.finetune_lr = j.at("lr").get<double>();
        attack.seed = j.value("seed", std::uint64_t{0});
    } else {
        throw FormatError("attack descriptor: unknown type '" + type + "'");
    }
    return attack;
}

void save_leak_sidecar(const AttackSpec& attack, const std::filesystem::path& path) {
    write_file(json{{"leak", {{"attack", attack_to_json(attack)}}}}, path);
}

json report_to_json(const SuspectReport& report) {
    return json{{"match",
                 {{"cycle", report.match.cycle_index},
                  {"wmdacc", report.match.wmdacc},
                  {"threshold_passed", report.match.threshold_passed}}},
                {"suspects", report.suspects}};
}

json verdict_to_json(const TraitorVerdict& verdict) {
    return json{{"remaining", verdict.remaining},
                {"unique", verdict.unique},
                {"leaks_used", verdict.leaks_used}};
}

std::string config_hash(const json& j) {
    const std::string canon = j.dump();  // nlohmann objects iterate in sorted key order
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fedcip
