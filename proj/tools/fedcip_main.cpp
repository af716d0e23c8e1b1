// fedcip: deterministic federated-learning watermarking experiments,
// leak verification and traitor tracking from the command line.
//
// Exit codes: 0 success/pass, 1 runtime failure, 2 usage/format error,
// 3 verification failure, 4 tracking not yet unique.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedcip/forensics.hpp"
#include "fedcip/scenario.hpp"
#include "fedcip/serialize.hpp"

namespace fs = std::filesystem;
using namespace fedcip;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitVerifyFail = 3;
constexpr int kExitNotUnique = 4;

std::string cycle_checkpoint_name(int cycle) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "cycle_%03d.json", cycle);
    return buf;
}

int cmd_run(const std::string& config_path, const std::string& out_override) {
    ScenarioConfig cfg = load_scenario(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;

    const ScenarioData data = prepare_data(cfg);
    const RunArtifacts art =
        run_training(cfg.federation, data.train, data.partition, data.test_ptr());

    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    save_metrics_csv(art.metrics, out_dir / "metrics.csv");
    save_run_log(art.config, art.logs, out_dir / "cycle_log.json");
    for (const auto& [cycle, snapshot] : art.cycle_snapshots) {
        save_checkpoint(snapshot, out_dir / cycle_checkpoint_name(cycle));
    }
    save_checkpoint(art.final_model, out_dir / "final_model.json");

    const auto scenario_json = scenario_to_json(cfg);
    const std::string hash = config_hash(scenario_json);
    {
        nlohmann::json manifest{{"version", 1},
                                {"config", scenario_json},
                                {"config_hash", hash},
                                {"cycles", static_cast<int>(art.logs.size())},
                                {"rounds", cfg.federation.rounds}};
        std::ofstream mf(out_dir / "manifest.json");
        mf << manifest.dump(2) << '\n';
    }

    if (!cfg.attacks.empty()) {
        save_attack_grid_csv(run_attack_grid(cfg, art, data), out_dir / "attack_grid.csv");
    }

    const RoundMetric& last = art.metrics.back();
    std::printf("config hash   %s\n", hash.c_str());
    std::printf("rounds        %d (%d cycles)\n", cfg.federation.rounds,
                static_cast<int>(art.logs.size()));
    std::printf("final accuracy %.4f\n", last.accuracy);
    std::printf("final wmdacc   %.4f\n", last.wmdacc);
    std::printf("artifacts in   %s\n", out_dir.string().c_str());
    return kExitOk;
}

int cmd_verify(const std::string& model_path, const std::string& log_path, double tau,
               const std::string& out_path) {
    const FlatParams model = load_checkpoint(model_path);
    FederationConfig cfg;
    const std::vector<CycleLog> logs = load_run_log(log_path, &cfg);

    const CycleMatch match = identify_cycle(model, logs, tau);
    const SuspectReport report = suspects(match, logs);

    std::printf("cycle   %d\n", match.cycle_index);
    std::printf("wmdacc  %.4f\n", match.wmdacc);
    std::printf("result  %s (tau=%.2f)\n", match.threshold_passed ? "PASS" : "FAIL", tau);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << report_to_json(report).dump(2) << '\n';
    }
    return match.threshold_passed ? kExitOk : kExitVerifyFail;
}

int cmd_track(const std::vector<std::string>& model_paths, const std::string& log_path,
              double tau, const std::string& out_path) {
    FederationConfig cfg;
    const std::vector<CycleLog> logs = load_run_log(log_path, &cfg);

    std::vector<SuspectReport> reports;
    for (const std::string& path : model_paths) {
        const FlatParams model = load_checkpoint(path);
        const CycleMatch match = identify_cycle(model, logs, tau);
        if (!match.threshold_passed) {
            std::printf("%s: verification failed (wmdacc %.4f < tau %.2f)\n", path.c_str(),
                        match.wmdacc, tau);
            return kExitVerifyFail;
        }
        reports.push_back(suspects(match, logs));
        std::printf("%s: cycle %d, wmdacc %.4f\n", path.c_str(), match.cycle_index,
                    match.wmdacc);
    }

    const TraitorVerdict verdict = track(reports);
    for (std::size_t i = 0; i < verdict.history.size(); ++i) {
        std::printf("after leak %zu: %zu suspect(s):", i + 1, verdict.history[i].size());
        for (int id : verdict.history[i]) std::printf(" %d", id);
        std::printf("\n");
    }
    if (verdict.unique) {
        std::printf("traitor identified: client %d (%d leaks)\n", verdict.remaining.front(),
                    verdict.leaks_used);
    } else {
        std::printf("not yet unique: %zu suspects remain\n", verdict.remaining.size());
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << verdict_to_json(verdict).dump(2) << '\n';
    }
    return verdict.unique ? kExitOk : kExitNotUnique;
}

int cmd_attack(const std::string& model_path, const std::string& out_path, double prune_eta,
               int finetune_rounds, const std::string& config_path, int client_id,
               std::uint64_t seed) {
    if ((prune_eta >= 0.0) == (finetune_rounds > 0)) {
        std::fprintf(stderr, "attack: give exactly one of --prune-eta or --finetune-rounds\n");
        return kExitUsage;
    }
    const FlatParams model = load_checkpoint(model_path);

    AttackSpec attack;
    FlatParams attacked;
    if (prune_eta >= 0.0) {
        attack.kind = AttackKind::Prune;
        attack.prune_eta = prune_eta;
        attacked = prune(model, prune_eta);
    } else {
        if (config_path.empty()) {
            std::fprintf(stderr, "attack: fine-tuning needs --config for the data shard\n");
            return kExitUsage;
        }
        const ScenarioConfig cfg = load_scenario(config_path);
        const ScenarioData data = prepare_data(cfg);
        if (client_id < 0 || static_cast<std::size_t>(client_id) >= data.partition.num_clients()) {
            std::fprintf(stderr, "attack: --client %d out of range\n", client_id);
            return kExitUsage;
        }
        attack.kind = AttackKind::Finetune;
        attack.finetune_rounds = finetune_rounds;
        attack.finetune_lr = cfg.federation.lr;
        attack.seed = seed;
        attacked = finetune(model, data.train, data.partition.assignments[client_id],
                            finetune_rounds, attack.finetune_lr, seed);
    }

    save_checkpoint(attacked, out_path);
    save_leak_sidecar(attack, out_path + ".leak.json");
    std::printf("attacked checkpoint written to %s\n", out_path.c_str());
    return kExitOk;
}

int cmd_analyze(int num_clients, double selection_rate, int max_n) {
    const int threshold = expected_leaks(num_clients, selection_rate);
    if (max_n <= 0) max_n = std::max(threshold + 2, 8);

    std::printf("clients K=%d, selection rate C=%.3f\n", num_clients, selection_rate);
    std::printf("%4s  %14s  %18s\n", "n", "expected N_t", "catch probability");
    for (int n = 1; n <= max_n; ++n) {
        const double nt = num_clients * std::pow(selection_rate, n);
        const double p = catch_probability(selection_rate, n);
        std::printf("%4d  %14.5f  %18.5f%s\n", n, nt, p,
                    n == threshold ? "   <= unique here" : "");
    }
    std::printf("expected leaks to a unique traitor: %d\n", threshold);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedCIP: cycle-based federated watermarking, verification and "
                 "traitor tracking"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string log_path;
    std::string model_path;
    std::vector<std::string> model_paths;
    double tau = kDefaultDetectionThreshold;
    double prune_eta = -1.0;
    int finetune_rounds = 0;
    int client_id = 0;
    std::uint64_t seed = 0;
    int num_clients = 10;
    double selection_rate = 0.5;
    int max_n = 0;

    CLI::App* run = app.add_subcommand("run", "run a federation scenario");
    run->add_option("--config", config_path, "scenario JSON")->required();
    run->add_option("--out", out_path, "output directory (overrides the config)");

    CLI::App* verify = app.add_subcommand("verify", "match a leaked checkpoint to a cycle");
    verify->add_option("model", model_path, "checkpoint JSON")->required();
    verify->add_option("--log", log_path, "cycle log JSON")->required();
    verify->add_option("--tau", tau, "detection threshold");
    verify->add_option("--out", out_path, "write the suspect report as JSON");

    CLI::App* trackc = app.add_subcommand("track", "intersect suspects over several leaks");
    trackc->add_option("models", model_paths, "leaked checkpoints")->required();
    trackc->add_option("--log", log_path, "cycle log JSON")->required();
    trackc->add_option("--tau", tau, "detection threshold");
    trackc->add_option("--out", out_path, "write the verdict as JSON");

    CLI::App* attack = app.add_subcommand("attack", "prune or fine-tune a checkpoint");
    attack->add_option("model", model_path, "checkpoint JSON")->required();
    attack->add_option("--out", out_path, "attacked checkpoint path")->required();
    attack->add_option("--prune-eta", prune_eta, "fraction of weights to zero");
    attack->add_option("--finetune-rounds", finetune_rounds, "continued training epochs");
    attack->add_option("--config", config_path, "scenario JSON (data for fine-tuning)");
    attack->add_option("--client", client_id, "shard used for fine-tuning");
    attack->add_option("--seed", seed, "attack seed");

    CLI::App* analyze = app.add_subcommand("analyze", "leak-count analytics table");
    analyze->add_option("--clients,-K", num_clients, "total clients");
    analyze->add_option("--rate,-C", selection_rate, "selection rate per cycle");
    analyze->add_option("--max-n", max_n, "rows to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_path);
        if (verify->parsed()) return cmd_verify(model_path, log_path, tau, out_path);
        if (trackc->parsed()) return cmd_track(model_paths, log_path, tau, out_path);
        if (attack->parsed()) {
            return cmd_attack(model_path, out_path, prune_eta, finetune_rounds, config_path,
                              client_id, seed);
        }
        if (analyze->parsed()) return cmd_analyze(num_clients, selection_rate, max_n);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IncompatibleModelError& e) {
        std::cerr << "incompatible model: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
