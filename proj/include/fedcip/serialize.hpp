#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcip/adversary.hpp"
#include "fedcip/federation.hpp"
#include "fedcip/forensics.hpp"
#include "fedcip/model.hpp"

namespace fedcip {

// File formats. All JSON documents carry a "version" field; floats are
// written with round-trip precision so reload is bit-exact.

nlohmann::json checkpoint_to_json(const FlatParams& params);
FlatParams checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const FlatParams& params, const std::filesystem::path& path);
FlatParams load_checkpoint(const std::filesystem::path& path);

nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const FederationConfig& cfg);
FederationConfig config_from_json(const nlohmann::json& j);

nlohmann::json cycle_log_to_json(const CycleLog& log);
CycleLog cycle_log_from_json(const nlohmann::json& j);

/// Whole-run log file: {"version":1,"config":{...},"config_hash":"...",
/// "cycles":[...]}.
void save_run_log(const FederationConfig& cfg, const std::vector<CycleLog>& logs,
                  const std::filesystem::path& path);
std::vector<CycleLog> load_run_log(const std::filesystem::path& path,
                                   FederationConfig* cfg_out = nullptr);

/// CSV with header round,accuracy,cycle,wmdacc; floats in shortest
/// round-trip form.
void save_metrics_csv(const std::vector<RoundMetric>& metrics,
                      const std::filesystem::path& path);

nlohmann::json attack_to_json(const AttackSpec& attack);
AttackSpec attack_from_json(const nlohmann::json& j);

/// Sidecar written next to attacked checkpoints: {"leak":{"attack":{...}}}.
/// Cycle and traitor identity are deliberately absent.
void save_leak_sidecar(const AttackSpec& attack, const std::filesystem::path& path);

nlohmann::json report_to_json(const SuspectReport& report);
nlohmann::json verdict_to_json(const TraitorVerdict& verdict);

/// FNV-1a over the canonical (sorted-key, compact) dump, as a hex string.
std::string config_hash(const nlohmann::json& j);

}  // namespace fedcip
