#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "safedom/certify.hpp"
#include "safedom/network.hpp"
#include "safedom/sim/scenario.hpp"
#include "safedom/train.hpp"

namespace safedom {

// File formats. Model, domain, scenario, config, and report files are JSON;
// datasets are a little-endian binary record. Model parameters travel as
// base64-encoded raw float32 bytes so a save/load round trip is bit-exact.

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

std::string model_to_json(const Network& net);
Network model_from_json(const std::string& text);
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

// Binary dataset: magic "SDT1", u32 version, u32 sample_count, u32
// input_dim, u32 num_classes, then per sample input_dim f32 values and a
// u32 label; everything little-endian.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Domain files carry either an explicit domain list or a generator stanza
// {"generator": {"level": L}} resolved through the follow-task generator.
std::string domains_to_json(const std::vector<SafetyDomain>& domains,
                            std::size_t input_dim);
std::vector<SafetyDomain> domains_from_json(const std::string& text);
void save_domains(const std::vector<SafetyDomain>& domains,
                  std::size_t input_dim, const std::filesystem::path& path);
std::vector<SafetyDomain> load_domains(const std::filesystem::path& path);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

std::string train_report_to_json(const TrainReport& report);
void save_train_report(const TrainReport& report,
                       const std::filesystem::path& path);
// CSV trace: epoch,train_loss,safety_term,certified_bound (blank when the
// bound was not evaluated that epoch).
void write_trace_csv(const TrainReport& report,
                     const std::filesystem::path& path);

std::string scenario_to_json(const sim::Scenario& scenario);
sim::Scenario scenario_from_json(const std::string& text);
void save_scenario(const sim::Scenario& scenario,
                   const std::filesystem::path& path);
sim::Scenario load_scenario(const std::filesystem::path& path);

// CSV trajectory: t,x,y,theta,mode,label
void write_trajectory_csv(const sim::ScenarioResult& result,
                          const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
// Write-then-rename so readers never observe a partial file.
void write_text_file_atomic(const std::filesystem::path& path,
                            const std::string& content);

}  // namespace safedom
