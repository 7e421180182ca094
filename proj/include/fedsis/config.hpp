#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsis/protocol.hpp"

namespace fedsis {

struct DataConfig {
  std::size_t domains = 4;
  int target = -1;  // required: the held-out domain id
  double amplitude = 0.5;
  double noise = 0.05;
  double style_strength = 1.0;
  std::size_t bonafide = 96;
  std::size_t print_attacks = 48;
  std::size_t replay_attacks = 48;
  std::size_t group_size = 2;
  bool split_attacks = false;
  std::string path;  // optional FSDS file; replaces the generator
};

struct EvalConfig {
  double fpr_target = 0.01;
  std::string hter_policy = "eer";  // eer | fixed:<tau>
  std::string inference = "sampled";  // sampled | fixed:<l> | averaged:<m>
  std::size_t batch = 64;
  bool dump_features = false;
};

// The experiment file: [run], [model], [protocol], [data], [eval] sections.
// Unknown keys are rejected; every field has a default except protocol.mode
// and data.target.
struct ExperimentConfig {
  std::string run_name = "exp";
  std::vector<uint64_t> seeds{0};
  std::string outdir = "out";
  std::string backend = "omp";  // omp | serial
  int threads = 0;

  ModelConfig model;
  TrainingConfig protocol;
  DataConfig data;
  EvalConfig eval;

  std::optional<std::size_t> grid_check;  // [model] grid, validated if set
  bool mode_set = false;

  static ExperimentConfig from_text(const std::string& text,
                                    const std::vector<std::string>& overrides = {});
  static ExperimentConfig from_file(const std::string& path,
                                    const std::vector<std::string>& overrides = {});

  // Throws unless the required fields are set and all sections validate.
  void finalize();

  // Canonical echo with every key materialized; parsing it reproduces this
  // config exactly.
  std::string echo() const;

  // Builds the generator-backed (or file-backed) domains and the partition.
  std::vector<DomainDataset> build_domains(uint64_t seed) const;
  PartitionPlan build_partition(const std::vector<DomainDataset>& domains) const;
};

}  // namespace fedsis
