#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsis/tensor.hpp"

namespace fedsis {

inline constexpr uint8_t kAttackNone = 0;
inline constexpr uint8_t kAttackPrint = 1;
inline constexpr uint8_t kAttackReplay = 2;

const char* attack_name(uint8_t attack);

// Per-domain style: what changes between capture setups while the class
// signal stays put.
struct DomainSpec {
  uint16_t domain_id = 0;
  std::array<double, 3> mean_shift{0.0, 0.0, 0.0};
  double contrast = 1.0;
  double noise_sigma = 0.0;
  double bg_phase = 0.0;         // low-frequency background pattern phase
  std::size_t bonafide_count = 64;
  std::size_t print_count = 32;
  std::size_t replay_count = 32;
  std::size_t group_size = 1;    // consecutive samples sharing a group id
};

// Shared generator constants: the class signal is a high-frequency
// checkerboard; print attacks carry a blurred copy plus a color cast and
// replay attacks overlay a moire pattern at an incommensurate frequency.
struct GeneratorConfig {
  std::size_t image_h = 16, image_w = 16, image_c = 3;
  double class_amplitude = 0.5;
  double bg_amplitude = 0.12;
  double moire_amplitude = 0.18;
  std::array<double, 3> print_cast{0.08, 0.0, -0.06};
};

struct SyntheticSample {
  Tensor image;  // (H,W,C) in [0,1]
  uint8_t label = 0;  // 1 bonafide, 0 attack
  uint16_t domain = 0;
  uint8_t attack = kAttackNone;
  uint32_t group = 0;
};

struct DomainDataset {
  uint16_t domain_id = 0;
  std::vector<SyntheticSample> samples;
};

// Deterministic style table: distinct ids get distinct shifts/contrasts and
// phases, all scaled by `style_strength`.
std::vector<DomainSpec> make_domain_specs(std::size_t count, double style_strength,
                                          double noise_sigma, std::size_t bonafide,
                                          std::size_t print, std::size_t replay,
                                          std::size_t group_size);

DomainDataset generate(const DomainSpec& spec, const GeneratorConfig& gen, uint64_t seed);

struct PartitionPlan {
  enum class Kind : uint8_t { PerDomain, PerDomainPerAttack };
  Kind kind = Kind::PerDomain;
  std::vector<DomainDataset> clients;
  DomainDataset target;
};

PartitionPlan leave_one_out(const std::vector<DomainDataset>& domains, uint16_t target_id);

// Splits every client into two sub-clients: one with the print attacks and
// the first half of the bonafide samples, one with the replay attacks and
// the rest.
PartitionPlan split_by_attack(const PartitionPlan& plan);

// Dataset file: magic "FSDS", version u32, sample count u64, H/W/C u32,
// then per sample: image f64 LE, label u8, domain u16, attack u8, group u32.
inline constexpr uint32_t kDatasetVersion = 1;

void save_dataset(const std::string& path, const std::vector<DomainDataset>& domains);
std::vector<DomainDataset> load_dataset(const std::string& path);

}  // namespace fedsis
