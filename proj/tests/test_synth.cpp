#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unistd.h>

#include "fedsis/synth.hpp"
#include "support/checks.hpp"

using namespace fedsis;

namespace {

std::vector<DomainDataset> four_domains(uint64_t seed, double amplitude = 0.5,
                                        double noise = 0.05) {
  GeneratorConfig gen;
  gen.class_amplitude = amplitude;
  auto specs = make_domain_specs(4, 1.0, noise, 8, 4, 4, 2);
  std::vector<DomainDataset> out;
  for (const auto& s : specs) out.push_back(generate(s, gen, seed));
  return out;
}

bool same_dataset(const DomainDataset& a, const DomainDataset& b) {
  if (a.domain_id != b.domain_id || a.samples.size() != b.samples.size()) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.label != y.label || x.domain != y.domain || x.attack != y.attack ||
        x.group != y.group || !x.image.same_values(y.image)) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("generator determinism and balance") {
  auto a = four_domains(7);
  auto b = four_domains(7);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same_dataset(a[i], b[i]));

  auto c = four_domains(8);
  CHECK_FALSE(same_dataset(a[0], c[0]));

  for (const DomainDataset& d : a) {
    std::size_t bona = 0, print = 0, replay = 0;
    for (const auto& s : d.samples) {
      if (s.attack == kAttackNone) ++bona;
      if (s.attack == kAttackPrint) ++print;
      if (s.attack == kAttackReplay) ++replay;
      CHECK((s.label == 1) == (s.attack == kAttackNone));
      for (double v : s.image.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
    CHECK(bona == 8);
    CHECK(print == 4);
    CHECK(replay == 4);
  }
}

TEST_CASE("distinct domains carry distinct styles") {
  auto specs = make_domain_specs(4, 1.0, 0.05, 8, 4, 4, 1);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      const bool differ = specs[i].mean_shift != specs[j].mean_shift ||
                          specs[i].contrast != specs[j].contrast ||
                          specs[i].bg_phase != specs[j].bg_phase;
      CHECK(differ);
    }
  }
}

TEST_CASE("with zero amplitude and noise, classes differ only by attack artifacts") {
  GeneratorConfig gen;
  gen.class_amplitude = 0.0;
  DomainSpec spec;  // neutral style
  spec.domain_id = 0;
  spec.noise_sigma = 0.0;
  spec.bonafide_count = 3;
  spec.print_count = 3;
  spec.replay_count = 3;
  DomainDataset ds = generate(spec, gen, 1);

  const SyntheticSample* bona = nullptr;
  const SyntheticSample* print_s = nullptr;
  const SyntheticSample* replay_s = nullptr;
  for (const auto& s : ds.samples) {
    if (s.attack == kAttackNone) bona = &s;
    if (s.attack == kAttackPrint) print_s = &s;
    if (s.attack == kAttackReplay) replay_s = &s;
  }
  REQUIRE(bona != nullptr);

  // all bonafide are pixel-identical (no randomness left)
  for (const auto& s : ds.samples) {
    if (s.attack == kAttackNone) CHECK(s.image.same_values(bona->image));
  }
  // print differs from bonafide by the per-channel color cast only
  std::set<long long> per_channel[3];
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double diff = print_s->image.at({i, j, c}) - bona->image.at({i, j, c});
        per_channel[c].insert(std::llround(diff * 1e12));
      }
    }
  }
  for (int c = 0; c < 3; ++c) CHECK(per_channel[c].size() == 1);
  // replay overlays a nonzero pattern
  CHECK_FALSE(replay_s->image.same_values(bona->image));
}

TEST_CASE("leave-one-domain-out partitioning") {
  auto domains = four_domains(11);

  SUBCASE("four domains, one target, three clients") {
    PartitionPlan plan = leave_one_out(domains, 3);
    CHECK(plan.clients.size() == 3);
    CHECK(plan.target.domain_id == 3);
    for (const auto& c : plan.clients) CHECK(c.domain_id != 3);
  }

  SUBCASE("two domains degenerate to a single client") {
    std::vector<DomainDataset> two{domains[0], domains[1]};
    PartitionPlan plan = leave_one_out(two, 0);
    CHECK(plan.clients.size() == 1);
    CHECK(plan.clients[0].domain_id == 1);
  }

  SUBCASE("missing target or too few domains error") {
    CHECK_THROWS_AS(leave_one_out(domains, 9), std::runtime_error);
    std::vector<DomainDataset> one{domains[0]};
    CHECK_THROWS_AS(leave_one_out(one, 0), std::runtime_error);
  }
}

TEST_CASE("one attack type per sub-client") {
  auto domains = four_domains(13);
  PartitionPlan plan = leave_one_out(domains, 0);
  PartitionPlan split = split_by_attack(plan);

  CHECK(split.clients.size() == 2 * plan.clients.size());

  SUBCASE("each sub-client holds exactly one attack type") {
    for (const auto& c : split.clients) {
      std::set<uint8_t> attacks;
      for (const auto& s : c.samples) {
        if (s.attack != kAttackNone) attacks.insert(s.attack);
      }
      CHECK(attacks.size() == 1);
    }
  }

  SUBCASE("the union of sub-clients equals the original clients") {
    auto census = [](const std::vector<DomainDataset>& sets) {
      std::map<std::tuple<uint16_t, uint8_t, uint32_t>, std::size_t> counts;
      for (const auto& ds : sets) {
        for (const auto& s : ds.samples) {
          counts[{s.domain, s.attack, s.group}] += 1;
        }
      }
      return counts;
    };
    CHECK(census(plan.clients) == census(split.clients));
  }

  SUBCASE("bonafide halves are disjoint") {
    for (std::size_t i = 0; i + 1 < split.clients.size(); i += 2) {
      std::set<uint32_t> ga, gb;
      for (const auto& s : split.clients[i].samples) {
        if (s.label == 1) ga.insert(s.group);
      }
      for (const auto& s : split.clients[i + 1].samples) {
        if (s.label == 1) gb.insert(s.group);
      }
      for (uint32_t g : ga) CHECK(gb.count(g) == 0);
    }
  }

  SUBCASE("a domain missing an attack type errors") {
    PartitionPlan broken = plan;
    auto& samples = broken.clients[0].samples;
    samples.erase(std::remove_if(samples.begin(), samples.end(),
                                 [](const SyntheticSample& s) {
                                   return s.attack == kAttackReplay;
                                 }),
                  samples.end());
    CHECK_THROWS_WITH_AS(split_by_attack(broken), doctest::Contains("missing an attack"),
                         std::runtime_error);
  }
}

TEST_CASE("dataset files round-trip") {
  auto domains = four_domains(17);
  const std::string path =
      "/tmp/fedsis_test_ds_" + std::to_string(::getpid()) + ".fsds";
  save_dataset(path, domains);
  auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == domains.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(same_dataset(loaded[i], domains[i]));
  std::remove(path.c_str());
}

TEST_CASE("group ids follow the configured group size") {
  GeneratorConfig gen;
  DomainSpec spec;
  spec.group_size = 2;
  spec.bonafide_count = 5;  // odd count: last group is a partial one
  spec.print_count = 4;
  spec.replay_count = 4;
  DomainDataset ds = generate(spec, gen, 3);
  std::map<uint32_t, std::set<int>> group_labels;
  std::map<uint32_t, std::size_t> group_sizes;
  for (const auto& s : ds.samples) {
    group_labels[s.group].insert(s.label);
    group_sizes[s.group] += 1;
  }
  for (const auto& [g, labels] : group_labels) CHECK(labels.size() == 1);
  for (const auto& [g, n] : group_sizes) CHECK(n <= 2);
}
