#include "fedsis/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "fedsis/rng.hpp"

namespace fedsis {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Crisp checkerboard at the highest spatial frequency (period 2 px).
double checker(std::size_t i, std::size_t j) { return ((i + j) % 2 == 0) ? 0.5 : -0.5; }

// 3x3 box blur of the checkerboard with zero padding; interior cells keep a
// weak +-1/18 residue, borders a stronger one.
double blurred_checker(std::size_t i, std::size_t j, std::size_t h, std::size_t w) {
  double acc = 0.0;
  for (int di = -1; di <= 1; ++di) {
    for (int dj = -1; dj <= 1; ++dj) {
      const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + di;
      const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + dj;
      if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(h) ||
          jj >= static_cast<std::ptrdiff_t>(w)) {
        continue;
      }
      acc += checker(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
    }
  }
  return acc / 9.0;
}

double moire(std::size_t i, std::size_t j) {
  return std::sin(kTau * 0.35 * static_cast<double>(i)) *
         std::sin(kTau * 0.35 * static_cast<double>(j));
}

}  // namespace

const char* attack_name(uint8_t attack) {
  switch (attack) {
    case kAttackNone: return "none";
    case kAttackPrint: return "print";
    case kAttackReplay: return "replay";
  }
  return "?";
}

std::vector<DomainSpec> make_domain_specs(std::size_t count, double style_strength,
                                          double noise_sigma, std::size_t bonafide,
                                          std::size_t print, std::size_t replay,
                                          std::size_t group_size) {
  std::vector<DomainSpec> specs;
  specs.reserve(count);
  const double golden = 2.399963229728653;  // golden-angle spacing between styles
  for (std::size_t id = 0; id < count; ++id) {
    DomainSpec s;
    s.domain_id = static_cast<uint16_t>(id);
    const double a = golden * static_cast<double>(id + 1);
    s.mean_shift = {style_strength * 0.12 * std::sin(a),
                    style_strength * 0.12 * std::sin(a + 2.0),
                    style_strength * 0.12 * std::sin(a + 4.0)};
    s.contrast = 1.0 + style_strength * 0.30 * std::cos(a * 1.7);
    s.noise_sigma = noise_sigma;
    s.bg_phase = kTau * static_cast<double>(id) / static_cast<double>(std::max<std::size_t>(count, 1));
    s.bonafide_count = bonafide;
    s.print_count = print;
    s.replay_count = replay;
    s.group_size = group_size;
    specs.push_back(s);
  }
  return specs;
}

DomainDataset generate(const DomainSpec& spec, const GeneratorConfig& gen, uint64_t seed) {
  if (spec.contrast <= 0.0) fail("generate", "contrast must be positive");
  if (spec.noise_sigma < 0.0) fail("generate", "noise sigma must be >= 0");
  if (gen.class_amplitude < 0.0) fail("generate", "class amplitude must be >= 0");
  if (spec.bonafide_count < 1 || spec.print_count < 1 || spec.replay_count < 1) {
    fail("generate", "sample counts must be >= 1");
  }

  const std::size_t h = gen.image_h, w = gen.image_w, c = gen.image_c;
  Rng rng = Rng::derive(seed, "synth", spec.domain_id);
  DomainDataset ds;
  ds.domain_id = spec.domain_id;
  ds.samples.reserve(spec.bonafide_count + spec.print_count + spec.replay_count);

  uint32_t next_group = 0;
  std::size_t in_group = 0;
  const std::size_t group_size = std::max<std::size_t>(spec.group_size, 1);

  auto emit = [&](uint8_t attack) {
    SyntheticSample s;
    s.image = Tensor(Shape{h, w, c});
    s.label = (attack == kAttackNone) ? 1 : 0;
    s.domain = spec.domain_id;
    s.attack = attack;
    s.group = next_group;
    if (++in_group == group_size) {
      in_group = 0;
      ++next_group;
    }

    // Per-sample smooth content (the "face"): two random low-frequency
    // waves whose amplitude scales with the noise level, so sigma = 0 keeps
    // the construction fully deterministic. Without this, each (class,
    // domain) collapses to a near-prototype and shortcut separators abound.
    double amp_q[2], fx_q[2], fy_q[2], ph_q[2];
    for (int q = 0; q < 2; ++q) {
      amp_q[q] = 4.0 * spec.noise_sigma * rng.uniform(-1.0, 1.0);
      fx_q[q] = static_cast<double>(rng.uniform_int(1, 2));
      fy_q[q] = static_cast<double>(rng.uniform_int(1, 2));
      ph_q[q] = rng.uniform(0.0, kTau);
    }

    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const double bg =
            gen.bg_amplitude *
            std::sin(kTau * (static_cast<double>(i) + static_cast<double>(j)) /
                         static_cast<double>(h + w) +
                     spec.bg_phase);
        double content = 0.0;
        for (int q = 0; q < 2; ++q) {
          content += amp_q[q] * std::sin(kTau *
                                             (fx_q[q] * static_cast<double>(i) +
                                              fy_q[q] * static_cast<double>(j)) /
                                             static_cast<double>(h) +
                                         ph_q[q]);
        }
        double texture = 0.0;
        if (attack == kAttackNone) {
          texture = gen.class_amplitude * checker(i, j);
        } else if (attack == kAttackPrint) {
          texture = gen.class_amplitude * blurred_checker(i, j, h, w);
        } else {
          texture = gen.class_amplitude * checker(i, j) + gen.moire_amplitude * moire(i, j);
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
          double v = 0.5 + bg + content + texture;
          if (attack == kAttackPrint) v += gen.print_cast[ch % 3];
          v = (v - 0.5) * spec.contrast + 0.5 + spec.mean_shift[ch % 3];
          v += spec.noise_sigma * rng.normal();
          s.image.at({i, j, ch}) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    ds.samples.push_back(std::move(s));
  };

  for (std::size_t n = 0; n < spec.bonafide_count; ++n) emit(kAttackNone);
  in_group = 0;
  if (ds.samples.back().group == next_group) ++next_group;  // close a partial group
  for (std::size_t n = 0; n < spec.print_count; ++n) emit(kAttackPrint);
  in_group = 0;
  if (ds.samples.back().group == next_group) ++next_group;
  for (std::size_t n = 0; n < spec.replay_count; ++n) emit(kAttackReplay);
  return ds;
}

PartitionPlan leave_one_out(const std::vector<DomainDataset>& domains, uint16_t target_id) {
  if (domains.size() < 2) {
    fail("leave_one_out", "need at least 2 domains, got " + std::to_string(domains.size()));
  }
  PartitionPlan plan;
  plan.kind = PartitionPlan::Kind::PerDomain;
  bool found = false;
  for (const DomainDataset& d : domains) {
    if (d.domain_id == target_id) {
      plan.target = d;
      found = true;
    } else {
      plan.clients.push_back(d);
    }
  }
  if (!found) {
    fail("leave_one_out", "target domain " + std::to_string(target_id) + " not present");
  }
  return plan;
}

PartitionPlan split_by_attack(const PartitionPlan& plan) {
  if (plan.kind != PartitionPlan::Kind::PerDomain) {
    fail("split_by_attack", "plan already split");
  }
  PartitionPlan out;
  out.kind = PartitionPlan::Kind::PerDomainPerAttack;
  out.target = plan.target;
  for (const DomainDataset& client : plan.clients) {
    std::vector<const SyntheticSample*> bona, prints, replays;
    for (const SyntheticSample& s : client.samples) {
      if (s.attack == kAttackNone) {
        bona.push_back(&s);
      } else if (s.attack == kAttackPrint) {
        prints.push_back(&s);
      } else {
        replays.push_back(&s);
      }
    }
    if (prints.empty() || replays.empty()) {
      fail("split_by_attack", "domain " + std::to_string(client.domain_id) +
                                  " is missing an attack type");
    }
    DomainDataset a, b;
    a.domain_id = client.domain_id;
    b.domain_id = client.domain_id;
    const std::size_t half = bona.size() / 2;
    for (std::size_t i = 0; i < bona.size(); ++i) {
      (i < half ? a : b).samples.push_back(*bona[i]);
    }
    for (const SyntheticSample* s : prints) a.samples.push_back(*s);
    for (const SyntheticSample* s : replays) b.samples.push_back(*s);
    out.clients.push_back(std::move(a));
    out.clients.push_back(std::move(b));
  }
  return out;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("dataset", "truncated stream");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail("dataset", "truncated stream");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

constexpr char kDsMagic[4] = {'F', 'S', 'D', 'S'};

}  // namespace

void save_dataset(const std::string& path, const std::vector<DomainDataset>& domains) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("dataset", "cannot open '" + path + "' for writing");
  std::size_t total = 0;
  for (const DomainDataset& d : domains) total += d.samples.size();
  if (total == 0) fail("dataset", "nothing to save");
  const Shape& img = domains.front().samples.front().image.shape();

  os.write(kDsMagic, 4);
  put_u32(os, kDatasetVersion);
  put_u64(os, total);
  put_u32(os, static_cast<uint32_t>(img[0]));
  put_u32(os, static_cast<uint32_t>(img[1]));
  put_u32(os, static_cast<uint32_t>(img[2]));
  for (const DomainDataset& d : domains) {
    for (const SyntheticSample& s : d.samples) {
      if (s.image.shape() != img) fail("dataset", "inconsistent image shapes");
      for (double v : s.image.values()) put_u64(os, std::bit_cast<uint64_t>(v));
      os.put(static_cast<char>(s.label));
      unsigned char dom[2] = {static_cast<unsigned char>(s.domain & 0xff),
                              static_cast<unsigned char>((s.domain >> 8) & 0xff)};
      os.write(reinterpret_cast<const char*>(dom), 2);
      os.put(static_cast<char>(s.attack));
      put_u32(os, s.group);
    }
  }
  if (!os) fail("dataset", "write failed");
}

std::vector<DomainDataset> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("dataset", "cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kDsMagic, 4) != 0) {
    fail("dataset", "bad magic (not an FSDS file)");
  }
  const uint32_t version = get_u32(is);
  if (version != kDatasetVersion) {
    fail("dataset", "unsupported version " + std::to_string(version));
  }
  const uint64_t total = get_u64(is);
  const std::size_t h = get_u32(is), w = get_u32(is), c = get_u32(is);

  std::map<uint16_t, DomainDataset> by_domain;
  for (uint64_t n = 0; n < total; ++n) {
    SyntheticSample s;
    s.image = Tensor(Shape{h, w, c});
    for (double& v : s.image.values()) v = std::bit_cast<double>(get_u64(is));
    int label = is.get();
    unsigned char dom[2];
    is.read(reinterpret_cast<char*>(dom), 2);
    int attack = is.get();
    if (!is) fail("dataset", "truncated sample record");
    s.label = static_cast<uint8_t>(label);
    s.domain = static_cast<uint16_t>(dom[0] | (dom[1] << 8));
    s.attack = static_cast<uint8_t>(attack);
    s.group = get_u32(is);
    auto& ds = by_domain[s.domain];
    ds.domain_id = s.domain;
    ds.samples.push_back(std::move(s));
  }
  std::vector<DomainDataset> out;
  out.reserve(by_domain.size());
  for (auto& [id, ds] : by_domain) out.push_back(std::move(ds));
  return out;
}

}  // namespace fedsis
