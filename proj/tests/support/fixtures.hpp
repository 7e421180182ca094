#pragma once

#include "fedsis/config.hpp"
#include "fedsis/protocol.hpp"
#include "fedsis/synth.hpp"

namespace fedsis::testing {

// L=4, d=16, h=2, S=16 on 16x16x3 images: the tiny profile used by the
// equivalence and protocol tests.
inline ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.tok_c1 = 6;
  cfg.tok_c2 = 8;
  cfg.depth = 4;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.sampler.lo = 1;
  cfg.sampler.hi = 4;
  return cfg;
}

inline std::vector<DomainDataset> tiny_domains(std::size_t count, uint64_t seed,
                                               std::size_t bonafide = 12, std::size_t print = 6,
                                               std::size_t replay = 6) {
  GeneratorConfig gen;
  auto specs = make_domain_specs(count, 1.0, 0.05, bonafide, print, replay, 1);
  std::vector<DomainDataset> out;
  for (const auto& s : specs) out.push_back(generate(s, gen, seed));
  return out;
}

inline TrainingConfig tiny_train(Mode mode, std::size_t rounds, std::size_t unify_every,
                                 uint64_t seed) {
  TrainingConfig tc;
  tc.mode = mode;
  tc.rounds = rounds;
  tc.unify_every = unify_every;
  tc.batch_size = 4;
  tc.lr = 1e-3;
  tc.weight_decay = 1e-6;
  tc.seed = seed;
  return tc;
}

inline double max_param_diff(ModelBundle& a, ModelBundle& b) {
  auto va = a.named_views();
  auto vb = b.named_views();
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const auto& x = va[i].tensor->values();
    const auto& y = vb[i].tensor->values();
    for (std::size_t j = 0; j < x.size(); ++j) {
      worst = std::max(worst, std::fabs(x[j] - y[j]));
    }
  }
  return worst;
}

}  // namespace fedsis::testing
