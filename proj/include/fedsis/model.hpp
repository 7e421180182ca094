#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedsis/adam.hpp"
#include "fedsis/graph.hpp"
#include "fedsis/rng.hpp"
#include "fedsis/serialize.hpp"
#include "fedsis/tensor.hpp"

namespace fedsis {

struct SamplerConfig {
  enum class Mode : uint8_t { Uniform, Fixed };
  Mode mode = Mode::Uniform;
  std::size_t lo = 1;
  std::size_t hi = 6;     // inclusive; clamped against depth at validation
  std::size_t fixed = 1;  // used by Fixed mode
};

struct ModelConfig {
  std::size_t image_h = 16, image_w = 16, image_c = 3;
  std::size_t tok_c1 = 16, tok_c2 = 32;      // tokenizer conv widths
  std::size_t tok_kernel = 3;                // odd; padding = kernel/2
  std::size_t tok_stride1 = 2, tok_stride2 = 2;
  std::size_t depth = 6;                     // encoder blocks L
  std::size_t dim = 32;                      // token dimension d
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  SamplerConfig sampler;
  Precision precision = Precision::F64;

  std::size_t grid_h() const;
  std::size_t grid_w() const;
  std::size_t tokens() const { return grid_h() * grid_w(); }  // S

  // Throws on inconsistent settings: non-square token grid, dim not
  // divisible by heads, sampler range outside [1, depth].
  void validate() const;
};

// Client-owned tokenizer (conv stack + patch projection + positional
// embedding).
struct TokenizerParams {
  Param conv1_w, conv1_b, conv2_w, conv2_b, proj_w, proj_b, pos;
  std::vector<Param*> params();
};

struct BlockParams {
  Param ln1_g, ln1_b;
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param ln2_g, ln2_b;
  Param fc1_w, fc1_b, fc2_w, fc2_b;
  std::vector<Param*> params();
};

// Server-owned encoder: L pre-norm self-attention blocks plus the learnable
// cls token embedding (prepended before block 1).
struct EncoderParams {
  Param cls;  // shape (1, d)
  std::vector<BlockParams> blocks;
  std::vector<Param*> params();
};

// Server-owned adapter: conv-BN-ReLU twice over the sqrt(S) x sqrt(S) token
// grid, then global average pooling to a single d-vector.
struct AdapterParams {
  Param conv1_w, bn1_g, bn1_b;
  Param conv2_w, bn2_g, bn2_b;
  BatchNormState bn1, bn2;
  std::vector<Param*> params();
};

// Client-owned linear head d -> 2 (attack = 0, bonafide = 1).
struct HeadParams {
  Param w, b;
  std::vector<Param*> params();
};

TokenizerParams init_tokenizer(const ModelConfig& cfg, Rng& rng);
EncoderParams init_encoder(const ModelConfig& cfg, Rng& rng);
AdapterParams init_adapter(const ModelConfig& cfg, Rng& rng);
HeadParams init_head(const ModelConfig& cfg, Rng& rng);

std::size_t param_count(std::vector<Param*> params);

// Graph builders; all shapes (B,S,d) with S from cfg.
NodeId build_tokenizer(Graph& g, TokenizerParams& p, const ModelConfig& cfg,
                       const Tensor& images);
NodeId build_block(Graph& g, BlockParams& p, const ModelConfig& cfg, NodeId x);

struct PrefixOut {
  NodeId patches = kNoNode;  // (B,S,d) at depth ell, cls position excluded
  NodeId cls = kNoNode;      // (B,d) cls stream at depth ell
};
PrefixOut build_encoder_prefix(Graph& g, EncoderParams& p, const ModelConfig& cfg, NodeId tokens,
                               std::size_t ell);
NodeId build_adapter(Graph& g, AdapterParams& p, const ModelConfig& cfg, NodeId patches,
                     bool train);
NodeId build_head(Graph& g, HeadParams& p, NodeId z);

// Single-pass convenience wrappers (build a throwaway graph, eval semantics).
Tensor tokenize(TokenizerParams& p, const ModelConfig& cfg, const Tensor& images);
std::pair<Tensor, Tensor> encode_prefix(EncoderParams& p, const ModelConfig& cfg,
                                        const Tensor& tokens, std::size_t ell);
Tensor adapt(AdapterParams& p, const ModelConfig& cfg, const Tensor& patches, bool train);
Tensor classify(HeadParams& p, const Tensor& z);

// Uniform draw over an inclusive block range, or a pinned block.
class BlockSampler {
 public:
  BlockSampler() : rng_(0) {}
  BlockSampler(SamplerConfig cfg, std::size_t depth, Rng rng);
  std::size_t draw();
  const SamplerConfig& config() const { return cfg_; }

 private:
  SamplerConfig cfg_;
  Rng rng_;
};

enum class Mode : uint8_t { FedSis, FeSta, FedAvg, Centralized, CentralizedIs };

Mode mode_from_string(const std::string& s);
std::string to_string(Mode m);
bool mode_uses_adapter(Mode m);   // fedsis / centralized_is
bool mode_is_split(Mode m);       // fedsis / festa
bool mode_is_monolithic(Mode m);  // centralized / centralized_is

// The trained artifact: unified client parts plus the server parts, with the
// config needed to rebuild the forward path.
struct ModelBundle {
  ModelConfig config;
  Mode mode = Mode::FedSis;
  TokenizerParams tokenizer;
  EncoderParams encoder;
  AdapterParams adapter;
  HeadParams head;

  std::vector<NamedTensorView> named_views() const;  // includes BN running stats
  std::vector<NamedTensorRef> named_refs();
};

ModelBundle init_bundle(const ModelConfig& cfg, Mode mode, uint64_t seed);

}  // namespace fedsis
