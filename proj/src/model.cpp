#include "fedsis/model.hpp"

#include <cmath>

namespace fedsis {

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

Tensor trunc_normal(Shape shape, double std_dev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.truncated_normal(std_dev);
  return t;
}

}  // namespace

std::size_t ModelConfig::grid_h() const {
  const std::size_t pad = tok_kernel / 2;
  return conv_out(conv_out(image_h, tok_kernel, pad, tok_stride1), tok_kernel, pad, tok_stride2);
}

std::size_t ModelConfig::grid_w() const {
  const std::size_t pad = tok_kernel / 2;
  return conv_out(conv_out(image_w, tok_kernel, pad, tok_stride1), tok_kernel, pad, tok_stride2);
}

void ModelConfig::validate() const {
  if (image_h == 0 || image_w == 0 || image_c == 0) fail("model_config", "empty image shape");
  if (tok_kernel % 2 == 0) fail("model_config", "tokenizer kernel must be odd");
  if (depth < 1) fail("model_config", "encoder depth must be >= 1");
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    fail("model_config", "dim " + std::to_string(dim) + " not divisible by heads " +
                             std::to_string(heads));
  }
  if (grid_h() == 0 || grid_w() == 0) fail("model_config", "tokenizer strides collapse the grid");
  if (grid_h() != grid_w()) {
    fail("model_config", "token grid " + std::to_string(grid_h()) + "x" +
                             std::to_string(grid_w()) +
                             " is not square; the adapter needs a square grid");
  }
  if (sampler.mode == SamplerConfig::Mode::Uniform) {
    if (sampler.lo < 1 || sampler.hi > depth || sampler.lo > sampler.hi) {
      fail("model_config", "sampler range [" + std::to_string(sampler.lo) + "," +
                               std::to_string(sampler.hi) + "] invalid for depth " +
                               std::to_string(depth));
    }
  } else if (sampler.fixed < 1 || sampler.fixed > depth) {
    fail("model_config", "fixed sampler block " + std::to_string(sampler.fixed) +
                             " outside [1," + std::to_string(depth) + "]");
  }
}

std::vector<Param*> TokenizerParams::params() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &proj_w, &proj_b, &pos};
}

std::vector<Param*> BlockParams::params() {
  return {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b, &fc1_w, &fc1_b,
          &fc2_w, &fc2_b};
}

std::vector<Param*> EncoderParams::params() {
  std::vector<Param*> out{&cls};
  for (BlockParams& b : blocks) {
    for (Param* p : b.params()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> AdapterParams::params() {
  return {&conv1_w, &bn1_g, &bn1_b, &conv2_w, &bn2_g, &bn2_b};
}

std::vector<Param*> HeadParams::params() { return {&w, &b}; }

TokenizerParams init_tokenizer(const ModelConfig& cfg, Rng& rng) {
  TokenizerParams p;
  const std::size_t k = cfg.tok_kernel;
  // He-style init for the conv stack, 0.02 truncated normal for the
  // projection and positional embedding.
  const double std1 = std::sqrt(2.0 / static_cast<double>(k * k * cfg.image_c));
  const double std2 = std::sqrt(2.0 / static_cast<double>(k * k * cfg.tok_c1));
  p.conv1_w = Param("tokenizer.conv1.weight",
                    trunc_normal({k, k, cfg.image_c, cfg.tok_c1}, std1, rng));
  p.conv1_b = Param("tokenizer.conv1.bias", Tensor(Shape{cfg.tok_c1}), false);
  p.conv2_w = Param("tokenizer.conv2.weight",
                    trunc_normal({k, k, cfg.tok_c1, cfg.tok_c2}, std2, rng));
  p.conv2_b = Param("tokenizer.conv2.bias", Tensor(Shape{cfg.tok_c2}), false);
  p.proj_w = Param("tokenizer.proj.weight", trunc_normal({cfg.tok_c2, cfg.dim}, 0.02, rng));
  p.proj_b = Param("tokenizer.proj.bias", Tensor(Shape{cfg.dim}), false);
  p.pos = Param("tokenizer.pos", trunc_normal({cfg.tokens(), cfg.dim}, 0.02, rng), false);
  return p;
}

namespace {

BlockParams init_block(const ModelConfig& cfg, std::size_t index, Rng& rng) {
  const std::string pre = "encoder.block" + std::to_string(index) + ".";
  const std::size_t d = cfg.dim;
  const std::size_t hidden = cfg.mlp_ratio * d;
  BlockParams b;
  b.ln1_g = Param(pre + "ln1.gamma", Tensor(Shape{d}, 1.0), false);
  b.ln1_b = Param(pre + "ln1.beta", Tensor(Shape{d}), false);
  b.wq = Param(pre + "attn.wq", trunc_normal({d, d}, 0.02, rng));
  b.bq = Param(pre + "attn.bq", Tensor(Shape{d}), false);
  b.wk = Param(pre + "attn.wk", trunc_normal({d, d}, 0.02, rng));
  b.bk = Param(pre + "attn.bk", Tensor(Shape{d}), false);
  b.wv = Param(pre + "attn.wv", trunc_normal({d, d}, 0.02, rng));
  b.bv = Param(pre + "attn.bv", Tensor(Shape{d}), false);
  b.wo = Param(pre + "attn.wo", trunc_normal({d, d}, 0.02, rng));
  b.bo = Param(pre + "attn.bo", Tensor(Shape{d}), false);
  b.ln2_g = Param(pre + "ln2.gamma", Tensor(Shape{d}, 1.0), false);
  b.ln2_b = Param(pre + "ln2.beta", Tensor(Shape{d}), false);
  b.fc1_w = Param(pre + "mlp.fc1.weight", trunc_normal({d, hidden}, 0.02, rng));
  b.fc1_b = Param(pre + "mlp.fc1.bias", Tensor(Shape{hidden}), false);
  b.fc2_w = Param(pre + "mlp.fc2.weight", trunc_normal({hidden, d}, 0.02, rng));
  b.fc2_b = Param(pre + "mlp.fc2.bias", Tensor(Shape{d}), false);
  return b;
}

}  // namespace

EncoderParams init_encoder(const ModelConfig& cfg, Rng& rng) {
  EncoderParams e;
  e.cls = Param("encoder.cls", trunc_normal({1, cfg.dim}, 0.02, rng), false);
  e.blocks.reserve(cfg.depth);
  for (std::size_t i = 0; i < cfg.depth; ++i) e.blocks.push_back(init_block(cfg, i + 1, rng));
  return e;
}

AdapterParams init_adapter(const ModelConfig& cfg, Rng& rng) {
  AdapterParams a;
  const std::size_t d = cfg.dim;
  const double cstd = std::sqrt(2.0 / static_cast<double>(9 * d));
  a.conv1_w = Param("adapter.conv1.weight", trunc_normal({3, 3, d, d}, cstd, rng));
  a.bn1_g = Param("adapter.bn1.gamma", Tensor(Shape{d}, 1.0), false);
  a.bn1_b = Param("adapter.bn1.beta", Tensor(Shape{d}), false);
  a.conv2_w = Param("adapter.conv2.weight", trunc_normal({3, 3, d, d}, cstd, rng));
  a.bn2_g = Param("adapter.bn2.gamma", Tensor(Shape{d}, 1.0), false);
  a.bn2_b = Param("adapter.bn2.beta", Tensor(Shape{d}), false);
  a.bn1 = BatchNormState(d);
  a.bn2 = BatchNormState(d);
  return a;
}

HeadParams init_head(const ModelConfig& cfg, Rng& rng) {
  HeadParams h;
  h.w = Param("head.weight", trunc_normal({cfg.dim, 2}, 0.02, rng));
  h.b = Param("head.bias", Tensor(Shape{2}), false);
  return h;
}

std::size_t param_count(std::vector<Param*> params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->value.size();
  return n;
}

NodeId build_tokenizer(Graph& g, TokenizerParams& p, const ModelConfig& cfg,
                       const Tensor& images) {
  const Shape expected{images.rank() > 0 ? images.shape()[0] : 0, cfg.image_h, cfg.image_w,
                       cfg.image_c};
  if (images.rank() != 4 || images.shape()[1] != cfg.image_h ||
      images.shape()[2] != cfg.image_w || images.shape()[3] != cfg.image_c) {
    fail("tokenize", "image batch " + shape_str(images.shape()) + ", expected " +
                         shape_str(expected));
  }
  const std::size_t batch = images.shape()[0];
  const std::size_t pad = cfg.tok_kernel / 2;

  NodeId x = g.input(images);
  x = g.conv2d(x, g.param(p.conv1_w.value), g.param(p.conv1_b.value),
               {cfg.tok_stride1, cfg.tok_stride1, pad, pad});
  x = g.relu(x);
  x = g.conv2d(x, g.param(p.conv2_w.value), g.param(p.conv2_b.value),
               {cfg.tok_stride2, cfg.tok_stride2, pad, pad});
  x = g.relu(x);
  x = g.reshape(x, Shape{batch, cfg.tokens(), cfg.tok_c2});
  x = g.add_bias(g.matmul(x, g.param(p.proj_w.value)), g.param(p.proj_b.value));
  return g.add_bias(x, g.param(p.pos.value));
}

NodeId build_block(Graph& g, BlockParams& p, const ModelConfig& cfg, NodeId x) {
  NodeId a = g.layer_norm(x, g.param(p.ln1_g.value), g.param(p.ln1_b.value));
  a = g.multi_head_attention(a, g.param(p.wq.value), g.param(p.bq.value), g.param(p.wk.value),
                             g.param(p.bk.value), g.param(p.wv.value), g.param(p.bv.value),
                             g.param(p.wo.value), g.param(p.bo.value), cfg.heads);
  NodeId x1 = g.add(x, a);
  NodeId m = g.layer_norm(x1, g.param(p.ln2_g.value), g.param(p.ln2_b.value));
  m = g.add_bias(g.matmul(m, g.param(p.fc1_w.value)), g.param(p.fc1_b.value));
  m = g.gelu(m);
  m = g.add_bias(g.matmul(m, g.param(p.fc2_w.value)), g.param(p.fc2_b.value));
  return g.add(x1, m);
}

PrefixOut build_encoder_prefix(Graph& g, EncoderParams& p, const ModelConfig& cfg, NodeId tokens,
                               std::size_t ell) {
  if (ell < 1 || ell > p.blocks.size()) {
    fail("encode_prefix", "block index " + std::to_string(ell) + " outside [1," +
                              std::to_string(p.blocks.size()) + "]");
  }
  const Tensor& t = g.value(tokens);
  if (t.rank() != 3 || t.shape()[2] != cfg.dim) {
    fail("encode_prefix", "tokens " + shape_str(t.shape()) + ", expected (B,S," +
                              std::to_string(cfg.dim) + ")");
  }
  const std::size_t batch = t.shape()[0];
  const std::size_t s = t.shape()[1];

  NodeId cls_b = g.tile_batch(g.param(p.cls.value), batch);  // (B,1,d)
  NodeId x = g.concat_tokens(cls_b, tokens);                 // (B,S+1,d)
  for (std::size_t i = 0; i < ell; ++i) x = build_block(g, p.blocks[i], cfg, x);

  PrefixOut out;
  out.patches = g.slice_tokens(x, 1, s);
  out.cls = g.reshape(g.slice_tokens(x, 0, 1), Shape{batch, cfg.dim});
  return out;
}

NodeId build_adapter(Graph& g, AdapterParams& p, const ModelConfig& cfg, NodeId patches,
                     bool train) {
  const Tensor& t = g.value(patches);
  const std::size_t batch = t.shape()[0];
  const std::size_t gh = cfg.grid_h();
  NodeId x = g.reshape(patches, Shape{batch, gh, gh, cfg.dim});
  x = g.conv2d(x, g.param(p.conv1_w.value), kNoNode, {1, 1, 1, 1});
  x = g.batch_norm(x, g.param(p.bn1_g.value), g.param(p.bn1_b.value), p.bn1, train);
  x = g.relu(x);
  x = g.conv2d(x, g.param(p.conv2_w.value), kNoNode, {1, 1, 1, 1});
  x = g.batch_norm(x, g.param(p.bn2_g.value), g.param(p.bn2_b.value), p.bn2, train);
  x = g.relu(x);
  return g.global_avg_pool(x);  // (B,d)
}

NodeId build_head(Graph& g, HeadParams& p, NodeId z) {
  return g.add_bias(g.matmul(z, g.param(p.w.value)), g.param(p.b.value));
}

Tensor tokenize(TokenizerParams& p, const ModelConfig& cfg, const Tensor& images) {
  Graph g(cfg.precision);
  return g.value(build_tokenizer(g, p, cfg, images));
}

std::pair<Tensor, Tensor> encode_prefix(EncoderParams& p, const ModelConfig& cfg,
                                        const Tensor& tokens, std::size_t ell) {
  Graph g(cfg.precision);
  PrefixOut out = build_encoder_prefix(g, p, cfg, g.input(tokens), ell);
  return {g.value(out.patches), g.value(out.cls)};
}

Tensor adapt(AdapterParams& p, const ModelConfig& cfg, const Tensor& patches, bool train) {
  Graph g(cfg.precision);
  return g.value(build_adapter(g, p, cfg, g.input(patches), train));
}

Tensor classify(HeadParams& p, const Tensor& z) {
  Graph g;
  return g.value(build_head(g, p, g.input(z)));
}

BlockSampler::BlockSampler(SamplerConfig cfg, std::size_t depth, Rng rng)
    : cfg_(cfg), rng_(rng) {
  if (cfg_.mode == SamplerConfig::Mode::Uniform) {
    if (cfg_.lo < 1 || cfg_.hi > depth || cfg_.lo > cfg_.hi) {
      fail("block_sampler", "empty or out-of-range block range [" + std::to_string(cfg_.lo) +
                                "," + std::to_string(cfg_.hi) + "] for depth " +
                                std::to_string(depth));
    }
  } else if (cfg_.fixed < 1 || cfg_.fixed > depth) {
    fail("block_sampler", "fixed block " + std::to_string(cfg_.fixed) + " outside [1," +
                              std::to_string(depth) + "]");
  }
}

std::size_t BlockSampler::draw() {
  if (cfg_.mode == SamplerConfig::Mode::Fixed) return cfg_.fixed;
  return static_cast<std::size_t>(rng_.uniform_int(cfg_.lo, cfg_.hi));
}

Mode mode_from_string(const std::string& s) {
  if (s == "fedsis") return Mode::FedSis;
  if (s == "festa") return Mode::FeSta;
  if (s == "fedavg") return Mode::FedAvg;
  if (s == "centralized") return Mode::Centralized;
  if (s == "centralized_is") return Mode::CentralizedIs;
  fail("mode", "unknown mode '" + s +
                   "' (expected fedsis, festa, fedavg, centralized, centralized_is)");
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::FedSis: return "fedsis";
    case Mode::FeSta: return "festa";
    case Mode::FedAvg: return "fedavg";
    case Mode::Centralized: return "centralized";
    case Mode::CentralizedIs: return "centralized_is";
  }
  return "?";
}

bool mode_uses_adapter(Mode m) { return m == Mode::FedSis || m == Mode::CentralizedIs; }
bool mode_is_split(Mode m) { return m == Mode::FedSis || m == Mode::FeSta; }
bool mode_is_monolithic(Mode m) {
  return m == Mode::Centralized || m == Mode::CentralizedIs;
}

std::vector<NamedTensorView> ModelBundle::named_views() const {
  std::vector<NamedTensorView> out;
  auto add_params = [&out](std::vector<Param*> ps) {
    for (Param* p : ps) out.push_back({p->name, &p->value});
  };
  auto* self = const_cast<ModelBundle*>(this);
  add_params(self->tokenizer.params());
  add_params(self->encoder.params());
  add_params(self->adapter.params());
  out.push_back({"adapter.bn1.running_mean", &adapter.bn1.running_mean});
  out.push_back({"adapter.bn1.running_var", &adapter.bn1.running_var});
  out.push_back({"adapter.bn2.running_mean", &adapter.bn2.running_mean});
  out.push_back({"adapter.bn2.running_var", &adapter.bn2.running_var});
  add_params(self->head.params());
  return out;
}

std::vector<NamedTensorRef> ModelBundle::named_refs() {
  std::vector<NamedTensorRef> out;
  for (const NamedTensorView& v : named_views()) {
    out.push_back({v.name, const_cast<Tensor*>(v.tensor)});
  }
  return out;
}

ModelBundle init_bundle(const ModelConfig& cfg, Mode mode, uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::derive(seed, "init");
  ModelBundle b;
  b.config = cfg;
  b.mode = mode;
  b.tokenizer = init_tokenizer(cfg, rng);
  b.encoder = init_encoder(cfg, rng);
  b.adapter = init_adapter(cfg, rng);
  b.head = init_head(cfg, rng);
  return b;
}

}  // namespace fedsis
