#include "fedsis/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

namespace fedsis {

const char* msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::TokenBatch: return "TokenBatch";
    case MsgKind::PseudoClassBatch: return "PseudoClassBatch";
    case MsgKind::PseudoClassGrad: return "PseudoClassGrad";
    case MsgKind::TokenGrad: return "TokenGrad";
    case MsgKind::ParamBroadcast: return "ParamBroadcast";
    case MsgKind::ParamUpload: return "ParamUpload";
  }
  return "?";
}

ProtocolMessage make_message(MsgKind kind, std::size_t round, std::size_t client,
                             std::size_t request, std::vector<Tensor> payload,
                             Precision precision) {
  ProtocolMessage m;
  m.kind = kind;
  m.round = round;
  m.client = client;
  m.request = request;
  m.payload = std::move(payload);
  m.payload_bytes = 0;
  for (const Tensor& t : m.payload) m.payload_bytes += t.size() * bytes_per_element(precision);
  return m;
}

void Transport::record(const ProtocolMessage& m) {
  std::lock_guard<std::mutex> lock(mu_);
  bytes_[static_cast<std::size_t>(m.kind)] += m.payload_bytes;
  counts_[static_cast<std::size_t>(m.kind)] += 1;
  if (audit_enabled_) {
    AuditEntry e;
    e.kind = m.kind;
    e.round = m.round;
    e.client = m.client;
    e.request = m.request;
    e.bytes = m.payload_bytes;
    for (const Tensor& t : m.payload) e.shapes.push_back(t.shape());
    audit_.push_back(std::move(e));
  }
}

std::size_t Transport::total_bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (std::size_t b : bytes_) n += b;
  return n;
}

std::size_t Transport::bytes_of(MsgKind k) const {
  std::lock_guard<std::mutex> lock(mu_);
  return bytes_[static_cast<std::size_t>(k)];
}

std::size_t Transport::count_of(MsgKind k) const {
  std::lock_guard<std::mutex> lock(mu_);
  return counts_[static_cast<std::size_t>(k)];
}

void TrainingConfig::validate() const {
  if (unify_every < 1) fail("training_config", "unify interval must be >= 1");
  if (batch_size < 1) fail("training_config", "batch size must be >= 1");
  if (!(lr > 0.0)) fail("training_config", "learning rate must be positive");
  if (weight_decay < 0.0) fail("training_config", "weight decay must be >= 0");
}

Tensor stack_images(const DomainDataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) fail("stack_images", "empty batch");
  const Shape& img = ds.samples.front().image.shape();
  Tensor out(Shape{idx.size(), img[0], img[1], img[2]});
  const std::size_t stride = shape_numel(img);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& src = ds.samples[idx[i]].image;
    std::copy(src.values().begin(), src.values().end(), out.values().begin() + i * stride);
  }
  return out;
}

DataLoader::DataLoader(const DomainDataset* ds, std::size_t batch_size, Rng rng)
    : ds_(ds), batch_size_(batch_size), rng_(rng) {
  if (ds_ == nullptr || ds_->samples.empty()) fail("data_loader", "empty dataset");
  if (batch_size_ < 1) fail("data_loader", "batch size must be >= 1");
}

void DataLoader::reshuffle() {
  order_.resize(ds_->samples.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
}

Batch DataLoader::next() {
  std::vector<std::size_t> idx;
  idx.reserve(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    if (cursor_ >= order_.size()) reshuffle();
    idx.push_back(order_[cursor_++]);
  }
  Batch b;
  b.images = stack_images(*ds_, idx);
  b.labels.reserve(idx.size());
  for (std::size_t i : idx) b.labels.push_back(ds_->samples[i].label);
  return b;
}

std::string round_record_line(const RoundRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "round=%zu client=%zu ell=%zu loss=%.12g fwd_bytes=%zu bwd_bytes=%zu "
                "unify_bytes=%zu",
                r.round, r.client, r.ell, r.loss, r.fwd_bytes, r.bwd_bytes, r.unify_bytes);
  return buf;
}

void fedavg_aggregate(const std::vector<std::vector<Param*>>& client_params,
                      const std::vector<double>& rho) {
  if (client_params.empty()) fail("unify", "no clients");
  if (client_params.size() != rho.size()) fail("unify", "weight count vs client count");
  double sum = 0.0;
  for (double r : rho) sum += r;
  if (std::fabs(sum - 1.0) > 1e-12) {
    fail("unify", "client weights sum to " + std::to_string(sum) + ", expected 1");
  }
  const std::size_t n_params = client_params.front().size();
  for (const auto& list : client_params) {
    if (list.size() != n_params) fail("unify", "misaligned parameter lists");
  }
  for (std::size_t p = 0; p < n_params; ++p) {
    const std::size_t n = client_params[0][p]->value.size();
    std::vector<double> mean(n, 0.0);
    for (std::size_t k = 0; k < client_params.size(); ++k) {
      const Param* cp = client_params[k][p];
      if (cp->value.size() != n || cp->name != client_params[0][p]->name) {
        fail("unify", "parameter mismatch at '" + cp->name + "'");
      }
      const std::vector<double>& v = cp->value.values();
      for (std::size_t i = 0; i < n; ++i) mean[i] += rho[k] * v[i];
    }
    for (std::size_t k = 0; k < client_params.size(); ++k) {
      client_params[k][p]->value.values() = mean;
    }
  }
}

namespace {

std::vector<double> client_weights(const PartitionPlan& plan) {
  double total = 0.0;
  for (const DomainDataset& c : plan.clients) total += static_cast<double>(c.samples.size());
  std::vector<double> rho;
  rho.reserve(plan.clients.size());
  for (const DomainDataset& c : plan.clients) {
    rho.push_back(static_cast<double>(c.samples.size()) / total);
  }
  return rho;
}

std::vector<Tensor> copy_param_tensors(const std::vector<Param*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Param* p : params) out.push_back(Tensor(p->value.shape(), p->value.values()));
  return out;
}

std::vector<std::size_t> make_visit_order(std::size_t k, VisitOrder order, Rng& rng) {
  std::vector<std::size_t> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = i;
  if (order == VisitOrder::Shuffled) rng.shuffle(v);
  return v;
}

AdamConfig adam_config(const TrainingConfig& cfg) {
  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  return ac;
}

}  // namespace

Federation::Federation(const ModelConfig& model_cfg, const TrainingConfig& train_cfg,
                       const PartitionPlan& plan)
    : model_cfg_(model_cfg), cfg_(train_cfg), plan_(plan) {
  model_cfg_.validate();
  cfg_.validate();
  if (!mode_is_split(cfg_.mode)) {
    fail("federation", "mode " + to_string(cfg_.mode) + " is not a split-learning mode");
  }
  if (plan_.clients.empty()) fail("federation", "no client datasets");

  ModelBundle master = init_bundle(model_cfg_, cfg_.mode, cfg_.seed);
  server_.encoder = std::move(master.encoder);
  server_.adapter = std::move(master.adapter);
  const AdamConfig ac = adam_config(cfg_);
  for (BlockParams& b : server_.encoder.blocks) {
    server_.block_opts.emplace_back(ac, b.params(), model_cfg_.precision);
  }
  server_.cls_opt =
      std::make_unique<Adam>(ac, std::vector<Param*>{&server_.encoder.cls}, model_cfg_.precision);
  server_.adapter_opt =
      std::make_unique<Adam>(ac, server_.adapter.params(), model_cfg_.precision);
  server_.sampler = BlockSampler(model_cfg_.sampler, model_cfg_.depth,
                                 Rng::derive(cfg_.seed, "sampler"));
  server_.contrib.assign(model_cfg_.depth + 1, 0);
  visit_rng_ = Rng::derive(cfg_.seed, "visit");

  rho_ = client_weights(plan_);
  for (std::size_t k = 0; k < plan_.clients.size(); ++k) {
    auto c = std::make_unique<ClientState>();
    c->id = k;
    c->dataset_size = plan_.clients[k].samples.size();
    c->loader = DataLoader(&plan_.clients[k], cfg_.batch_size, Rng::derive(cfg_.seed, "loader", k));
    c->tokenizer = master.tokenizer;  // broadcast: every client starts identical
    c->head = master.head;
    c->tok_opt = std::make_unique<Adam>(ac, c->tokenizer.params(), model_cfg_.precision);
    c->head_opt = std::make_unique<Adam>(ac, c->head.params(), model_cfg_.precision);

    std::vector<Tensor> payload = copy_param_tensors(c->tokenizer.params());
    for (Tensor& t : copy_param_tensors(c->head.params())) payload.push_back(std::move(t));
    transport_.record(make_message(MsgKind::ParamBroadcast, 0, k, 0, std::move(payload),
                                   model_cfg_.precision));
    clients_.push_back(std::move(c));
  }
}

ProtocolMessage Federation::client_forward(std::size_t k) {
  ClientState& c = *clients_.at(k);
  if (c.pending.has_value()) {
    fail("client_forward",
         "client " + std::to_string(k) + " already has an outstanding request");
  }
  Batch batch = c.loader.next();
  ClientState::Pending p;
  p.graph = Graph(model_cfg_.precision);
  p.tokens = build_tokenizer(p.graph, c.tokenizer, model_cfg_, batch.images);
  p.labels = std::move(batch.labels);
  {
    std::lock_guard<std::mutex> lock(server_mu_);
    p.request = next_request_++;
  }
  Tensor tokens = p.graph.value(p.tokens);
  const std::size_t request = p.request;
  c.pending = std::move(p);
  ProtocolMessage m = make_message(MsgKind::TokenBatch, round_, k, request, {std::move(tokens)},
                                   model_cfg_.precision);
  transport_.record(m);
  return m;
}

ProtocolMessage Federation::server_forward(const ProtocolMessage& token_batch) {
  std::lock_guard<std::mutex> lock(server_mu_);
  if (server_.cache.count(token_batch.request) != 0) {
    fail("server_forward", "duplicate request id " + std::to_string(token_batch.request));
  }
  const std::size_t ell =
      (cfg_.mode == Mode::FeSta) ? model_cfg_.depth : server_.sampler.draw();

  ServerState::CacheEntry e;
  e.graph = Graph(model_cfg_.precision);
  e.tokens_in = e.graph.input_with_grad(token_batch.payload.at(0));
  PrefixOut prefix = build_encoder_prefix(e.graph, server_.encoder, model_cfg_, e.tokens_in, ell);
  e.out = (cfg_.mode == Mode::FeSta)
              ? prefix.cls
              : build_adapter(e.graph, server_.adapter, model_cfg_, prefix.patches, true);
  e.ell = ell;
  e.client = token_batch.client;
  clients_.at(token_batch.client)->last_ell = ell;

  ProtocolMessage reply =
      make_message(MsgKind::PseudoClassBatch, token_batch.round, token_batch.client,
                   token_batch.request, {e.graph.value(e.out)}, model_cfg_.precision);
  server_.cache.emplace(token_batch.request, std::move(e));
  transport_.record(reply);
  return reply;
}

ProtocolMessage Federation::client_loss_and_backward(std::size_t k,
                                                     const ProtocolMessage& pseudo_batch) {
  ClientState& c = *clients_.at(k);
  if (!c.pending.has_value() || c.pending->request != pseudo_batch.request) {
    fail("client_loss_and_backward", "no matching request for id " +
                                         std::to_string(pseudo_batch.request));
  }
  const Tensor& z = pseudo_batch.payload.at(0);
  if (z.shape()[0] != c.pending->labels.size()) {
    fail("client_loss_and_backward",
         "label count " + std::to_string(c.pending->labels.size()) + " vs batch " +
             std::to_string(z.shape()[0]));
  }
  Graph hg(model_cfg_.precision);
  NodeId zin = hg.input_with_grad(z);
  NodeId logits = build_head(hg, c.head, zin);
  NodeId loss = hg.cross_entropy(logits, c.pending->labels);
  hg.backward(loss);
  Tensor grad(z.shape(), hg.grad(zin));
  c.head_opt->step();
  c.last_loss = hg.value(loss)[0];

  ProtocolMessage reply =
      make_message(MsgKind::PseudoClassGrad, pseudo_batch.round, k, pseudo_batch.request,
                   {std::move(grad)}, model_cfg_.precision);
  transport_.record(reply);
  return reply;
}

ProtocolMessage Federation::server_backward(const ProtocolMessage& grad_msg) {
  std::lock_guard<std::mutex> lock(server_mu_);
  auto it = server_.cache.find(grad_msg.request);
  if (it == server_.cache.end()) {
    fail("server_backward", "no cached forward for request id " +
                                std::to_string(grad_msg.request));
  }
  ServerState::CacheEntry e = std::move(it->second);
  server_.cache.erase(it);

  const Tensor& g = grad_msg.payload.at(0);
  if (g.shape() != e.graph.value(e.out).shape()) {
    fail("server_backward", "gradient shape " + shape_str(g.shape()) + " vs forward shape " +
                                shape_str(e.graph.value(e.out).shape()));
  }
  e.graph.backward_seeded(e.out, g.values());
  Tensor token_grad(e.graph.value(e.tokens_in).shape(), e.graph.grad(e.tokens_in));

  if (mode_uses_adapter(cfg_.mode)) server_.adapter_opt->step();
  server_.contrib[0] += 1;
  for (std::size_t s = 1; s <= e.ell; ++s) server_.contrib[s] += 1;

  ProtocolMessage reply = make_message(MsgKind::TokenGrad, grad_msg.round, e.client,
                                       grad_msg.request, {std::move(token_grad)},
                                       model_cfg_.precision);
  transport_.record(reply);
  return reply;
}

void Federation::client_backward(std::size_t k, const ProtocolMessage& token_grad) {
  ClientState& c = *clients_.at(k);
  if (!c.pending.has_value() || c.pending->request != token_grad.request) {
    fail("client_backward", "no matching request for id " + std::to_string(token_grad.request));
  }
  const Tensor& g = token_grad.payload.at(0);
  if (g.shape() != c.pending->graph.value(c.pending->tokens).shape()) {
    fail("client_backward", "token gradient shape " + shape_str(g.shape()) +
                                " vs token batch shape " +
                                shape_str(c.pending->graph.value(c.pending->tokens).shape()));
  }
  c.pending->graph.backward_seeded(c.pending->tokens, g.values());
  c.tok_opt->step();
  c.pending.reset();
}

void Federation::end_round_encoder_update() {
  if (!server_.cache.empty()) {
    fail("end_round_encoder_update", "called mid-round: " +
                                         std::to_string(server_.cache.size()) +
                                         " outstanding request(s)");
  }
  if (server_.contrib[0] == 0) {
    fail("end_round_encoder_update", "no client contributions this round");
  }
  const double k_count = static_cast<double>(clients_.size());

  const double cls_div = (cfg_.encoder_divisor == EncoderDivisor::Contributors)
                             ? static_cast<double>(server_.contrib[0])
                             : k_count;
  for (double& v : server_.encoder.cls.value.grad()) v /= cls_div;
  server_.cls_opt->step();

  for (std::size_t s = 1; s <= model_cfg_.depth; ++s) {
    if (server_.contrib[s] == 0) continue;  // untouched block: no step, no moment decay
    const double div = (cfg_.encoder_divisor == EncoderDivisor::Contributors)
                           ? static_cast<double>(server_.contrib[s])
                           : k_count;
    for (Param* p : server_.encoder.blocks[s - 1].params()) {
      for (double& v : p->value.grad()) v /= div;
    }
    server_.block_opts[s - 1].step();
  }
  std::fill(server_.contrib.begin(), server_.contrib.end(), 0);
}

void Federation::unify() {
  std::vector<std::vector<Param*>> lists;
  lists.reserve(clients_.size());
  for (auto& c : clients_) {
    std::vector<Param*> list = c->tokenizer.params();
    for (Param* p : c->head.params()) list.push_back(p);
    lists.push_back(std::move(list));
  }
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    ProtocolMessage up = make_message(MsgKind::ParamUpload, round_, k, 0,
                                      copy_param_tensors(lists[k]), model_cfg_.precision);
    clients_[k]->unify_bytes += up.payload_bytes;
    transport_.record(up);
  }
  fedavg_aggregate(lists, rho_);
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    ProtocolMessage down = make_message(MsgKind::ParamBroadcast, round_, k, 0,
                                        copy_param_tensors(lists[k]), model_cfg_.precision);
    clients_[k]->unify_bytes += down.payload_bytes;
    transport_.record(down);
    if (cfg_.reset_moments_on_unify) {
      clients_[k]->tok_opt->reset_moments();
      clients_[k]->head_opt->reset_moments();
    }
  }
}

void Federation::exchange(std::size_t k) {
  try {
    ProtocolMessage m1 = client_forward(k);
    ProtocolMessage m2 = server_forward(m1);
    ProtocolMessage m3 = client_loss_and_backward(k, m2);
    ProtocolMessage m4 = server_backward(m3);
    client_backward(k, m4);
    clients_[k]->fwd_bytes = m1.payload_bytes + m2.payload_bytes;
    clients_[k]->bwd_bytes = m3.payload_bytes + m4.payload_bytes;
  } catch (const std::exception& e) {
    fail("protocol", "round " + std::to_string(round_) + " client " + std::to_string(k) +
                         ": " + e.what());
  }
}

std::vector<std::size_t> Federation::visit_order() {
  return make_visit_order(clients_.size(), cfg_.visit_order, visit_rng_);
}

TrainResult Federation::run() {
  std::vector<RoundRecord> log;
  for (round_ = 1; round_ <= cfg_.rounds; ++round_) {
    for (auto& c : clients_) {
      c->fwd_bytes = c->bwd_bytes = c->unify_bytes = 0;
    }
    const std::vector<std::size_t> order = visit_order();
    if (cfg_.scheduler == SchedulerKind::Strict) {
      for (std::size_t k : order) exchange(k);
    } else {
      std::vector<std::thread> threads;
      std::vector<std::exception_ptr> errors(order.size());
      threads.reserve(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        threads.emplace_back([this, &errors, i, k = order[i]] {
          try {
            exchange(k);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
      }
    }
    end_round_encoder_update();
    if (round_ % cfg_.unify_every == 0 || round_ == cfg_.rounds) unify();
    for (std::size_t k : order) {
      log.push_back({round_, k, clients_[k]->last_ell, clients_[k]->last_loss,
                     clients_[k]->fwd_bytes, clients_[k]->bwd_bytes, clients_[k]->unify_bytes});
    }
  }

  TrainResult result;
  result.bundle.config = model_cfg_;
  result.bundle.mode = cfg_.mode;
  result.bundle.tokenizer = clients_.front()->tokenizer;
  result.bundle.encoder = server_.encoder;
  result.bundle.adapter = server_.adapter;
  result.bundle.head = clients_.front()->head;
  result.log = std::move(log);
  result.total_bytes = transport_.total_bytes();
  return result;
}

namespace {

// One gradient step of the full (monolithic) model; shared by the fedavg
// local update and both centralized modes so that single-client runs match
// them parameter for parameter.
struct FullModel {
  TokenizerParams* tok = nullptr;
  EncoderParams* enc = nullptr;
  AdapterParams* ada = nullptr;
  HeadParams* head = nullptr;
  Adam* tok_opt = nullptr;
  std::vector<Adam>* block_opts = nullptr;
  Adam* cls_opt = nullptr;
  Adam* ada_opt = nullptr;
  Adam* head_opt = nullptr;
};

double full_train_step(FullModel m, const ModelConfig& cfg, const Batch& batch, Mode mode,
                       std::size_t ell) {
  Graph g(cfg.precision);
  NodeId tokens = build_tokenizer(g, *m.tok, cfg, batch.images);
  PrefixOut prefix = build_encoder_prefix(g, *m.enc, cfg, tokens, ell);
  NodeId z = mode_uses_adapter(mode)
                 ? build_adapter(g, *m.ada, cfg, prefix.patches, true)
                 : prefix.cls;
  NodeId logits = build_head(g, *m.head, z);
  NodeId loss = g.cross_entropy(logits, batch.labels);
  g.backward(loss);

  m.tok_opt->step();
  for (std::size_t s = 1; s <= ell; ++s) (*m.block_opts)[s - 1].step();
  m.cls_opt->step();
  if (mode_uses_adapter(mode)) m.ada_opt->step();
  m.head_opt->step();
  return g.value(loss)[0];
}

TrainResult run_fedavg(const ModelConfig& model_cfg, const TrainingConfig& cfg,
                       const PartitionPlan& plan) {
  if (plan.clients.empty()) fail("fedavg", "no client datasets");
  ModelBundle master = init_bundle(model_cfg, cfg.mode, cfg.seed);
  const AdamConfig ac = adam_config(cfg);
  Transport transport;

  std::vector<std::unique_ptr<ClientState>> clients;
  for (std::size_t k = 0; k < plan.clients.size(); ++k) {
    auto c = std::make_unique<ClientState>();
    c->id = k;
    c->dataset_size = plan.clients[k].samples.size();
    c->loader = DataLoader(&plan.clients[k], cfg.batch_size, Rng::derive(cfg.seed, "loader", k));
    c->tokenizer = master.tokenizer;
    c->head = master.head;
    c->local_encoder = std::make_unique<EncoderParams>(master.encoder);
    c->tok_opt = std::make_unique<Adam>(ac, c->tokenizer.params(), model_cfg.precision);
    c->head_opt = std::make_unique<Adam>(ac, c->head.params(), model_cfg.precision);
    for (BlockParams& b : c->local_encoder->blocks) {
      c->local_block_opts.emplace_back(ac, b.params(), model_cfg.precision);
    }
    c->local_cls_opt = std::make_unique<Adam>(
        ac, std::vector<Param*>{&c->local_encoder->cls}, model_cfg.precision);

    std::vector<Tensor> payload = copy_param_tensors(c->tokenizer.params());
    for (Tensor& t : copy_param_tensors(c->local_encoder->params())) payload.push_back(std::move(t));
    for (Tensor& t : copy_param_tensors(c->head.params())) payload.push_back(std::move(t));
    transport.record(make_message(MsgKind::ParamBroadcast, 0, k, 0, std::move(payload),
                                  model_cfg.precision));
    clients.push_back(std::move(c));
  }
  const std::vector<double> rho = client_weights(plan);
  Rng visit_rng = Rng::derive(cfg.seed, "visit");

  std::vector<RoundRecord> log;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const std::vector<std::size_t> order =
        make_visit_order(clients.size(), cfg.visit_order, visit_rng);
    for (auto& c : clients) c->unify_bytes = 0;
    for (std::size_t k : order) {
      ClientState& c = *clients[k];
      Batch batch = c.loader.next();
      FullModel m{&c.tokenizer, c.local_encoder.get(), nullptr,          &c.head,
                  c.tok_opt.get(), &c.local_block_opts, c.local_cls_opt.get(), nullptr,
                  c.head_opt.get()};
      c.last_loss = full_train_step(m, model_cfg, batch, cfg.mode, model_cfg.depth);
      c.last_ell = model_cfg.depth;
    }
    if (round % cfg.unify_every == 0 || round == cfg.rounds) {
      std::vector<std::vector<Param*>> lists;
      for (auto& c : clients) {
        std::vector<Param*> list = c->tokenizer.params();
        for (Param* p : c->local_encoder->params()) list.push_back(p);
        for (Param* p : c->head.params()) list.push_back(p);
        lists.push_back(std::move(list));
      }
      for (std::size_t k = 0; k < clients.size(); ++k) {
        ProtocolMessage up = make_message(MsgKind::ParamUpload, round, k, 0,
                                          copy_param_tensors(lists[k]), model_cfg.precision);
        clients[k]->unify_bytes += up.payload_bytes;
        transport.record(up);
      }
      fedavg_aggregate(lists, rho);
      for (std::size_t k = 0; k < clients.size(); ++k) {
        ProtocolMessage down = make_message(MsgKind::ParamBroadcast, round, k, 0,
                                            copy_param_tensors(lists[k]), model_cfg.precision);
        clients[k]->unify_bytes += down.payload_bytes;
        transport.record(down);
        if (cfg.reset_moments_on_unify) {
          clients[k]->tok_opt->reset_moments();
          clients[k]->head_opt->reset_moments();
          for (Adam& a : clients[k]->local_block_opts) a.reset_moments();
          clients[k]->local_cls_opt->reset_moments();
        }
      }
    }
    for (std::size_t k : order) {
      log.push_back({round, k, clients[k]->last_ell, clients[k]->last_loss, 0, 0,
                     clients[k]->unify_bytes});
    }
  }

  TrainResult result;
  result.bundle.config = model_cfg;
  result.bundle.mode = cfg.mode;
  result.bundle.tokenizer = clients.front()->tokenizer;
  result.bundle.encoder = *clients.front()->local_encoder;
  result.bundle.adapter = std::move(master.adapter);  // unused by this mode
  result.bundle.head = clients.front()->head;
  result.log = std::move(log);
  result.total_bytes = transport.total_bytes();
  return result;
}

TrainResult run_central(const ModelConfig& model_cfg, const TrainingConfig& cfg,
                        const PartitionPlan& plan) {
  if (plan.clients.empty()) fail("centralized", "no client datasets");
  // Pool every client's data into one loader, in client order.
  DomainDataset pooled;
  pooled.domain_id = 0;
  for (const DomainDataset& c : plan.clients) {
    for (const SyntheticSample& s : c.samples) pooled.samples.push_back(s);
  }

  ModelBundle model = init_bundle(model_cfg, cfg.mode, cfg.seed);
  const AdamConfig ac = adam_config(cfg);
  Adam tok_opt(ac, model.tokenizer.params(), model_cfg.precision);
  std::vector<Adam> block_opts;
  for (BlockParams& b : model.encoder.blocks) {
    block_opts.emplace_back(ac, b.params(), model_cfg.precision);
  }
  Adam cls_opt(ac, std::vector<Param*>{&model.encoder.cls}, model_cfg.precision);
  Adam ada_opt(ac, model.adapter.params(), model_cfg.precision);
  Adam head_opt(ac, model.head.params(), model_cfg.precision);

  DataLoader loader(&pooled, cfg.batch_size, Rng::derive(cfg.seed, "loader", 0));
  BlockSampler sampler(model_cfg.sampler, model_cfg.depth, Rng::derive(cfg.seed, "sampler"));

  std::vector<RoundRecord> log;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    Batch batch = loader.next();
    const std::size_t ell =
        (cfg.mode == Mode::CentralizedIs) ? sampler.draw() : model_cfg.depth;
    FullModel m{&model.tokenizer, &model.encoder, &model.adapter, &model.head,
                &tok_opt,         &block_opts,    &cls_opt,       &ada_opt,
                &head_opt};
    const double loss = full_train_step(m, model_cfg, batch, cfg.mode, ell);
    log.push_back({round, 0, ell, loss, 0, 0, 0});
  }

  TrainResult result;
  result.bundle = std::move(model);
  result.log = std::move(log);
  result.total_bytes = 0;
  return result;
}

}  // namespace

TrainResult run_training(const ModelConfig& model_cfg, const TrainingConfig& train_cfg,
                         const PartitionPlan& plan) {
  model_cfg.validate();
  train_cfg.validate();
  switch (train_cfg.mode) {
    case Mode::FedSis:
    case Mode::FeSta: {
      Federation fed(model_cfg, train_cfg, plan);
      return fed.run();
    }
    case Mode::FedAvg:
      return run_fedavg(model_cfg, train_cfg, plan);
    case Mode::Centralized:
    case Mode::CentralizedIs:
      return run_central(model_cfg, train_cfg, plan);
  }
  fail("run_training", "unreachable mode");
}

InferencePolicy InferencePolicy::from_string(const std::string& s, uint64_t seed) {
  InferencePolicy p;
  p.seed = seed;
  if (s == "sampled") {
    p.kind = Kind::Sampled;
    return p;
  }
  if (s.rfind("fixed:", 0) == 0) {
    p.kind = Kind::Fixed;
    p.fixed_ell = static_cast<std::size_t>(std::stoul(s.substr(6)));
    return p;
  }
  if (s.rfind("averaged:", 0) == 0) {
    p.kind = Kind::Averaged;
    p.draws = static_cast<std::size_t>(std::stoul(s.substr(9)));
    return p;
  }
  fail("inference_policy",
       "unknown policy '" + s + "' (expected sampled, fixed:<l>, averaged:<m>)");
}

std::string InferencePolicy::to_string() const {
  char buf[48];
  switch (kind) {
    case Kind::Sampled: return "sampled";
    case Kind::Fixed:
      std::snprintf(buf, sizeof(buf), "fixed:%zu", fixed_ell);
      return buf;
    case Kind::Averaged:
      std::snprintf(buf, sizeof(buf), "averaged:%zu", draws);
      return buf;
  }
  return "?";
}

InferOutput infer(ModelBundle& bundle, const DomainDataset& data,
                  const InferencePolicy& policy, std::size_t batch_size,
                  bool collect_features) {
  const ModelConfig& cfg = bundle.config;
  cfg.validate();
  if (data.samples.empty()) fail("infer", "no samples");
  if (batch_size < 1) fail("infer", "batch size must be >= 1");
  const std::size_t depth = cfg.depth;
  const bool cls_path = !mode_uses_adapter(bundle.mode);
  if (policy.kind == InferencePolicy::Kind::Fixed &&
      (policy.fixed_ell < 1 || policy.fixed_ell > depth)) {
    fail("infer", "fixed block " + std::to_string(policy.fixed_ell) + " outside [1," +
                      std::to_string(depth) + "]");
  }

  BlockSampler sampler(cfg.sampler, depth, Rng::derive(policy.seed, "infer"));
  InferOutput out;
  out.scores.reserve(data.samples.size());

  // Scores (and optionally pre-head features) for one batch at a fixed depth.
  auto forward_at = [&](const Tensor& images, std::size_t ell,
                        std::vector<std::vector<double>>* feats) {
    Graph g(cfg.precision);
    NodeId tokens = build_tokenizer(g, bundle.tokenizer, cfg, images);
    PrefixOut prefix = build_encoder_prefix(g, bundle.encoder, cfg, tokens, ell);
    NodeId z = cls_path ? prefix.cls
                        : build_adapter(g, bundle.adapter, cfg, prefix.patches, false);
    NodeId logits = build_head(g, bundle.head, z);
    NodeId probs = g.softmax(logits);
    const Tensor& pv = g.value(probs);
    std::vector<double> scores(pv.shape()[0]);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = pv.values()[i * 2 + 1];
    if (feats != nullptr) {
      const Tensor& zv = g.value(z);
      const std::size_t d = zv.shape()[1];
      feats->assign(scores.size(), {});
      for (std::size_t i = 0; i < scores.size(); ++i) {
        (*feats)[i].assign(zv.values().begin() + i * d, zv.values().begin() + (i + 1) * d);
      }
    }
    return scores;
  };

  for (std::size_t start = 0; start < data.samples.size(); start += batch_size) {
    const std::size_t stop = std::min(start + batch_size, data.samples.size());
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < stop; ++i) idx.push_back(i);
    Tensor images = stack_images(data, idx);

    std::vector<double> scores;
    std::vector<std::vector<double>> feats;
    std::vector<std::vector<double>>* feats_ptr = collect_features ? &feats : nullptr;

    if (cls_path) {
      scores = forward_at(images, depth, feats_ptr);
    } else {
      switch (policy.kind) {
        case InferencePolicy::Kind::Sampled:
          scores = forward_at(images, sampler.draw(), feats_ptr);
          break;
        case InferencePolicy::Kind::Fixed:
          scores = forward_at(images, policy.fixed_ell, feats_ptr);
          break;
        case InferencePolicy::Kind::Averaged: {
          if (policy.draws < 1) fail("infer", "averaged policy needs draws >= 1");
          std::map<std::size_t, std::vector<double>> score_cache;
          std::map<std::size_t, std::vector<std::vector<double>>> feat_cache;
          scores.assign(idx.size(), 0.0);
          if (collect_features) {
            feats.assign(idx.size(), std::vector<double>(cfg.dim, 0.0));
          }
          for (std::size_t n = 0; n < policy.draws; ++n) {
            const std::size_t ell = sampler.draw();
            if (score_cache.find(ell) == score_cache.end()) {
              std::vector<std::vector<double>> f;
              score_cache[ell] = forward_at(images, ell, collect_features ? &f : nullptr);
              if (collect_features) feat_cache[ell] = std::move(f);
            }
            const auto& s = score_cache[ell];
            for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += s[i];
            if (collect_features) {
              const auto& f = feat_cache[ell];
              for (std::size_t i = 0; i < feats.size(); ++i) {
                for (std::size_t j = 0; j < feats[i].size(); ++j) feats[i][j] += f[i][j];
              }
            }
          }
          const double inv = 1.0 / static_cast<double>(policy.draws);
          for (double& s : scores) s *= inv;
          if (collect_features) {
            for (auto& f : feats) {
              for (double& v : f) v *= inv;
            }
          }
          break;
        }
      }
    }
    for (double s : scores) out.scores.push_back(s);
    if (collect_features) {
      for (auto& f : feats) out.features.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace fedsis
