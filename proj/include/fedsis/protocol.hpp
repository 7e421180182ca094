#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fedsis/model.hpp"
#include "fedsis/synth.hpp"

namespace fedsis {

enum class MsgKind : uint8_t {
  TokenBatch,
  PseudoClassBatch,
  PseudoClassGrad,
  TokenGrad,
  ParamBroadcast,
  ParamUpload,
};

const char* msg_kind_name(MsgKind k);

// Wire message: tensors only. Labels and raw images have no field to ride in
// (U-shaped split), which the audit tests verify structurally.
struct ProtocolMessage {
  MsgKind kind = MsgKind::TokenBatch;
  std::size_t round = 0;
  std::size_t client = 0;
  std::size_t request = 0;
  std::vector<Tensor> payload;
  std::size_t payload_bytes = 0;  // sum of element counts x bytes per element
};

ProtocolMessage make_message(MsgKind kind, std::size_t round, std::size_t client,
                             std::size_t request, std::vector<Tensor> payload,
                             Precision precision);

struct AuditEntry {
  MsgKind kind;
  std::size_t round = 0, client = 0, request = 0, bytes = 0;
  std::vector<Shape> shapes;
};

// In-process delivery is a function call; this records what crossed the wire.
class Transport {
 public:
  void enable_audit() { audit_enabled_ = true; }
  void record(const ProtocolMessage& m);
  std::size_t total_bytes() const;
  std::size_t bytes_of(MsgKind k) const;
  std::size_t count_of(MsgKind k) const;
  const std::vector<AuditEntry>& audit() const { return audit_; }

 private:
  mutable std::mutex mu_;
  std::size_t bytes_[6] = {0, 0, 0, 0, 0, 0};
  std::size_t counts_[6] = {0, 0, 0, 0, 0, 0};
  bool audit_enabled_ = false;
  std::vector<AuditEntry> audit_;
};

enum class VisitOrder : uint8_t { Ascending, Shuffled };
enum class SchedulerKind : uint8_t { Strict, Concurrent };
enum class EncoderDivisor : uint8_t { Contributors, ClientCount };

struct TrainingConfig {
  Mode mode = Mode::FedSis;
  std::size_t rounds = 200;
  std::size_t unify_every = 10;  // r_uni; a terminal unification always runs
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double weight_decay = 1e-6;
  uint64_t seed = 0;
  VisitOrder visit_order = VisitOrder::Ascending;
  SchedulerKind scheduler = SchedulerKind::Strict;
  EncoderDivisor encoder_divisor = EncoderDivisor::Contributors;
  bool reset_moments_on_unify = false;

  void validate() const;
};

struct Batch {
  Tensor images;  // (B,H,W,C)
  std::vector<int32_t> labels;
};

// Per-epoch reshuffle, cycling; batch composition depends only on the seed.
class DataLoader {
 public:
  DataLoader() : rng_(0) {}
  DataLoader(const DomainDataset* ds, std::size_t batch_size, Rng rng);
  Batch next();
  std::size_t dataset_size() const { return ds_ ? ds_->samples.size() : 0; }

 private:
  void reshuffle();
  const DomainDataset* ds_ = nullptr;
  std::size_t batch_size_ = 1;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

Tensor stack_images(const DomainDataset& ds, const std::vector<std::size_t>& idx);

struct RoundRecord {
  std::size_t round = 0;
  std::size_t client = 0;
  std::size_t ell = 0;
  double loss = 0.0;
  std::size_t fwd_bytes = 0;
  std::size_t bwd_bytes = 0;
  std::size_t unify_bytes = 0;
};

std::string round_record_line(const RoundRecord& r);

// rho-weighted in-place parameter averaging (FedAvg). Every client list must
// be aligned (same order, names, shapes); throws unless |sum(rho) - 1| <= 1e-12.
void fedavg_aggregate(const std::vector<std::vector<Param*>>& client_params,
                      const std::vector<double>& rho);

struct ClientState {
  std::size_t id = 0;
  std::size_t dataset_size = 0;
  DataLoader loader;
  TokenizerParams tokenizer;
  HeadParams head;
  std::unique_ptr<Adam> tok_opt, head_opt;
  // fedavg mode only: the full local encoder
  std::unique_ptr<EncoderParams> local_encoder;
  std::vector<Adam> local_block_opts;
  std::unique_ptr<Adam> local_cls_opt;

  struct Pending {
    std::size_t request = 0;
    Graph graph;  // tokenizer forward, kept for the backward leg
    NodeId tokens = kNoNode;
    std::vector<int32_t> labels;
  };
  std::optional<Pending> pending;

  // scratch for the round log
  std::size_t last_ell = 0;
  double last_loss = 0.0;
  std::size_t fwd_bytes = 0, bwd_bytes = 0, unify_bytes = 0;
};

struct ServerState {
  EncoderParams encoder;
  AdapterParams adapter;
  std::vector<Adam> block_opts;  // one per block: skipped rounds freeze moments
  std::unique_ptr<Adam> cls_opt, adapter_opt;
  BlockSampler sampler;

  struct CacheEntry {
    Graph graph;
    NodeId tokens_in = kNoNode;
    NodeId out = kNoNode;
    std::size_t ell = 0;
    std::size_t client = 0;
  };
  std::map<std::size_t, CacheEntry> cache;   // request id -> saved forward
  std::vector<std::size_t> contrib;          // [0]=cls embedding, [1..L]=blocks
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<RoundRecord> log;
  std::size_t total_bytes = 0;
};

// The split-learning federation (fedsis / festa). The spec's protocol
// operations are public so tests can drive single exchanges.
class Federation {
 public:
  Federation(const ModelConfig& model_cfg, const TrainingConfig& train_cfg,
             const PartitionPlan& plan);

  ProtocolMessage client_forward(std::size_t k);
  ProtocolMessage server_forward(const ProtocolMessage& token_batch);
  ProtocolMessage client_loss_and_backward(std::size_t k, const ProtocolMessage& pseudo_batch);
  ProtocolMessage server_backward(const ProtocolMessage& grad_msg);
  void client_backward(std::size_t k, const ProtocolMessage& token_grad);
  void end_round_encoder_update();
  void unify();

  TrainResult run();

  std::size_t client_count() const { return clients_.size(); }
  ClientState& client(std::size_t k) { return *clients_.at(k); }
  ServerState& server() { return server_; }
  Transport& transport() { return transport_; }
  const std::vector<double>& rho() const { return rho_; }
  std::size_t round() const { return round_; }
  void set_round(std::size_t r) { round_ = r; }  // tests drive exchanges manually

 private:
  void exchange(std::size_t k);
  std::vector<std::size_t> visit_order();

  ModelConfig model_cfg_;
  TrainingConfig cfg_;
  PartitionPlan plan_;
  std::vector<std::unique_ptr<ClientState>> clients_;
  ServerState server_;
  Transport transport_;
  std::vector<double> rho_;
  Rng visit_rng_{0};
  std::size_t round_ = 1;
  std::size_t next_request_ = 0;
  std::mutex server_mu_;  // concurrent scheduler serializes server access
};

// Trains in any mode. Split modes run the federation; fedavg runs K full
// local models with rho-weighted aggregation every unifying round;
// centralized modes pool all client data into one loader.
TrainResult run_training(const ModelConfig& model_cfg, const TrainingConfig& train_cfg,
                         const PartitionPlan& plan);

struct InferencePolicy {
  enum class Kind : uint8_t { Sampled, Fixed, Averaged };
  Kind kind = Kind::Sampled;
  uint64_t seed = 0;
  std::size_t fixed_ell = 1;
  std::size_t draws = 16;

  static InferencePolicy from_string(const std::string& s, uint64_t seed);
  std::string to_string() const;
};

struct InferOutput {
  std::vector<double> scores;                // bonafide probability per sample
  std::vector<std::vector<double>> features; // pre-head inputs, when requested
};

InferOutput infer(ModelBundle& bundle, const DomainDataset& data,
                  const InferencePolicy& policy, std::size_t batch_size,
                  bool collect_features = false);

}  // namespace fedsis
