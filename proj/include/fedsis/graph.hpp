#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "fedsis/tensor.hpp"

namespace fedsis {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct Conv2dSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// Running statistics for one batch-norm layer. Owned by the model; only
// train-mode forwards mutate it.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

enum class Op : uint8_t {
  Leaf,
  Matmul,
  Bmm,
  Add,
  AddBias,
  Mul,
  Scale,
  Conv2d,
  BatchNorm,
  LayerNorm,
  Softmax,
  Gelu,
  Relu,
  Gap,
  Concat,
  Slice,
  Reshape,
  Transpose,
  TileBatch,
  SumAll,
  CrossEntropy,
};

const char* op_name(Op op);

// Reverse-mode tape. Nodes are appended in execution order, which is also a
// topological order; backward walks the list once in reverse. A graph and
// its tensors belong to one execution context for the span of a
// forward/backward pair; distinct graphs are independent.
class Graph {
 public:
  explicit Graph(Precision precision = Precision::F64) : precision_(precision) {}

  Precision precision() const { return precision_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Leaves. `param` binds an external tensor: backward accumulates into its
  // grad slot when it requires grad. `input_with_grad` marks a cut point
  // whose gradient is retrievable (the split-learning message boundaries).
  NodeId input(Tensor t);
  NodeId input_with_grad(Tensor t);
  NodeId param(Tensor& t);

  // Operators. Shapes are validated; mismatches throw with both shapes named.
  NodeId matmul(NodeId a, NodeId b);          // a: rank>=2, b: rank 2
  NodeId bmm(NodeId a, NodeId b);             // equal leading dims, rank>=3
  NodeId add(NodeId a, NodeId b);             // same shape
  NodeId add_bias(NodeId x, NodeId b);        // b's shape is a suffix of x's
  NodeId mul(NodeId a, NodeId b);             // elementwise
  NodeId scale(NodeId x, double s);
  NodeId conv2d(NodeId x, NodeId w, NodeId bias, const Conv2dSpec& spec);  // NHWC
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool train);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId softmax(NodeId x);                   // last axis
  NodeId gelu(NodeId x);
  NodeId relu(NodeId x);
  NodeId global_avg_pool(NodeId x);           // (B,H,W,C) or (B,P,C) -> (B,C)
  NodeId concat_tokens(NodeId a, NodeId b);   // along axis 1 of (B,S,d)
  NodeId slice_tokens(NodeId x, std::size_t from, std::size_t len);
  NodeId reshape(NodeId x, Shape shape);
  NodeId transpose(NodeId x, std::array<std::size_t, 4> perm);  // rank 4
  NodeId tile_batch(NodeId x, std::size_t reps);  // prepend an axis of size reps
  NodeId sum_all(NodeId x);                   // -> scalar
  NodeId cross_entropy(NodeId logits, std::vector<int32_t> labels);  // mean over batch

  // Scaled dot-product multi-head attention over (B,T,d), composed from the
  // primitives above.
  NodeId multi_head_attention(NodeId x, NodeId wq, NodeId bq, NodeId wk, NodeId bk, NodeId wv,
                              NodeId bv, NodeId wo, NodeId bo, std::size_t heads);

  const Tensor& value(NodeId id) const;
  const std::vector<double>& grad(NodeId id) const;

  // Reverse pass from a scalar loss (throws on non-scalar), or from an
  // arbitrary node with an incoming gradient of matching size.
  void backward(NodeId loss);
  void backward_seeded(NodeId node, const std::vector<double>& seed);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::array<NodeId, 3> in{kNoNode, kNoNode, kNoNode};
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    bool grad_retrievable = false;

    double scalar = 0.0;
    Conv2dSpec conv{};
    bool train_mode = false;
    double eps = 0.0;
    std::size_t from = 0, len = 0;
    std::array<std::size_t, 4> perm{};
    Shape in_shape;
    std::vector<double> saved;
    std::vector<double> saved2;
    std::vector<int32_t> labels;
    Tensor* bound = nullptr;
  };

  NodeId push(Node n);
  Node& at(NodeId id);
  const Node& at(NodeId id) const;
  bool wants_grad(NodeId id) const { return nodes_[id].needs_grad; }
  std::vector<double>& grad_buf(NodeId id);
  void run_backward(NodeId root);
  void backward_node(NodeId id);

  Precision precision_;
  std::vector<Node> nodes_;
};

}  // namespace fedsis
