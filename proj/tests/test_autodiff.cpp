#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsis/graph.hpp"
#include "fedsis/rng.hpp"
#include "support/checks.hpp"

using namespace fedsis;
using fedsis::testing::check_gradients;
using fedsis::testing::random_tensor;
using fedsis::testing::random_tensor_off_kink;

namespace {
constexpr double kTol = 1e-6;
}

TEST_CASE("linear and quadratic losses have closed-form gradients") {
  Tensor w(Shape{3, 4});
  Rng rng(5);
  for (double& v : w.values()) v = rng.normal();

  SUBCASE("loss = sum(w) gives all-ones") {
    Graph g;
    NodeId wi = g.input_with_grad(w);
    g.backward(g.sum_all(wi));
    for (double v : g.grad(wi)) CHECK(v == 1.0);
  }

  SUBCASE("loss = 0.5*|w|^2 gives w") {
    Graph g;
    NodeId wi = g.input_with_grad(w);
    NodeId loss = g.scale(g.sum_all(g.mul(wi, wi)), 0.5);
    g.backward(loss);
    const auto& grad = g.grad(wi);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      CHECK(grad[i] == doctest::Approx(w[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Graph g;
  NodeId x = g.input_with_grad(Tensor(Shape{2, 2}, 1.0));
  CHECK_THROWS_WITH_AS(g.backward(x), doctest::Contains("must be scalar"), std::runtime_error);
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Graph g;
  NodeId a = g.input(Tensor(Shape{2, 3}));
  NodeId b = g.input(Tensor(Shape{4, 5}));
  CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("matmul"), std::runtime_error);
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("[2,3]"), std::runtime_error);
}

// Central finite differences (h = 1e-5) against the reverse pass, operator by
// operator; 1e-6 relative tolerance in 64-bit per the engine contract.
TEST_CASE("per-operator gradient checks") {
  Rng rng(2024);

  SUBCASE("matmul") {
    auto res = check_gradients(
        {random_tensor({4, 5}, rng), random_tensor({5, 3}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.sum_all(g.mul(g.matmul(in[0], in[1]), g.matmul(in[0], in[1])));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("bmm") {
    auto res = check_gradients(
        {random_tensor({2, 3, 4, 5}, rng), random_tensor({2, 3, 5, 4}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.bmm(in[0], in[1]);
          return g.sum_all(g.mul(y, y));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("add, add_bias, mul, scale") {
    auto res = check_gradients(
        {random_tensor({3, 6}, rng), random_tensor({3, 6}, rng), random_tensor({6}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.add(in[0], in[1]);
          y = g.add_bias(y, in[2]);
          y = g.mul(y, y);
          return g.sum_all(g.scale(y, 0.7));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("conv2d with stride and padding") {
    auto res = check_gradients(
        {random_tensor({2, 5, 6, 3}, rng), random_tensor({3, 3, 3, 4}, rng),
         random_tensor({4}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.conv2d(in[0], in[1], in[2], {2, 1, 1, 1});
          return g.sum_all(g.mul(y, y));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("batch_norm train mode") {
    BatchNormState state(4);
    auto res = check_gradients(
        {random_tensor({7, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)},
        [&state](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.batch_norm(in[0], in[1], in[2], state, true);
          return g.sum_all(g.mul(y, y));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("batch_norm eval mode") {
    BatchNormState state(4);
    Rng srng(31);
    for (double& v : state.running_mean.values()) v = srng.normal() * 0.2;
    for (double& v : state.running_var.values()) v = 1.0 + 0.3 * srng.uniform01();
    auto res = check_gradients(
        {random_tensor({5, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)},
        [&state](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.batch_norm(in[0], in[1], in[2], state, false);
          return g.sum_all(g.mul(y, y));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("layer_norm") {
    auto res = check_gradients(
        {random_tensor({6, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.layer_norm(in[0], in[1], in[2]);
          return g.sum_all(g.mul(y, y));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("softmax") {
    auto res = check_gradients({random_tensor({4, 6}, rng)},
                               [](Graph& g, const std::vector<NodeId>& in) {
                                 NodeId y = g.softmax(in[0]);
                                 return g.sum_all(g.mul(y, y));
                               });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("gelu") {
    auto res = check_gradients({random_tensor({5, 7}, rng)},
                               [](Graph& g, const std::vector<NodeId>& in) {
                                 NodeId y = g.gelu(in[0]);
                                 return g.sum_all(g.mul(y, y));
                               });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("relu away from the kink") {
    auto res = check_gradients({random_tensor_off_kink({6, 6}, rng)},
                               [](Graph& g, const std::vector<NodeId>& in) {
                                 NodeId y = g.relu(in[0]);
                                 return g.sum_all(g.mul(y, y));
                               });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("global_avg_pool") {
    auto res = check_gradients({random_tensor({2, 3, 3, 5}, rng)},
                               [](Graph& g, const std::vector<NodeId>& in) {
                                 NodeId y = g.global_avg_pool(in[0]);
                                 return g.sum_all(g.mul(y, y));
                               });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("concat and slice along the token axis") {
    auto res = check_gradients(
        {random_tensor({2, 3, 4}, rng), random_tensor({2, 2, 4}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId y = g.concat_tokens(in[0], in[1]);
          NodeId s = g.slice_tokens(y, 1, 3);
          return g.sum_all(g.mul(s, s));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("reshape, transpose, tile_batch") {
    auto res = check_gradients(
        {random_tensor({2, 3, 4, 5}, rng), random_tensor({3, 5}, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          NodeId t = g.transpose(in[0], {0, 2, 1, 3});
          NodeId r = g.reshape(t, Shape{2, 4, 15});
          NodeId tile = g.tile_batch(in[1], 4);  // (4,3,5)
          NodeId r2 = g.reshape(tile, Shape{2, 2, 3, 5});
          NodeId r3 = g.reshape(r2, Shape{2, 6, 5});
          NodeId both = g.concat_tokens(r, g.reshape(r3, Shape{2, 2, 15}));
          return g.sum_all(g.mul(both, both));
        });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("cross_entropy") {
    auto res = check_gradients({random_tensor({5, 2}, rng)},
                               [](Graph& g, const std::vector<NodeId>& in) {
                                 return g.cross_entropy(in[0], {0, 1, 1, 0, 1});
                               });
    CHECK(res.max_rel_err <= kTol);
  }

  SUBCASE("multi_head_attention composition") {
    const std::size_t d = 8;
    std::vector<Tensor> inputs;
    inputs.push_back(random_tensor({2, 5, d}, rng, 0.5));
    for (int i = 0; i < 4; ++i) {
      inputs.push_back(random_tensor({d, d}, rng, 0.3));
      inputs.push_back(random_tensor({d}, rng, 0.1));
    }
    auto res = check_gradients(std::move(inputs),
                               [d](Graph& g, const std::vector<NodeId>& in) {
                                 NodeId y = g.multi_head_attention(
                                     in[0], in[1], in[2], in[3], in[4], in[5], in[6], in[7],
                                     in[8], 2);
                                 return g.sum_all(g.mul(y, y));
                               });
    CHECK(res.max_rel_err <= kTol);
  }
}

TEST_CASE("gradient check in 32-bit mode stays within 1e-3") {
  Rng rng(77);
  // Analytic gradients from the f32 engine vs the f64 finite-difference
  // oracle; the gap is f32 rounding, bounded at 1e-3.
  std::vector<Tensor> inputs{random_tensor({3, 4}, rng, 0.5), random_tensor({4, 2}, rng, 0.5)};
  auto build = [](Graph& g, const std::vector<NodeId>& in) {
    NodeId y = g.softmax(g.matmul(g.gelu(in[0]), in[1]));
    return g.sum_all(g.mul(y, y));
  };

  std::vector<std::vector<double>> f32_grads;
  {
    Graph g(Precision::F32);
    std::vector<NodeId> ids;
    for (Tensor& t : inputs) ids.push_back(g.input_with_grad(t));
    g.backward(build(g, ids));
    for (NodeId id : ids) f32_grads.push_back(g.grad(id));
  }
  auto eval64 = [&](const std::vector<Tensor>& probe) {
    Graph g;
    std::vector<NodeId> ids;
    for (const Tensor& t : probe) ids.push_back(g.input_with_grad(t));
    return g.value(build(g, ids))[0];
  };
  double max_rel = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto probe = inputs;
      probe[i][j] += h;
      const double up = eval64(probe);
      probe[i][j] = inputs[i][j] - h;
      const double dn = eval64(probe);
      const double numeric = (up - dn) / (2 * h);
      const double a = f32_grads[i][j];
      const double scale = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / scale);
    }
  }
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("f32 mode stores exactly representable floats") {
  Rng rng(11);
  Graph g(Precision::F32);
  NodeId a = g.input(random_tensor({4, 4}, rng));
  NodeId b = g.input(random_tensor({4, 4}, rng));
  const Tensor& y = g.value(g.matmul(a, b));
  for (double v : y.values()) {
    CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("batch norm eval is a deterministic affine map") {
  Rng rng(13);
  BatchNormState state(6);
  for (double& v : state.running_mean.values()) v = rng.normal();
  for (double& v : state.running_var.values()) v = 0.5 + rng.uniform01();
  Tensor x = random_tensor({9, 6}, rng);
  Tensor gamma = random_tensor({6}, rng);
  Tensor beta = random_tensor({6}, rng);

  auto run = [&] {
    Graph g;
    NodeId y = g.batch_norm(g.input(x), g.input(gamma), g.input(beta), state, false);
    return g.value(y);
  };
  Tensor y1 = run();
  Tensor y2 = run();
  CHECK(y1.same_values(y2));
}

TEST_CASE("cross entropy of uniform logits is ln(num_classes)") {
  for (std::size_t classes : {2u, 3u, 7u}) {
    Graph g;
    NodeId logits = g.input(Tensor(Shape{4, classes}, 0.42));
    NodeId loss = g.cross_entropy(logits, {0, 1, 0, 1});
    CHECK(std::fabs(g.value(loss)[0] - std::log(static_cast<double>(classes))) <= 1e-12);
  }
}

TEST_CASE("forward and backward keep values finite") {
  Rng rng(99);
  Graph g;
  NodeId x = g.input_with_grad(random_tensor({4, 6, 8}, rng, 3.0));
  NodeId w = g.input_with_grad(random_tensor({8, 8}, rng, 3.0));
  NodeId y = g.softmax(g.matmul(g.gelu(x), w));
  NodeId loss = g.sum_all(y);
  g.backward(loss);
  CHECK(g.value(y).all_finite());
  for (double v : g.grad(x)) CHECK(std::isfinite(v));
}

TEST_CASE("residual reuse accumulates gradients once per consumer") {
  // x used twice: y = x + gelu(x); checked against finite differences.
  Rng rng(123);
  auto res = check_gradients({random_tensor({3, 5}, rng)},
                             [](Graph& g, const std::vector<NodeId>& in) {
                               NodeId y = g.add(in[0], g.gelu(in[0]));
                               return g.sum_all(g.mul(y, y));
                             });
  CHECK(res.max_rel_err <= 1e-6);
}
