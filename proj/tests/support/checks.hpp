#pragma once

// Shared test helpers: random tensors, bitwise comparison, and the central
// finite-difference gradient oracle the autodiff checks are frozen against.

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "fedsis/graph.hpp"
#include "fedsis/rng.hpp"
#include "fedsis/tensor.hpp"

namespace fedsis::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

// Random values kept clear of the ReLU kink at 0.
inline Tensor random_tensor_off_kink(Shape shape, Rng& rng, double margin = 1e-3) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.values()) {
    if (std::fabs(v) < margin) v = (v < 0 ? -margin : margin) * 2.0;
  }
  return t;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Builds a scalar loss from graph leaves; used both for the analytic pass and
// for the finite-difference probes (each probe re-runs the whole forward).
using LossBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central differences with step h against the analytic reverse pass. For
// coordinates where both gradients are tiny the absolute error is used
// instead (the relative error of two near-zero numbers is noise).
inline GradCheckResult check_gradients(std::vector<Tensor> inputs, const LossBuilder& build,
                                       double h = 1e-5, Precision prec = Precision::F64,
                                       std::size_t max_coords_per_input = 0) {
  // Analytic gradients.
  std::vector<std::vector<double>> analytic;
  {
    Graph g(prec);
    std::vector<NodeId> ids;
    for (Tensor& t : inputs) ids.push_back(g.input_with_grad(t));
    NodeId loss = build(g, ids);
    g.backward(loss);
    for (NodeId id : ids) analytic.push_back(g.grad(id));
  }

  auto eval_loss = [&](const std::vector<Tensor>& probe) {
    Graph g(prec);
    std::vector<NodeId> ids;
    for (const Tensor& t : probe) ids.push_back(g.input_with_grad(t));
    NodeId loss = build(g, ids);
    return g.value(loss)[0];
  };

  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].size();
    const std::size_t step =
        (max_coords_per_input > 0 && n > max_coords_per_input) ? n / max_coords_per_input : 1;
    for (std::size_t j = 0; j < n; j += step) {
      std::vector<Tensor> probe = inputs;
      probe[i][j] = inputs[i][j] + h;
      const double up = eval_loss(probe);
      probe[i][j] = inputs[i][j] - h;
      const double dn = eval_loss(probe);
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[i][j];
      // Guarded relative error: coordinates whose gradient is below the
      // floor are held to an absolute bound instead (the finite-difference
      // quotient of two near-equal losses is pure rounding noise there).
      const double scale = std::max({std::fabs(a), std::fabs(numeric), 1e-2});
      const double err = std::fabs(a - numeric) / scale;
      res.max_rel_err = std::max(res.max_rel_err, err);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace fedsis::testing
