#pragma once

// Exhaustive-threshold oracles for the score metrics: every distinct score,
// every midpoint between neighbours, and sentinels beyond both ends. Slow and
// obviously correct; the implementations must match these exactly.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedsis/metrics.hpp"
#include "fedsis/rng.hpp"

namespace fedsis::testing {

inline std::vector<double> oracle_thresholds(const ScoreSet& s) {
  std::vector<double> v;
  for (const auto& e : s) v.push_back(e.score);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out;
  out.push_back(v.front() - 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(v[i]);
    if (i + 1 < v.size()) out.push_back(0.5 * (v[i] + v[i + 1]));
  }
  out.push_back(v.back() + 1.0);
  return out;
}

struct OracleRates {
  double far, frr;
};

inline OracleRates oracle_rates(const ScoreSet& s, double tau) {
  double att = 0, bona = 0, att_ge = 0, bona_lt = 0;
  for (const auto& e : s) {
    if (e.label == 0) {
      att += 1;
      if (e.score >= tau) att_ge += 1;
    } else {
      bona += 1;
      if (e.score < tau) bona_lt += 1;
    }
  }
  return {att_ge / att, bona_lt / bona};
}

inline double oracle_auc(const ScoreSet& s) {
  double wins = 0, pairs = 0;
  for (const auto& p : s) {
    if (p.label != 1) continue;
    for (const auto& n : s) {
      if (n.label != 0) continue;
      pairs += 1;
      if (p.score > n.score) wins += 1;
      else if (p.score == n.score) wins += 0.5;
    }
  }
  return 100.0 * wins / pairs;
}

inline double oracle_hter_eer(const ScoreSet& s) {
  double best_diff = -1, best_tau = 0;
  for (double tau : oracle_thresholds(s)) {
    const OracleRates r = oracle_rates(s, tau);
    const double diff = std::fabs(r.far - r.frr);
    if (best_diff < 0 || diff < best_diff - 1e-15 ||
        (std::fabs(diff - best_diff) <= 1e-15 && tau < best_tau)) {
      best_diff = diff;
      best_tau = tau;
    }
  }
  const OracleRates r = oracle_rates(s, best_tau);
  return 100.0 * 0.5 * (r.far + r.frr);
}

inline double oracle_tpr_at_fpr(const ScoreSet& s, double target) {
  double best = 0;
  for (double tau : oracle_thresholds(s)) {
    const OracleRates r = oracle_rates(s, tau);
    if (r.far <= target) best = std::max(best, 1.0 - r.frr);
  }
  return 100.0 * best;
}

inline ScoreSet random_score_set(Rng& rng, std::size_t n, bool with_ties) {
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    double score = rng.uniform01();
    if (with_ties) score = std::round(score * 20.0) / 20.0;
    s.push_back({score, static_cast<int>(rng.uniform_int(0, 1)), static_cast<uint32_t>(i)});
  }
  s[0].label = 0;
  s[n - 1].label = 1;
  return s;
}

}  // namespace fedsis::testing
