#include "fedsis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "fedsis/tensor.hpp"  // fail()

namespace fedsis {

namespace {

void check_scores(const ScoreSet& scores, const char* where, bool need_both_classes) {
  if (scores.empty()) fail(where, "empty score set");
  std::size_t pos = 0;
  for (const ScoreEntry& e : scores) {
    if (!std::isfinite(e.score)) fail(where, "non-finite score");
    if (e.label != 0 && e.label != 1) fail(where, "label must be 0 or 1");
    pos += static_cast<std::size_t>(e.label);
  }
  if (need_both_classes && (pos == 0 || pos == scores.size())) {
    fail(where, "both classes required for threshold metrics");
  }
}

// All achievable (FAR, FRR) operating points: every distinct score plus one
// threshold above the maximum. Any other threshold reproduces one of these.
std::vector<double> candidate_thresholds(const ScoreSet& scores) {
  std::vector<double> c;
  c.reserve(scores.size() + 1);
  for (const ScoreEntry& e : scores) c.push_back(e.score);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  c.push_back(c.back() + 1.0);
  return c;
}

struct Rates {
  double far = 0.0;
  double frr = 0.0;
};

Rates rates_at(const ScoreSet& scores, double tau) {
  std::size_t n_att = 0, n_bona = 0, att_accept = 0, bona_reject = 0;
  for (const ScoreEntry& e : scores) {
    if (e.label == 0) {
      ++n_att;
      if (e.score >= tau) ++att_accept;
    } else {
      ++n_bona;
      if (e.score < tau) ++bona_reject;
    }
  }
  return {static_cast<double>(att_accept) / static_cast<double>(n_att),
          static_cast<double>(bona_reject) / static_cast<double>(n_bona)};
}

double eer_threshold(const ScoreSet& scores) {
  double best_tau = 0.0;
  double best_diff = -1.0;
  for (double tau : candidate_thresholds(scores)) {
    const Rates r = rates_at(scores, tau);
    const double diff = std::fabs(r.far - r.frr);
    if (best_diff < 0.0 || diff < best_diff) {
      best_diff = diff;
      best_tau = tau;
    }
  }
  return best_tau;
}

}  // namespace

ScoreSet group_average(const ScoreSet& scores) {
  check_scores(scores, "group_average", false);
  std::map<uint32_t, std::pair<double, std::size_t>> sums;  // group -> (sum, count)
  std::map<uint32_t, int> labels;
  for (const ScoreEntry& e : scores) {
    auto [it, fresh] = labels.emplace(e.group, e.label);
    if (!fresh && it->second != e.label) {
      fail("group_average", "mixed labels in group " + std::to_string(e.group));
    }
    auto& s = sums[e.group];
    s.first += e.score;
    s.second += 1;
  }
  ScoreSet out;
  out.reserve(sums.size());
  for (const auto& [group, s] : sums) {
    out.push_back({s.first / static_cast<double>(s.second), labels[group], group});
  }
  return out;
}

double auc_percent(const ScoreSet& scores) {
  check_scores(scores, "auc", true);
  // Mann-Whitney with midranks for ties.
  std::vector<const ScoreEntry*> sorted;
  sorted.reserve(scores.size());
  for (const ScoreEntry& e : scores) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoreEntry* a, const ScoreEntry* b) { return a->score < b->score; });

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j]->score == sorted[i]->score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (sorted[k]->label == 1) {
        rank_sum_pos += midrank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return 100.0 * u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

HterPolicy HterPolicy::fixed(double tau) {
  HterPolicy p;
  p.kind = Kind::Fixed;
  p.fixed_tau = tau;
  return p;
}

HterPolicy HterPolicy::dev_set(const ScoreSet* dev) {
  HterPolicy p;
  p.kind = Kind::DevSet;
  p.dev = dev;
  return p;
}

std::string to_string(const HterPolicy& p) {
  switch (p.kind) {
    case HterPolicy::Kind::Eer: return "eer";
    case HterPolicy::Kind::Fixed: {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "fixed:%.6g", p.fixed_tau);
      return buf;
    }
    case HterPolicy::Kind::DevSet: return "dev-set";
  }
  return "?";
}

HterPolicy hter_policy_from_string(const std::string& s) {
  if (s == "eer") return HterPolicy::eer();
  if (s.rfind("fixed:", 0) == 0) {
    return HterPolicy::fixed(std::stod(s.substr(6)));
  }
  fail("hter_policy", "unknown policy '" + s + "' (expected eer or fixed:<tau>)");
}

HterResult hter(const ScoreSet& scores, const HterPolicy& policy) {
  check_scores(scores, "hter", true);
  double tau = 0.0;
  switch (policy.kind) {
    case HterPolicy::Kind::Eer:
      tau = eer_threshold(scores);
      break;
    case HterPolicy::Kind::Fixed:
      tau = policy.fixed_tau;
      break;
    case HterPolicy::Kind::DevSet:
      if (policy.dev == nullptr) fail("hter", "dev-set policy without a dev score set");
      check_scores(*policy.dev, "hter(dev)", true);
      tau = eer_threshold(*policy.dev);
      break;
  }
  const Rates r = rates_at(scores, tau);
  return {100.0 * 0.5 * (r.far + r.frr), tau};
}

double tpr_at_fpr_percent(const ScoreSet& scores, double fpr_target) {
  check_scores(scores, "tpr_at_fpr", true);
  if (fpr_target < 0.0 || fpr_target > 1.0) {
    fail("tpr_at_fpr", "target must be a rate in [0,1]");
  }
  double best_tpr = 0.0;
  bool found = false;
  for (double tau : candidate_thresholds(scores)) {
    const Rates r = rates_at(scores, tau);
    if (r.far <= fpr_target) {
      const double tpr = 1.0 - r.frr;
      if (!found || tpr > best_tpr) best_tpr = tpr;
      found = true;
    }
  }
  return 100.0 * best_tpr;
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) fail("aggregate_runs", "no records");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

std::string metrics_csv_header() {
  return "mode,seed,target_domain,hter,auc,tpr_at_fpr,threshold,policy,total_bytes";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.9g,%s,%zu", r.mode.c_str(),
                r.seed.c_str(), r.target_domain, r.hter, r.auc, r.tpr_at_fpr, r.threshold,
                r.policy.c_str(), r.total_bytes);
  return buf;
}

}  // namespace fedsis
