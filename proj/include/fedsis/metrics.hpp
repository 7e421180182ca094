#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedsis {

struct ScoreEntry {
  double score = 0.0;  // bonafide probability in [0,1]
  int label = 0;       // 1 bonafide, 0 attack
  uint32_t group = 0;
};

using ScoreSet = std::vector<ScoreEntry>;

// One averaged score per group; labels must be uniform within a group.
ScoreSet group_average(const ScoreSet& scores);

// Rank-statistic AUC in percent: probability that a random bonafide outscores
// a random attack, ties counted 1/2.
double auc_percent(const ScoreSet& scores);

struct HterPolicy {
  enum class Kind : uint8_t { Eer, Fixed, DevSet };
  Kind kind = Kind::Eer;
  double fixed_tau = 0.5;          // Fixed
  const ScoreSet* dev = nullptr;   // DevSet: threshold from this set's EER point

  static HterPolicy eer() { return {}; }
  static HterPolicy fixed(double tau);
  static HterPolicy dev_set(const ScoreSet* dev);
};

std::string to_string(const HterPolicy& p);
HterPolicy hter_policy_from_string(const std::string& s);  // "eer" or "fixed:<tau>"

struct HterResult {
  double hter_percent = 0.0;
  double threshold = 0.0;
};

// FAR(t) counts attacks scored >= t, FRR(t) bonafide scored < t. The eer
// policy picks the threshold minimizing |FAR - FRR|, ties resolved to the
// lower threshold; HTER = (FAR + FRR)/2 at that threshold, in percent.
HterResult hter(const ScoreSet& scores, const HterPolicy& policy = HterPolicy::eer());

// Highest TPR over thresholds with FPR <= target (no interpolation), percent.
// TPR counts bonafide scored >= t, FPR counts attacks scored >= t.
double tpr_at_fpr_percent(const ScoreSet& scores, double fpr_target);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample std (n-1), 0 for a single value
};

Aggregate aggregate_runs(const std::vector<double>& values);

struct MetricsRecord {
  std::string mode;
  std::string seed;  // a number, or "mean" for the aggregate row
  int target_domain = 0;
  double hter = 0.0;
  double auc = 0.0;
  double tpr_at_fpr = 0.0;
  double fpr_target = 0.01;
  double threshold = 0.0;
  std::string policy;
  std::size_t total_bytes = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);

}  // namespace fedsis
