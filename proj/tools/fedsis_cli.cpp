#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fedsis/config.hpp"
#include "fedsis/metrics.hpp"

namespace fs = std::filesystem;
using namespace fedsis;

namespace {

struct SeedResult {
  MetricsRecord metrics;
  std::vector<RoundRecord> log;
  ModelBundle bundle;
  DomainDataset target;
  std::vector<std::vector<double>> features;
};

SeedResult run_one_seed(const ExperimentConfig& cfg, uint64_t seed, bool want_features = false) {
  std::vector<DomainDataset> domains = cfg.build_domains(seed);
  PartitionPlan plan = cfg.build_partition(domains);

  TrainingConfig tc = cfg.protocol;
  tc.seed = seed;
  SeedResult result;
  TrainResult train = run_training(cfg.model, tc, plan);
  result.log = std::move(train.log);
  result.bundle = std::move(train.bundle);
  result.target = std::move(plan.target);

  InferencePolicy policy =
      InferencePolicy::from_string(cfg.eval.inference, Rng::derive(seed, "infer-seed").next_u64());
  InferOutput out = infer(result.bundle, result.target, policy, cfg.eval.batch, want_features);
  result.features = std::move(out.features);

  ScoreSet scores;
  scores.reserve(out.scores.size());
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    const SyntheticSample& s = result.target.samples[i];
    scores.push_back({out.scores[i], s.label, s.group});
  }
  scores = group_average(scores);

  MetricsRecord rec;
  rec.mode = to_string(cfg.protocol.mode);
  rec.seed = std::to_string(seed);
  rec.target_domain = cfg.data.target;
  HterResult h = hter(scores, hter_policy_from_string(cfg.eval.hter_policy));
  rec.hter = h.hter_percent;
  rec.threshold = h.threshold;
  rec.auc = auc_percent(scores);
  rec.tpr_at_fpr = tpr_at_fpr_percent(scores, cfg.eval.fpr_target);
  rec.fpr_target = cfg.eval.fpr_target;
  rec.policy = cfg.eval.hter_policy;
  rec.total_bytes = train.total_bytes;
  result.metrics = rec;
  return result;
}

MetricsRecord aggregate_row(const std::vector<MetricsRecord>& rows) {
  std::vector<double> hters, aucs, tprs, bytes, thresholds;
  for (const MetricsRecord& r : rows) {
    hters.push_back(r.hter);
    aucs.push_back(r.auc);
    tprs.push_back(r.tpr_at_fpr);
    bytes.push_back(static_cast<double>(r.total_bytes));
    thresholds.push_back(r.threshold);
  }
  MetricsRecord m = rows.front();
  m.seed = "mean";
  m.hter = aggregate_runs(hters).mean;
  m.auc = aggregate_runs(aucs).mean;
  m.tpr_at_fpr = aggregate_runs(tprs).mean;
  m.threshold = aggregate_runs(thresholds).mean;
  m.total_bytes = static_cast<std::size_t>(aggregate_runs(bytes).mean);
  return m;
}

void write_round_log(const std::string& path, const std::vector<RoundRecord>& log) {
  std::ofstream os(path);
  if (!os) fail("run", "cannot write '" + path + "'");
  for (const RoundRecord& r : log) os << round_record_line(r) << "\n";
}

void write_features_csv(const std::string& path, const std::vector<std::vector<double>>& feats,
                        const DomainDataset& target) {
  std::ofstream os(path);
  if (!os) fail("run", "cannot write '" + path + "'");
  if (feats.empty()) fail("run", "no features collected");
  const std::size_t d = feats.front().size();
  for (std::size_t j = 0; j < d; ++j) os << "feat_" << j << ",";
  os << "label,domain\n";
  char buf[32];
  for (std::size_t i = 0; i < feats.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", feats[i][j]);
      os << buf << ",";
    }
    os << static_cast<int>(target.samples[i].label) << ","
       << static_cast<int>(target.samples[i].domain) << "\n";
  }
}

int cmd_run(const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.finalize();
  fs::create_directories(cfg.outdir);
  {
    std::ofstream os(cfg.outdir + "/config_echo.ini");
    os << cfg.echo();
  }

  std::vector<MetricsRecord> rows;
  for (uint64_t seed : cfg.seeds) {
    SeedResult r = run_one_seed(cfg, seed, cfg.eval.dump_features);
    write_round_log(cfg.outdir + "/round_log_seed" + std::to_string(seed) + ".txt", r.log);
    save_tensors_file(cfg.outdir + "/checkpoint_seed" + std::to_string(seed) + ".fsis",
                      r.bundle.named_views());
    if (cfg.eval.dump_features) {
      write_features_csv(cfg.outdir + "/features_seed" + std::to_string(seed) + ".csv",
                         r.features, r.target);
    }
    std::cout << "seed " << seed << ": hter=" << r.metrics.hter << " auc=" << r.metrics.auc
              << " tpr@fpr=" << r.metrics.tpr_at_fpr << " bytes=" << r.metrics.total_bytes
              << "\n";
    rows.push_back(r.metrics);
  }

  std::ofstream os(cfg.outdir + "/metrics.csv");
  os << metrics_csv_header() << "\n";
  for (const MetricsRecord& r : rows) os << metrics_csv_row(r) << "\n";
  os << metrics_csv_row(aggregate_row(rows)) << "\n";

  std::vector<double> hters, aucs;
  for (const MetricsRecord& r : rows) {
    hters.push_back(r.hter);
    aucs.push_back(r.auc);
  }
  const Aggregate ah = aggregate_runs(hters);
  const Aggregate aa = aggregate_runs(aucs);
  std::printf("mean: hter=%.3f+/-%.3f auc=%.3f+/-%.3f (%zu seed%s)\n", ah.mean, ah.stddev,
              aa.mean, aa.stddev, cfg.seeds.size(), cfg.seeds.size() == 1 ? "" : "s");
  return 0;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& axis,
              const std::vector<std::string>& values) {
  if (values.empty()) fail("sweep", "no values given");
  const std::vector<std::string> valid = {"mode", "r_uni", "fixed_ell", "sampler_range"};
  if (std::find(valid.begin(), valid.end(), axis) == valid.end()) {
    std::string names;
    for (const auto& v : valid) names += (names.empty() ? "" : ", ") + v;
    fail("sweep", "invalid axis '" + axis + "' (valid: " + names + ")");
  }

  ExperimentConfig probe = base;
  probe.finalize();
  fs::create_directories(probe.outdir);
  std::ofstream os(probe.outdir + "/sweep.csv");
  os << "axis,value," << metrics_csv_header() << "\n";

  struct Summary {
    std::string value;
    Aggregate hter, auc;
  };
  std::vector<Summary> summaries;

  for (const std::string& value : values) {
    ExperimentConfig cfg = base;
    if (axis == "mode") {
      cfg.protocol.mode = mode_from_string(value);
      cfg.mode_set = true;
    } else if (axis == "r_uni") {
      cfg.protocol.unify_every = std::stoul(value);
    } else if (axis == "fixed_ell") {
      cfg.model.sampler.mode = SamplerConfig::Mode::Fixed;
      cfg.model.sampler.fixed = std::stoul(value);
      cfg.eval.inference = "fixed:" + value;
    } else {  // sampler_range "lo-hi"
      const std::size_t dash = value.find('-');
      if (dash == std::string::npos) fail("sweep", "sampler_range value must be lo-hi");
      cfg.model.sampler.mode = SamplerConfig::Mode::Uniform;
      cfg.model.sampler.lo = std::stoul(value.substr(0, dash));
      cfg.model.sampler.hi = std::stoul(value.substr(dash + 1));
    }
    cfg.finalize();

    std::vector<double> hters, aucs;
    for (uint64_t seed : cfg.seeds) {
      SeedResult r = run_one_seed(cfg, seed);
      r.metrics.mode = to_string(cfg.protocol.mode);
      os << axis << "," << value << "," << metrics_csv_row(r.metrics) << "\n";
      hters.push_back(r.metrics.hter);
      aucs.push_back(r.metrics.auc);
    }
    summaries.push_back({value, aggregate_runs(hters), aggregate_runs(aucs)});
    std::printf("%s=%s: hter=%.3f+/-%.3f auc=%.3f+/-%.3f\n", axis.c_str(), value.c_str(),
                summaries.back().hter.mean, summaries.back().hter.stddev,
                summaries.back().auc.mean, summaries.back().auc.stddev);
  }

  std::ofstream sum(probe.outdir + "/sweep_summary.csv");
  sum << "axis,value,hter_mean,hter_std,auc_mean,auc_std\n";
  char buf[160];
  for (const Summary& s : summaries) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f", axis.c_str(),
                  s.value.c_str(), s.hter.mean, s.hter.stddev, s.auc.mean, s.auc.stddev);
    sum << buf << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  auto tensors = load_tensors_file(path);
  std::size_t total = 0;
  for (const auto& [name, t] : tensors) {
    double lo = t.values()[0], hi = t.values()[0];
    for (double v : t.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::printf("%-36s %-14s %8zu  [%.6g, %.6g]\n", name.c_str(),
                shape_str(t.shape()).c_str(), t.size(), lo, hi);
    total += t.size();
  }
  std::printf("%zu tensors, %zu values\n", tensors.size(), total);
  return 0;
}

int cmd_dump_features(const ExperimentConfig& base, const std::string& checkpoint,
                      const std::string& out_path, uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.finalize();
  ModelBundle bundle = init_bundle(cfg.model, cfg.protocol.mode, seed);
  load_into(checkpoint, bundle.named_refs());

  std::vector<DomainDataset> domains = cfg.build_domains(seed);
  PartitionPlan plan = cfg.build_partition(domains);
  std::vector<std::vector<double>> features;
  InferencePolicy policy =
      InferencePolicy::from_string(cfg.eval.inference, Rng::derive(seed, "infer-seed").next_u64());
  InferOutput out = infer(bundle, plan.target, policy, cfg.eval.batch, true);
  write_features_csv(out_path, out.features, plan.target);
  std::printf("wrote %zu feature rows to %s\n", out.features.size(), out_path.c_str());
  return 0;
}

int cmd_gen_data(const ExperimentConfig& base, const std::string& out_path, uint64_t seed) {
  ExperimentConfig cfg = base;
  if (!cfg.mode_set) {  // gen-data does not need a mode; default for finalize()
    cfg.protocol.mode = Mode::FedSis;
    cfg.mode_set = true;
  }
  if (cfg.data.target < 0) cfg.data.target = 0;
  cfg.finalize();
  std::vector<DomainDataset> domains = cfg.build_domains(seed);
  save_dataset(out_path, domains);
  std::size_t total = 0;
  for (const auto& d : domains) total += d.samples.size();
  std::printf("wrote %zu samples over %zu domains to %s\n", total, domains.size(),
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedSIS desk-scale laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string mode_flag, target_flag, seeds_flag, out_flag;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file");
    sub->add_option("--set", overrides, "override: section.key=value")->take_all();
    sub->add_option("--mode", mode_flag, "protocol.mode shorthand");
    sub->add_option("--target", target_flag, "data.target shorthand");
    sub->add_option("--seeds", seeds_flag, "run.seeds shorthand (comma list)");
    sub->add_option("--out", out_flag, "run.outdir shorthand");
  };

  CLI::App* run = app.add_subcommand("run", "train + evaluate per seed");
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "run over an axis of values");
  std::string axis;
  std::vector<std::string> values;
  add_common(sweep);
  sweep->add_option("--axis", axis, "mode | r_uni | fixed_ell | sampler_range")->required();
  sweep->add_option("--values", values, "comma-free list of axis values")
      ->required()
      ->take_all();

  CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "list checkpoint tensors");
  std::string ckpt_path;
  inspect->add_option("file", ckpt_path, "checkpoint path")->required();

  CLI::App* dumpf = app.add_subcommand("dump-features", "pre-head features for the target");
  std::string dump_ckpt, dump_out;
  uint64_t dump_seed = 0;
  add_common(dumpf);
  dumpf->add_option("--checkpoint", dump_ckpt, "trained checkpoint")->required();
  dumpf->add_option("--features-out", dump_out, "output CSV")->required();
  dumpf->add_option("--seed", dump_seed, "data/inference seed");

  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic dataset to a file");
  std::string gen_out;
  uint64_t gen_seed = 0;
  add_common(gen);
  gen->add_option("--data-out", gen_out, "output FSDS file")->required();
  gen->add_option("--seed", gen_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty()
                               ? ExperimentConfig::from_text("", overrides)
                               : ExperimentConfig::from_file(config_path, overrides);
    if (!mode_flag.empty()) {
      cfg.protocol.mode = mode_from_string(mode_flag);
      cfg.mode_set = true;
    }
    if (!target_flag.empty()) cfg.data.target = std::stoi(target_flag);
    if (!seeds_flag.empty()) {
      cfg.seeds.clear();
      std::stringstream ss(seeds_flag);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) cfg.seeds.push_back(std::stoull(item));
      }
    }
    if (!out_flag.empty()) cfg.outdir = out_flag;

    if (run->parsed()) return cmd_run(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg, axis, values);
    if (inspect->parsed()) return cmd_inspect(ckpt_path);
    if (dumpf->parsed()) return cmd_dump_features(cfg, dump_ckpt, dump_out, dump_seed);
    if (gen->parsed()) return cmd_gen_data(cfg, gen_out, gen_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
