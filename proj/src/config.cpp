#include "fedsis/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsis/kernels.hpp"

namespace fedsis {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config", key + ": expected a boolean, got '" + v + "'");
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    fail("config", key + ": expected an unsigned integer, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    fail("config", key + ": expected an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (...) {
    fail("config", key + ": expected a number, got '" + v + "'");
  }
}

std::vector<uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) seeds.push_back(parse_u64(key, item));
  }
  if (seeds.empty()) fail("config", key + ": empty seed list");
  return seeds;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path,
                                             const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) fail("config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str(), overrides);
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text,
                                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;

  auto apply = [&cfg](const std::string& section, const std::string& key,
                      const std::string& value) {
    const std::string path = section + "." + key;
    if (section == "run") {
      if (key == "name") cfg.run_name = value;
      else if (key == "seeds") cfg.seeds = parse_seed_list(path, value);
      else if (key == "outdir") cfg.outdir = value;
      else if (key == "backend") {
        if (value != "omp" && value != "serial") {
          fail("config", path + ": expected omp or serial, got '" + value + "'");
        }
        cfg.backend = value;
      } else if (key == "threads") cfg.threads = parse_int(path, value);
      else fail("config", "unknown key " + path);
    } else if (section == "model") {
      if (key == "image_h") cfg.model.image_h = parse_u64(path, value);
      else if (key == "image_w") cfg.model.image_w = parse_u64(path, value);
      else if (key == "image_c") cfg.model.image_c = parse_u64(path, value);
      else if (key == "tok_c1") cfg.model.tok_c1 = parse_u64(path, value);
      else if (key == "tok_c2") cfg.model.tok_c2 = parse_u64(path, value);
      else if (key == "tok_kernel") cfg.model.tok_kernel = parse_u64(path, value);
      else if (key == "tok_stride1") cfg.model.tok_stride1 = parse_u64(path, value);
      else if (key == "tok_stride2") cfg.model.tok_stride2 = parse_u64(path, value);
      else if (key == "depth") cfg.model.depth = parse_u64(path, value);
      else if (key == "dim") cfg.model.dim = parse_u64(path, value);
      else if (key == "heads") cfg.model.heads = parse_u64(path, value);
      else if (key == "mlp_ratio") cfg.model.mlp_ratio = parse_u64(path, value);
      else if (key == "grid") cfg.grid_check = parse_u64(path, value);
      else if (key == "sampler_mode") {
        if (value == "uniform") cfg.model.sampler.mode = SamplerConfig::Mode::Uniform;
        else if (value == "fixed") cfg.model.sampler.mode = SamplerConfig::Mode::Fixed;
        else fail("config", path + ": expected uniform or fixed, got '" + value + "'");
      } else if (key == "sampler_min") cfg.model.sampler.lo = parse_u64(path, value);
      else if (key == "sampler_max") cfg.model.sampler.hi = parse_u64(path, value);
      else if (key == "sampler_fixed") cfg.model.sampler.fixed = parse_u64(path, value);
      else if (key == "precision") cfg.model.precision = precision_from_string(value);
      else fail("config", "unknown key " + path);
    } else if (section == "protocol") {
      if (key == "mode") {
        cfg.protocol.mode = mode_from_string(value);
        cfg.mode_set = true;
      } else if (key == "rounds") cfg.protocol.rounds = parse_u64(path, value);
      else if (key == "r_uni") cfg.protocol.unify_every = parse_u64(path, value);
      else if (key == "batch") cfg.protocol.batch_size = parse_u64(path, value);
      else if (key == "lr") cfg.protocol.lr = parse_double(path, value);
      else if (key == "weight_decay") cfg.protocol.weight_decay = parse_double(path, value);
      else if (key == "visit_order") {
        if (value == "ascending") cfg.protocol.visit_order = VisitOrder::Ascending;
        else if (value == "shuffled") cfg.protocol.visit_order = VisitOrder::Shuffled;
        else fail("config", path + ": expected ascending or shuffled, got '" + value + "'");
      } else if (key == "scheduler") {
        if (value == "strict") cfg.protocol.scheduler = SchedulerKind::Strict;
        else if (value == "concurrent") cfg.protocol.scheduler = SchedulerKind::Concurrent;
        else fail("config", path + ": expected strict or concurrent, got '" + value + "'");
      } else if (key == "encoder_divisor") {
        if (value == "contributors") cfg.protocol.encoder_divisor = EncoderDivisor::Contributors;
        else if (value == "clients") cfg.protocol.encoder_divisor = EncoderDivisor::ClientCount;
        else fail("config", path + ": expected contributors or clients, got '" + value + "'");
      } else if (key == "reset_moments") {
        cfg.protocol.reset_moments_on_unify = parse_bool(path, value);
      } else fail("config", "unknown key " + path);
    } else if (section == "data") {
      if (key == "domains") cfg.data.domains = parse_u64(path, value);
      else if (key == "target") cfg.data.target = parse_int(path, value);
      else if (key == "amplitude") cfg.data.amplitude = parse_double(path, value);
      else if (key == "noise") cfg.data.noise = parse_double(path, value);
      else if (key == "style_strength") cfg.data.style_strength = parse_double(path, value);
      else if (key == "bonafide") cfg.data.bonafide = parse_u64(path, value);
      else if (key == "print") cfg.data.print_attacks = parse_u64(path, value);
      else if (key == "replay") cfg.data.replay_attacks = parse_u64(path, value);
      else if (key == "group_size") cfg.data.group_size = parse_u64(path, value);
      else if (key == "split_attacks") cfg.data.split_attacks = parse_bool(path, value);
      else if (key == "path") cfg.data.path = value;
      else fail("config", "unknown key " + path);
    } else if (section == "eval") {
      if (key == "fpr_target") cfg.eval.fpr_target = parse_double(path, value);
      else if (key == "hter_policy") cfg.eval.hter_policy = value;
      else if (key == "inference") cfg.eval.inference = value;
      else if (key == "batch") cfg.eval.batch = parse_u64(path, value);
      else if (key == "dump_features") cfg.eval.dump_features = parse_bool(path, value);
      else fail("config", "unknown key " + path);
    } else {
      fail("config", "unknown section [" + section + "]");
    }
  };

  std::string section = "run";
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        fail("config", "line " + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail("config", "line " + std::to_string(line_no) + ": expected key = value");
    }
    apply(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    const std::size_t dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      fail("config", "override '" + ov + "' must be section.key=value");
    }
    apply(trim(ov.substr(0, dot)), trim(ov.substr(dot + 1, eq - dot - 1)),
          trim(ov.substr(eq + 1)));
  }
  return cfg;
}

void ExperimentConfig::finalize() {
  if (!mode_set) fail("config", "protocol.mode is required");
  if (data.path.empty() && data.target < 0) fail("config", "data.target is required");
  if (backend == "serial") {
    kern::set_backend(kern::Backend::Serial);
  } else {
    kern::set_backend(kern::Backend::Omp);
  }
  kern::set_threads(threads);
  model.validate();
  protocol.validate();
  if (grid_check.has_value() && *grid_check != model.grid_h()) {
    fail("config", "model.grid = " + std::to_string(*grid_check) +
                       " but the stride plan yields " + std::to_string(model.grid_h()));
  }
  if (data.domains < 2 && data.path.empty()) {
    fail("config", "data.domains must be >= 2 for leave-one-out");
  }
}

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  os << "[run]\n";
  os << "name = " << run_name << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\n";
  os << "outdir = " << outdir << "\n";
  os << "backend = " << backend << "\n";
  os << "threads = " << threads << "\n\n";

  os << "[model]\n";
  os << "image_h = " << model.image_h << "\n";
  os << "image_w = " << model.image_w << "\n";
  os << "image_c = " << model.image_c << "\n";
  os << "tok_c1 = " << model.tok_c1 << "\n";
  os << "tok_c2 = " << model.tok_c2 << "\n";
  os << "tok_kernel = " << model.tok_kernel << "\n";
  os << "tok_stride1 = " << model.tok_stride1 << "\n";
  os << "tok_stride2 = " << model.tok_stride2 << "\n";
  os << "depth = " << model.depth << "\n";
  os << "dim = " << model.dim << "\n";
  os << "heads = " << model.heads << "\n";
  os << "mlp_ratio = " << model.mlp_ratio << "\n";
  os << "grid = " << model.grid_h() << "\n";
  os << "sampler_mode = "
     << (model.sampler.mode == SamplerConfig::Mode::Uniform ? "uniform" : "fixed") << "\n";
  os << "sampler_min = " << model.sampler.lo << "\n";
  os << "sampler_max = " << model.sampler.hi << "\n";
  os << "sampler_fixed = " << model.sampler.fixed << "\n";
  os << "precision = " << to_string(model.precision) << "\n\n";

  os << "[protocol]\n";
  os << "mode = " << to_string(protocol.mode) << "\n";
  os << "rounds = " << protocol.rounds << "\n";
  os << "r_uni = " << protocol.unify_every << "\n";
  os << "batch = " << protocol.batch_size << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", protocol.lr);
  os << "lr = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.12g", protocol.weight_decay);
  os << "weight_decay = " << buf << "\n";
  os << "visit_order = "
     << (protocol.visit_order == VisitOrder::Ascending ? "ascending" : "shuffled") << "\n";
  os << "scheduler = "
     << (protocol.scheduler == SchedulerKind::Strict ? "strict" : "concurrent") << "\n";
  os << "encoder_divisor = "
     << (protocol.encoder_divisor == EncoderDivisor::Contributors ? "contributors" : "clients")
     << "\n";
  os << "reset_moments = " << (protocol.reset_moments_on_unify ? "true" : "false") << "\n\n";

  os << "[data]\n";
  os << "domains = " << data.domains << "\n";
  os << "target = " << data.target << "\n";
  std::snprintf(buf, sizeof(buf), "%.12g", data.amplitude);
  os << "amplitude = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.12g", data.noise);
  os << "noise = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.12g", data.style_strength);
  os << "style_strength = " << buf << "\n";
  os << "bonafide = " << data.bonafide << "\n";
  os << "print = " << data.print_attacks << "\n";
  os << "replay = " << data.replay_attacks << "\n";
  os << "group_size = " << data.group_size << "\n";
  os << "split_attacks = " << (data.split_attacks ? "true" : "false") << "\n";
  if (!data.path.empty()) os << "path = " << data.path << "\n";
  os << "\n";

  os << "[eval]\n";
  std::snprintf(buf, sizeof(buf), "%.12g", eval.fpr_target);
  os << "fpr_target = " << buf << "\n";
  os << "hter_policy = " << eval.hter_policy << "\n";
  os << "inference = " << eval.inference << "\n";
  os << "batch = " << eval.batch << "\n";
  os << "dump_features = " << (eval.dump_features ? "true" : "false") << "\n";
  return os.str();
}

std::vector<DomainDataset> ExperimentConfig::build_domains(uint64_t seed) const {
  if (!data.path.empty()) return load_dataset(data.path);
  GeneratorConfig gen;
  gen.image_h = model.image_h;
  gen.image_w = model.image_w;
  gen.image_c = model.image_c;
  gen.class_amplitude = data.amplitude;
  std::vector<DomainSpec> specs =
      make_domain_specs(data.domains, data.style_strength, data.noise, data.bonafide,
                        data.print_attacks, data.replay_attacks, data.group_size);
  std::vector<DomainDataset> out;
  out.reserve(specs.size());
  for (const DomainSpec& s : specs) out.push_back(generate(s, gen, seed));
  return out;
}

PartitionPlan ExperimentConfig::build_partition(const std::vector<DomainDataset>& domains) const {
  PartitionPlan plan = leave_one_out(domains, static_cast<uint16_t>(data.target));
  if (data.split_attacks) plan = split_by_attack(plan);
  return plan;
}

}  // namespace fedsis
