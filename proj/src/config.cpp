#include "seat/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "seat/checkpoint.hpp"
#include "seat/errors.hpp"

namespace seat {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(key, item));
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

}  // namespace

RunConfig RunConfig::from_defaults() { return RunConfig{}; }

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

void RunConfig::apply_overrides(const std::vector<std::string>& kvs) {
  for (const auto& kv : kvs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  validate();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    seed = to_u64(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else if (key == "data.source") {
    if (value != "synthetic" && value != "files")
      throw ConfigError("config: data.source must be synthetic or files");
    data_source = value;
  } else if (key == "data.embeddings") {
    embeddings_path = value;
  } else if (key == "data.dataset") {
    dataset_path = value;
  } else if (key == "syn.vocab") {
    syn.vocab_size = static_cast<int>(to_long(key, value));
  } else if (key == "syn.dim") {
    syn.dim = static_cast<int>(to_long(key, value));
  } else if (key == "syn.train") {
    syn.train_count = static_cast<int>(to_long(key, value));
  } else if (key == "syn.test") {
    syn.test_count = static_cast<int>(to_long(key, value));
  } else if (key == "syn.min_len") {
    syn.min_len = static_cast<int>(to_long(key, value));
  } else if (key == "syn.max_len") {
    syn.max_len = static_cast<int>(to_long(key, value));
  } else if (key == "syn.pos_keywords") {
    syn.pos_keywords = static_cast<int>(to_long(key, value));
  } else if (key == "syn.neg_keywords") {
    syn.neg_keywords = static_cast<int>(to_long(key, value));
  } else if (key == "syn.max_keywords") {
    syn.max_keywords_per_sentence = static_cast<int>(to_long(key, value));
  } else if (key == "syn.kw_sep") {
    syn.kw_sep = to_double(key, value);
  } else if (key == "syn.dist_sep") {
    syn.dist_sep = to_double(key, value);
  } else if (key == "model.hidden") {
    model_hidden = static_cast<int>(to_long(key, value));
  } else if (key == "model.scorer") {
    if (value == "additive")
      scorer_kind = ScorerKind::additive;
    else if (value == "scaled_dot")
      scorer_kind = ScorerKind::scaled_dot;
    else
      throw ConfigError("config: model.scorer must be additive or scaled_dot");
  } else if (key == "model.max_len") {
    model_max_len = static_cast<int>(to_long(key, value));
  } else if (key == "train.lr") {
    train.lr = to_double(key, value);
  } else if (key == "train.epochs") {
    train.epochs = static_cast<int>(to_long(key, value));
  } else if (key == "train.batch") {
    train.batch = static_cast<int>(to_long(key, value));
  } else if (key == "train.beta1") {
    train.beta1 = to_double(key, value);
  } else if (key == "train.beta2") {
    train.beta2 = to_double(key, value);
  } else if (key == "train.eps") {
    train.eps = to_double(key, value);
  } else if (key == "seat.lambda1") {
    seat.lambda1 = to_double(key, value);
  } else if (key == "seat.lambda2") {
    seat.lambda2 = to_double(key, value);
  } else if (key == "seat.k") {
    seat.k = static_cast<int>(to_long(key, value));
  } else if (key == "seat.radius") {
    seat.radius = to_double(key, value);
  } else if (key == "seat.norm") {
    if (value == "l2")
      seat.norm = BallNorm::l2;
    else if (value == "linf")
      seat.norm = BallNorm::linf;
    else
      throw ConfigError("config: seat.norm must be l2 or linf");
  } else if (key == "seat.inner_steps") {
    seat.inner_steps = static_cast<int>(to_long(key, value));
  } else if (key == "seat.alpha") {
    seat.alpha = to_double(key, value);
  } else if (key == "seat.epochs") {
    seat.epochs = static_cast<int>(to_long(key, value));
  } else if (key == "seat.eta") {
    seat.eta = to_double(key, value);
  } else if (key == "seat.eta_decay") {
    seat.eta_decay = to_double(key, value);
  } else if (key == "seat.batch") {
    seat.batch = static_cast<int>(to_long(key, value));
  } else if (key == "seat.algorithm1_signs") {
    seat.algorithm1_signs = to_bool(key, value);
  } else if (key == "seat.simplex_reproject") {
    seat.simplex_reproject = to_bool(key, value);
  } else if (key == "metrics.rationale_k") {
    rationale_k = static_cast<int>(to_long(key, value));
  } else if (key == "metrics.sens_sizes") {
    sens.sizes = to_double_list(key, value);
  } else if (key == "metrics.sens_pgd_steps") {
    sens.pgd_steps = static_cast<int>(to_long(key, value));
  } else if (key == "metrics.sens_eps_max") {
    sens.eps_max = to_double(key, value);
  } else if (key == "metrics.sens_tol") {
    sens.tol_rel = to_double(key, value);
  } else if (key == "metrics.sens_tol_abs") {
    sens.tol_abs = to_double(key, value);
  } else if (key == "metrics.sens_sample") {
    sens_sample = static_cast<int>(to_long(key, value));
  } else if (key == "metrics.interp_sample") {
    interp_sample = static_cast<int>(to_long(key, value));
  } else if (key == "perturb.delta_x") {
    perturb_delta_x = to_double(key, value);
  } else if (key == "perturb.sweep") {
    if (value == "none")
      perturb_sweep.clear();
    else
      perturb_sweep = to_double_list(key, value);
  } else if (key == "perturb.positions") {
    if (value == "one")
      perturb_all_positions = false;
    else if (value == "all")
      perturb_all_positions = true;
    else
      throw ConfigError("config: perturb.positions must be one or all");
  } else if (key == "perturb.word_n") {
    perturb_word_n = static_cast<int>(to_long(key, value));
  } else if (key == "perturb.seeds") {
    study_seeds = static_cast<int>(to_long(key, value));
  } else if (key == "certify.pgd_steps") {
    certify_pgd_steps = static_cast<int>(to_long(key, value));
  } else if (key == "ablation.delta_x") {
    ablation_delta_x = to_double(key, value);
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (data_source == "files" && (embeddings_path.empty() || dataset_path.empty()))
    throw ConfigError("config: data.source=files needs data.embeddings and data.dataset");
  if (model_hidden < 1) throw ConfigError("config: model.hidden must be positive");
  if (model_max_len < 1) throw ConfigError("config: model.max_len must be positive");
  if (syn.train_count < 1 || syn.test_count < 1)
    throw ConfigError("config: synthetic split sizes must be positive");
  if (syn.vocab_size < 4 || syn.dim < 1)
    throw ConfigError("config: synthetic vocab/dim too small");
  if (syn.min_len < 1 || syn.max_len < syn.min_len)
    throw ConfigError("config: bad syn length range");
  if (syn.max_len > model_max_len)
    throw ConfigError("config: syn.max_len exceeds model.max_len");
  if (train.lr <= 0.0 || train.epochs < 0 || train.batch < 1)
    throw ConfigError("config: bad base training settings");
  if (seat.k < 1) throw ConfigError("config: seat.k must be positive");
  if (seat.radius < 0.0) throw ConfigError("config: seat.radius must be non-negative");
  if (seat.epochs < 0 || seat.batch < 1 || seat.eta <= 0.0 || seat.inner_steps < 0)
    throw ConfigError("config: bad seat training settings");
  if (seat.lambda1 < 0.0 || seat.lambda2 < 0.0)
    throw ConfigError("config: seat lambdas must be non-negative");
  if (rationale_k < 1) throw ConfigError("config: metrics.rationale_k must be positive");
  if (sens.pgd_steps < 1 || sens.eps_max <= 0.0 || sens.tol_rel <= 0.0 || sens.tol_abs <= 0.0)
    throw ConfigError("config: bad sensitivity settings");
  if (!std::is_sorted(sens.sizes.begin(), sens.sizes.end()))
    throw ConfigError("config: metrics.sens_sizes must be ascending");
  for (double f : sens.sizes)
    if (f <= 0.0 || f > 1.0) throw ConfigError("config: sensitivity sizes must be in (0, 1]");
  if (sens_sample < 0 || interp_sample < 0)
    throw ConfigError("config: sample sizes must be non-negative");
  if (perturb_delta_x < 0.0) throw ConfigError("config: perturb.delta_x must be non-negative");
  for (double dx : perturb_sweep)
    if (dx <= 0.0) throw ConfigError("config: perturb.sweep radii must be positive");
  if (perturb_word_n < 0) throw ConfigError("config: perturb.word_n must be non-negative");
  if (study_seeds < 2) throw ConfigError("config: perturb.seeds must be at least 2");
  if (certify_pgd_steps < 0) throw ConfigError("config: certify.pgd_steps must be non-negative");
  if (ablation_delta_x < 0.0) throw ConfigError("config: ablation.delta_x must be non-negative");
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = out_dir;
  kv["data.source"] = data_source;
  kv["data.embeddings"] = embeddings_path;
  kv["data.dataset"] = dataset_path;
  kv["syn.vocab"] = std::to_string(syn.vocab_size);
  kv["syn.dim"] = std::to_string(syn.dim);
  kv["syn.train"] = std::to_string(syn.train_count);
  kv["syn.test"] = std::to_string(syn.test_count);
  kv["syn.min_len"] = std::to_string(syn.min_len);
  kv["syn.max_len"] = std::to_string(syn.max_len);
  kv["syn.pos_keywords"] = std::to_string(syn.pos_keywords);
  kv["syn.neg_keywords"] = std::to_string(syn.neg_keywords);
  kv["syn.max_keywords"] = std::to_string(syn.max_keywords_per_sentence);
  kv["syn.kw_sep"] = fmt(syn.kw_sep);
  kv["syn.dist_sep"] = fmt(syn.dist_sep);
  kv["model.hidden"] = std::to_string(model_hidden);
  kv["model.scorer"] = scorer_kind == ScorerKind::additive ? "additive" : "scaled_dot";
  kv["model.max_len"] = std::to_string(model_max_len);
  kv["train.lr"] = fmt(train.lr);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.batch"] = std::to_string(train.batch);
  kv["train.beta1"] = fmt(train.beta1);
  kv["train.beta2"] = fmt(train.beta2);
  kv["train.eps"] = fmt(train.eps);
  kv["seat.lambda1"] = fmt(seat.lambda1);
  kv["seat.lambda2"] = fmt(seat.lambda2);
  kv["seat.k"] = std::to_string(seat.k);
  kv["seat.radius"] = fmt(seat.radius);
  kv["seat.norm"] = seat.norm == BallNorm::l2 ? "l2" : "linf";
  kv["seat.inner_steps"] = std::to_string(seat.inner_steps);
  kv["seat.alpha"] = fmt(seat.alpha);
  kv["seat.epochs"] = std::to_string(seat.epochs);
  kv["seat.eta"] = fmt(seat.eta);
  kv["seat.eta_decay"] = fmt(seat.eta_decay);
  kv["seat.batch"] = std::to_string(seat.batch);
  kv["seat.algorithm1_signs"] = seat.algorithm1_signs ? "true" : "false";
  kv["seat.simplex_reproject"] = seat.simplex_reproject ? "true" : "false";
  kv["metrics.rationale_k"] = std::to_string(rationale_k);
  {
    std::string sizes;
    for (std::size_t i = 0; i < sens.sizes.size(); ++i) {
      if (i) sizes += ',';
      sizes += fmt(sens.sizes[i]);
    }
    kv["metrics.sens_sizes"] = sizes;
  }
  kv["metrics.sens_pgd_steps"] = std::to_string(sens.pgd_steps);
  kv["metrics.sens_eps_max"] = fmt(sens.eps_max);
  kv["metrics.sens_tol"] = fmt(sens.tol_rel);
  kv["metrics.sens_tol_abs"] = fmt(sens.tol_abs);
  kv["metrics.sens_sample"] = std::to_string(sens_sample);
  kv["metrics.interp_sample"] = std::to_string(interp_sample);
  kv["perturb.delta_x"] = fmt(perturb_delta_x);
  {
    std::string sweep;
    for (std::size_t i = 0; i < perturb_sweep.size(); ++i) {
      if (i) sweep += ',';
      sweep += fmt(perturb_sweep[i]);
    }
    kv["perturb.sweep"] = sweep.empty() ? "none" : sweep;
  }
  kv["perturb.positions"] = perturb_all_positions ? "all" : "one";
  kv["perturb.word_n"] = std::to_string(perturb_word_n);
  kv["perturb.seeds"] = std::to_string(study_seeds);
  kv["certify.pgd_steps"] = std::to_string(certify_pgd_steps);
  kv["ablation.delta_x"] = fmt(ablation_delta_x);

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::string RunConfig::hash() const { return bytes_hash(canonical()); }

}  // namespace seat
