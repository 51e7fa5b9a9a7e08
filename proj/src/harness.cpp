#include "seat/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <numeric>
#include <span>
#include <utility>

#include "json.hpp"

#include "seat/checkpoint.hpp"
#include "seat/errors.hpp"
#include "seat/metrics.hpp"
#include "seat/perturb.hpp"
#include "seat/prng.hpp"

namespace seat {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt_radius(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

RunManifest new_manifest(const RunConfig& cfg, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.config_hash = cfg.hash();
  m.config_snapshot = cfg.canonical();
  return m;
}

void record_input(RunManifest& m, const std::string& path) { m.inputs[path] = file_hash(path); }
void record_output(RunManifest& m, const std::string& path) { m.outputs[path] = file_hash(path); }

// manifest goes last so it can vouch for everything else
void finish(RunManifest& m, const RunPaths& paths, const Timer& timer) {
  m.wall_seconds = timer.seconds();
  write_manifest(paths.manifest(m.command), m);
}

LoadedData obtain_data_recorded(const RunConfig& cfg, RunManifest& m) {
  if (cfg.data_source == "files") {
    record_input(m, cfg.embeddings_path);
    record_input(m, cfg.dataset_path);
  }
  return obtain_data(cfg);
}

AttentionModel load_base(const RunPaths& paths, RunManifest& m) {
  const std::string path = paths.model();
  if (!fs::exists(path))
    throw IoError("missing base checkpoint " + path + "; run train-base first");
  record_input(m, path);
  return load_model(path);
}

// A checkpoint written by train-base must still hash to what its manifest
// recorded; anything else means someone swapped the file underneath us.
void check_base_fresh(const RunPaths& paths) {
  const std::string mpath = paths.manifest("train-base");
  if (!fs::exists(mpath)) return;  // checkpoint may legitimately come from elsewhere
  RunManifest m = read_manifest(mpath);
  auto it = m.outputs.find(paths.model());
  if (it == m.outputs.end()) return;
  if (!fs::exists(paths.model()))
    throw IoError("missing base checkpoint " + paths.model() + "; run train-base first");
  if (file_hash(paths.model()) != it->second)
    throw ConfigError("base checkpoint " + paths.model() +
                      " does not match its training manifest; rerun train-base");
}

SeatScorer load_scorer_checked(const RunPaths& paths, const std::string& file, RunManifest& m) {
  if (!fs::exists(file)) throw IoError("missing checkpoint " + file);
  record_input(m, file);
  SeatScorer s = load_seat_scorer(file);
  if (!s.provenance.base_hash.empty() && fs::exists(paths.model()) &&
      s.provenance.base_hash != file_hash(paths.model()))
    throw ConfigError(file + " was trained against a different base checkpoint; retrain it");
  return s;
}

struct Method {
  std::string name;
  AttentionScorer scorer;
};

// vanilla and seat are mandatory; baselines join when their checkpoints exist
std::vector<Method> gather_methods(const AttentionModel& base, const RunPaths& paths,
                                   RunManifest& m) {
  std::vector<Method> out;
  out.push_back({"vanilla", base.scorer});
  out.push_back({"seat", load_scorer_checked(paths, paths.seat_scorer(), m).scorer});
  for (const char* name : {"attention-rp", "attention-at"}) {
    const std::string file = paths.baseline_scorer(name);
    if (fs::exists(file)) out.push_back({name, load_scorer_checked(paths, file, m).scorer});
  }
  return out;
}

std::vector<std::size_t> pick_subset(std::size_t n, int want, std::uint64_t seed,
                                     std::string_view label) {
  std::vector<std::size_t> idx;
  if (want <= 0 || static_cast<std::size_t>(want) >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  Prng rng(seed, label);
  idx = rng.sample_without_replacement(n, static_cast<std::size_t>(want));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double clean_f1(const AttentionModel& model, const AttentionScorer& scorer,
                std::span<const Example> test) {
  std::vector<int> pred(test.size()), label(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    ForwardResult f = forward(model, scorer, test[i]);
    pred[i] = f.y[0] >= 0.5 ? 1 : 0;
    label[i] = test[i].label;
  }
  return f1_score(pred, label);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void emit_stability(const RunConfig& cfg, const AttentionModel& base,
                    std::span<const Example> test, std::span<const Method> methods,
                    const RunPaths& paths, RunManifest& m, const std::string& suite,
                    const PerturbSpec& spec) {
  MetricReport vanilla_metrics, seat_metrics;
  for (const auto& method : methods) {
    StabilityEval ev = eval_stability(base, method.scorer, test, spec, cfg.seed);
    Report r;
    r.method = method.name;
    r.config_hash = m.config_hash;
    r.metrics = ev.report;
    const std::string rpath = paths.report(suite, method.name);
    write_report(rpath, r);
    record_output(m, rpath);
    const std::string cpath = paths.csv(suite, method.name);
    write_stability_csv(cpath, ev.rows);
    record_output(m, cpath);
    m.scalars[suite + "_jsd_mean_" + method.name] = ev.report.jsd_mean;
    m.scalars[suite + "_tvd_mean_" + method.name] = ev.report.tvd_mean;
    if (method.name == "vanilla") vanilla_metrics = ev.report;
    if (method.name == "seat") seat_metrics = ev.report;
  }
  const std::string cmp = paths.comparison(suite);
  write_comparison(cmp, make_comparison(suite, m.config_hash, seat_metrics, vanilla_metrics));
  record_output(m, cmp);
}

void eval_interpretability(const RunConfig& cfg, const AttentionModel& base, const Dataset& data,
                           std::span<const Method> methods, const RunPaths& paths,
                           RunManifest& m) {
  const auto interp_idx = pick_subset(data.test.size(), cfg.interp_sample, cfg.seed,
                                      "interp-sample");
  const auto sens_idx = pick_subset(data.test.size(), cfg.sens_sample, cfg.seed, "sens-sample");
  for (const auto& method : methods) {
    MetricReport r;
    r.f1 = clean_f1(base, method.scorer, data.test);
    double comp_sum = 0.0, suff_sum = 0.0;
    for (std::size_t i : interp_idx) {
      comp_sum += comprehensiveness(base, method.scorer, data.test[i], cfg.rationale_k);
      suff_sum += sufficiency(base, method.scorer, data.test[i], cfg.rationale_k);
    }
    if (!interp_idx.empty()) {
      r.comp = comp_sum / static_cast<double>(interp_idx.size());
      r.suff = suff_sum / static_cast<double>(interp_idx.size());
    }
    double auc_sum = 0.0;
    for (std::size_t i : sens_idx)
      auc_sum += sensitivity(base, method.scorer, data.test[i], cfg.sens).auc;
    if (!sens_idx.empty()) r.sens_auc = auc_sum / static_cast<double>(sens_idx.size());
    r.n_examples = static_cast<long>(data.test.size());

    Report rep;
    rep.method = method.name;
    rep.config_hash = m.config_hash;
    rep.metrics = r;
    const std::string rpath = paths.report("interpretability", method.name);
    write_report(rpath, rep);
    record_output(m, rpath);
    m.scalars["interpretability_f1_" + method.name] = r.f1;
    m.scalars["interpretability_sens_auc_" + method.name] = r.sens_auc;
  }
}

}  // namespace

LoadedData obtain_data(const RunConfig& cfg) {
  if (cfg.data_source == "synthetic") {
    SyntheticCorpus c = generate_synthetic(cfg.syn, cfg.seed);
    return {std::move(c.vocab), std::move(c.table), std::move(c.data)};
  }
  EmbeddedVocab ev = load_embeddings(cfg.embeddings_path);
  Dataset data = load_dataset(cfg.dataset_path, ev.vocab, cfg.model_max_len);
  return {std::move(ev.vocab), std::move(ev.table), std::move(data)};
}

void cmd_gen_data(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "gen-data");

  SyntheticCorpus corpus = generate_synthetic(cfg.syn, cfg.seed);
  const std::string emb = cfg.out_dir + "/synthetic_embeddings.txt";
  const std::string ds = cfg.out_dir + "/synthetic_dataset.jsonl";
  write_embeddings(emb, corpus.vocab, corpus.table);

  std::string lines;
  auto dump_split = [&](std::span<const Example> xs, const char* split) {
    for (const auto& x : xs) {
      std::string text;
      for (std::size_t i = 0; i < x.token_ids.size(); ++i) {
        if (i) text += ' ';
        text += corpus.vocab.id_to_token[static_cast<std::size_t>(x.token_ids[i])];
      }
      json j;
      j["text"] = text;
      j["label"] = x.label;
      j["split"] = split;
      lines += j.dump();
      lines += '\n';
    }
  };
  dump_split(corpus.data.train, "train");
  dump_split(corpus.data.test, "test");
  atomic_write(ds, lines);

  record_output(m, emb);
  record_output(m, ds);
  m.scalars["train_examples"] = static_cast<double>(corpus.data.train.size());
  m.scalars["test_examples"] = static_cast<double>(corpus.data.test.size());
  finish(m, paths, timer);
}

void cmd_train_base(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "train-base");

  LoadedData ld = obtain_data_recorded(cfg, m);
  AttentionModel init = init_model(ld.vocab, ld.table, cfg.model_hidden, cfg.scorer_kind,
                                   cfg.model_max_len, cfg.seed);
  init.frozen.embeddings = true;  // table comes from the corpus and stays fixed in every phase
  TrainLog log;
  AttentionModel trained = train_base(ld.data, init, cfg.train, cfg.seed, &log);
  save_model(paths.model(), trained);
  record_output(m, paths.model());
  m.series["epoch_loss"] = log.epoch_loss;
  m.scalars["final_f1"] = log.final_f1;
  if (!log.epoch_loss.empty()) m.scalars["final_train_loss"] = log.epoch_loss.back();
  finish(m, paths, timer);
}

void cmd_train_seat(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "train-seat");

  check_base_fresh(paths);
  AttentionModel base = load_base(paths, m);
  LoadedData ld = obtain_data_recorded(cfg, m);
  SeatTrainLog log;
  SeatScorer trained = train_seat(base, ld.data, cfg.seat, cfg.seed, &log);
  trained.provenance.base_hash = file_hash(paths.model());
  save_seat_scorer(paths.seat_scorer(), trained);
  record_output(m, paths.seat_scorer());
  m.series["epoch_d1"] = log.epoch_d1;
  m.series["epoch_d2"] = log.epoch_d2;
  m.series["epoch_ltopk"] = log.epoch_ltopk;
  m.series["epoch_overlap_test"] = log.epoch_overlap_test;
  if (!log.epoch_overlap_test.empty())
    m.scalars["final_overlap"] = log.epoch_overlap_test.back();
  finish(m, paths, timer);
}

void cmd_train_baseline(const RunConfig& cfg, const std::string& method) {
  std::string name;
  if (method == "rp")
    name = "attention-rp";
  else if (method == "at")
    name = "attention-at";
  else
    throw ConfigError("train-baseline: method must be rp or at, got '" + method + "'");

  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "train-baseline-" + method);

  check_base_fresh(paths);
  AttentionModel base = load_base(paths, m);
  LoadedData ld = obtain_data_recorded(cfg, m);
  AttentionScorer scorer = method == "rp" ? train_attention_rp(base, ld.data, cfg.seat, cfg.seed)
                                          : train_attention_at(base, ld.data, cfg.seat, cfg.seed);
  SeatScorer wrapped{std::move(scorer), {file_hash(paths.model()), cfg.seed, cfg.seat}};
  const std::string out = paths.baseline_scorer(name);
  save_seat_scorer(out, wrapped);
  record_output(m, out);
  m.scalars["final_overlap"] =
      mean_topk_overlap(base, wrapped.scorer, ld.data.test, cfg.seat.k);
  finish(m, paths, timer);
}

void cmd_eval(const RunConfig& cfg, const std::string& which) {
  if (which == "all") {
    for (const char* suite : {"stability-embedding", "stability-word", "interpretability",
                              "certify", "seed-study", "ablation"})
      cmd_eval(cfg, suite);
    return;
  }
  if (which == "certify") return cmd_certify(cfg);
  if (which == "ablation") return cmd_ablation(cfg);
  if (which == "seed-study") return cmd_seed_study(cfg);
  if (which != "stability-embedding" && which != "stability-word" &&
      which != "interpretability")
    throw ConfigError("eval: unknown suite '" + which + "'");

  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "eval-" + which);

  AttentionModel base = load_base(paths, m);
  LoadedData ld = obtain_data_recorded(cfg, m);
  std::vector<Method> methods = gather_methods(base, paths, m);

  if (which == "stability-embedding") {
    PerturbSpec spec;
    spec.kind = PerturbKind::embedding;
    spec.delta_x = cfg.perturb_delta_x;
    spec.all_positions = cfg.perturb_all_positions;
    emit_stability(cfg, base, ld.data.test, methods, paths, m, "stability-embedding", spec);
    for (double dx : cfg.perturb_sweep) {
      PerturbSpec sp = spec;
      sp.delta_x = dx;
      emit_stability(cfg, base, ld.data.test, methods, paths, m,
                     "stability-embedding-" + fmt_radius(dx), sp);
    }
  } else if (which == "stability-word") {
    PerturbSpec spec;
    spec.kind = PerturbKind::word;
    spec.word_n = cfg.perturb_word_n;
    emit_stability(cfg, base, ld.data.test, methods, paths, m, "stability-word", spec);
  } else {
    eval_interpretability(cfg, base, ld.data, methods, paths, m);
  }
  finish(m, paths, timer);
}

void cmd_certify(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "certify");

  AttentionModel base = load_base(paths, m);
  LoadedData ld = obtain_data_recorded(cfg, m);
  std::vector<Method> methods = gather_methods(base, paths, m);

  CertifyConfig ccfg;
  ccfg.pgd_steps = cfg.certify_pgd_steps;
  for (const auto& method : methods) {
    SeatCertificate cert = certify(base, method.scorer, ld.data.test, cfg.seat.k,
                                   cfg.seat.radius, cfg.seat.norm, ccfg);
    Report r;
    r.method = method.name;
    r.config_hash = m.config_hash;
    r.metrics.f1 = clean_f1(base, method.scorer, ld.data.test);
    r.metrics.n_examples = static_cast<long>(ld.data.test.size());
    r.certificate = cert;
    const std::string rpath = paths.report("certify", method.name);
    write_report(rpath, r);
    record_output(m, rpath);
    m.scalars["certify_gamma_" + method.name] = cert.gamma_hat;
    m.scalars["certify_beta_" + method.name] = cert.beta_hat;
    m.scalars["certify_alpha_" + method.name] = cert.alpha_hat;
  }
  finish(m, paths, timer);
}

void cmd_seed_study(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "seed-study");

  LoadedData ld = obtain_data_recorded(cfg, m);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.study_seeds));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = cfg.seed + i;

  for (bool use_seat : {false, true}) {
    SeedStudyTrainer trainer;
    trainer.use_seat = use_seat;
    trainer.hidden = cfg.model_hidden;
    trainer.kind = cfg.scorer_kind;
    trainer.max_len = cfg.model_max_len;
    trainer.base_cfg = cfg.train;
    trainer.seat_cfg = cfg.seat;
    const std::string name = use_seat ? "seat" : "vanilla";
    std::vector<SeedStudyRow> rows = seed_study(ld.data, ld.vocab, ld.table, seeds, trainer);

    const std::string cpath = paths.csv("seed-study", name);
    write_seed_study_csv(cpath, rows);
    record_output(m, cpath);

    std::vector<double> max_jsd(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) max_jsd[i] = rows[i].max_jsd;
    Aggregate a = aggregate(max_jsd);
    Report r;
    r.method = name;
    r.config_hash = m.config_hash;
    r.metrics.jsd_mean = a.mean;
    r.metrics.jsd_sum = a.sum;
    r.metrics.n_examples = static_cast<long>(rows.size());
    const std::string rpath = paths.report("seed-study", name);
    write_report(rpath, r);
    record_output(m, rpath);
    m.scalars["seed-study_median_max_jsd_" + name] = median(max_jsd);
  }
  finish(m, paths, timer);
}

void cmd_ablation(const RunConfig& cfg) {
  Timer timer;
  RunPaths paths{cfg.out_dir};
  ensure_dir(cfg.out_dir);
  RunManifest m = new_manifest(cfg, "ablation");

  AttentionModel base = load_base(paths, m);
  LoadedData ld = obtain_data_recorded(cfg, m);

  // the toggled runs are judged against vanilla stability at the same probe radius
  PerturbSpec probe;
  probe.kind = PerturbKind::embedding;
  probe.delta_x = cfg.ablation_delta_x;
  StabilityEval vanilla = eval_stability(base, base.scorer, ld.data.test, probe, cfg.seed);
  {
    Report r;
    r.method = "vanilla";
    r.config_hash = m.config_hash;
    r.metrics = vanilla.report;
    const std::string rpath = paths.report("ablation", "vanilla");
    write_report(rpath, r);
    record_output(m, rpath);
    m.scalars["ablation_tvd_mean_vanilla"] = vanilla.report.tvd_mean;
  }

  struct Combo {
    const char* name;
    AblationToggles toggles;
  };
  const Combo combos[] = {
      {"full", {true, true}},
      {"stability-only", {true, false}},
      {"topk-only", {false, true}},
      {"none", {false, false}},
  };
  for (const Combo& combo : combos) {
    AblationResult res =
        ablation_run(base, ld.data, combo.toggles, cfg.seat, cfg.ablation_delta_x, cfg.seed);
    Report r;
    r.method = combo.name;
    r.config_hash = m.config_hash;
    r.metrics = res.report;
    r.certificate = res.cert;
    const std::string rpath = paths.report("ablation", combo.name);
    write_report(rpath, r);
    record_output(m, rpath);
    m.scalars[std::string("ablation_tvd_mean_") + combo.name] = res.report.tvd_mean;
    m.scalars[std::string("ablation_overlap_") + combo.name] = res.final_overlap;
  }
  finish(m, paths, timer);
}

void run_full_pipeline(const RunConfig& cfg) {
  cmd_train_base(cfg);
  cmd_train_seat(cfg);
  cmd_train_baseline(cfg, "rp");
  cmd_train_baseline(cfg, "at");
  cmd_eval(cfg, "all");
}

std::vector<std::pair<std::string, std::string>> run_output_hashes(const std::string& out_dir) {
  if (!fs::is_directory(out_dir)) throw IoError("no such run directory " + out_dir);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("manifest_", 0) == 0) continue;  // carries wall-clock
    out.emplace_back(fs::relative(entry.path(), out_dir).string(),
                     file_hash(entry.path().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace seat
