#include "seat/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seat/errors.hpp"
#include "seat/prng.hpp"

namespace seat {

Mat embedding_perturb(const Mat& xe, double delta_x, bool all_positions, Prng& rng) {
  if (delta_x < 0.0) throw std::invalid_argument("embedding_perturb: negative variance");
  Mat out = xe;
  double sd = std::sqrt(delta_x);
  if (all_positions) {
    for (double& v : out.a) v += sd * rng.normal();
    return out;
  }
  int t = static_cast<int>(rng.below(xe.rows));
  for (int j = 0; j < xe.cols; ++j) out(t, j) += sd * rng.normal();
  return out;
}

StabilityEval eval_stability(const AttentionModel& model, const AttentionScorer& scorer,
                             std::span<const Example> test, const PerturbSpec& spec,
                             std::uint64_t seed) {
  if (test.empty()) throw std::invalid_argument("eval_stability: no examples");

  StabilityEval out;
  out.rows.reserve(test.size());
  std::vector<int> pred, label;
  pred.reserve(test.size());
  label.reserve(test.size());

  Vec jsds, tvds;
  jsds.reserve(test.size());
  tvds.reserve(test.size());

  const char* stream =
      spec.kind == PerturbKind::embedding ? "stability-embedding" : "stability-word";
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Example& x = test[i];
    ForwardResult clean = forward(model, scorer, x);

    Prng rng(seed, stream, i);
    ForwardResult pert;
    if (spec.kind == PerturbKind::embedding) {
      Mat xe = embedding_perturb(clean.xe, spec.delta_x, spec.all_positions, rng);
      pert = forward_embedded(model, scorer, xe);
    } else {
      Example xp = perturb_words(x, spec.word_n, model.embeddings, rng);
      pert = forward(model, scorer, xp);
    }

    StabilityRow row;
    row.example_id = static_cast<int>(i);
    row.jsd = jsd(clean.w.values, pert.w.values);
    row.tvd = tvd(clean.y, pert.y);
    out.rows.push_back(row);
    jsds.push_back(row.jsd);
    tvds.push_back(row.tvd);

    pred.push_back(clean.y[0] >= 0.5 ? 1 : 0);
    label.push_back(x.label);
  }

  Aggregate ja = aggregate(jsds), ta = aggregate(tvds);
  out.report.jsd_mean = ja.mean;
  out.report.jsd_sum = ja.sum;
  out.report.tvd_mean = ta.mean;
  out.report.tvd_sum = ta.sum;
  out.report.f1 = f1_score(pred, label);
  out.report.n_examples = static_cast<long>(test.size());
  return out;
}

std::vector<SeedStudyRow> seed_study(const Dataset& data, const Vocabulary& vocab,
                                     const EmbeddingTable& table,
                                     std::span<const std::uint64_t> seeds,
                                     const SeedStudyTrainer& trainer) {
  if (seeds.size() < 2) throw std::invalid_argument("seed_study: need at least two seeds");
  if (data.test.empty()) throw std::invalid_argument("seed_study: no test examples");

  struct Trained {
    AttentionModel model;
    AttentionScorer scorer;
  };
  std::vector<Trained> models;
  models.reserve(seeds.size());
  for (std::uint64_t s : seeds) {
    AttentionModel init =
        init_model(vocab, table, trainer.hidden, trainer.kind, trainer.max_len, s);
    AttentionModel base = train_base(data, init, trainer.base_cfg, s);
    AttentionScorer sc = base.scorer;
    if (trainer.use_seat) sc = train_seat(base, data, trainer.seat_cfg, s).scorer;
    models.push_back({std::move(base), std::move(sc)});
  }

  std::vector<SeedStudyRow> rows;
  rows.reserve(data.test.size());
  Vec max_attn;
  max_attn.reserve(data.test.size());
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const Example& x = data.test[i];
    Vec w_ref = forward(models[0].model, models[0].scorer, x).w.values;

    double worst = 0.0;
    for (std::size_t mi = 1; mi < models.size(); ++mi) {
      Vec w = forward(models[mi].model, models[mi].scorer, x).w.values;
      worst = std::max(worst, jsd(w_ref, w));
    }
    SeedStudyRow row;
    row.example_id = static_cast<int>(i);
    row.label = x.label;
    row.max_attention = *std::max_element(w_ref.begin(), w_ref.end());
    row.max_jsd = worst;
    rows.push_back(row);
    max_attn.push_back(row.max_attention);
  }

  // quartile bins of the reference model's attention peak
  Vec sorted = max_attn;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double f) {
    std::size_t i = static_cast<std::size_t>(f * static_cast<double>(sorted.size()));
    i = std::min(i, sorted.size() - 1);
    return sorted[i];
  };
  double q1 = quantile(0.25), q2 = quantile(0.5), q3 = quantile(0.75);
  for (auto& row : rows) {
    int bin = 0;
    if (row.max_attention >= q1) bin = 1;
    if (row.max_attention >= q2) bin = 2;
    if (row.max_attention >= q3) bin = 3;
    row.bin = bin;
  }
  return rows;
}

AblationResult ablation_run(const AttentionModel& base, const Dataset& data,
                            const AblationToggles& toggles, const SeatConfig& cfg,
                            double probe_delta_x, std::uint64_t seed) {
  SeatConfig run_cfg = cfg;
  if (!toggles.use_stability) run_cfg.lambda1 = 0.0;
  if (!toggles.use_topk) run_cfg.lambda2 = 0.0;

  SeatScorer tilde = train_seat(base, data, run_cfg, seed);

  PerturbSpec spec;
  spec.kind = PerturbKind::embedding;
  spec.delta_x = probe_delta_x;

  AblationResult out;
  out.report = eval_stability(base, tilde.scorer, data.test, spec, seed).report;
  out.cert = certify(base, tilde.scorer, data.test, cfg.k, cfg.radius, cfg.norm, CertifyConfig{});
  out.final_overlap = mean_topk_overlap(base, tilde.scorer, data.test, cfg.k);
  return out;
}

}  // namespace seat
