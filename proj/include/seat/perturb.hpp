#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seat/metrics.hpp"
#include "seat/model.hpp"
#include "seat/seat.hpp"

namespace seat {

enum class PerturbKind { embedding, word };

struct PerturbSpec {
  PerturbKind kind = PerturbKind::embedding;
  double delta_x = 1e-3;       // per-coordinate Gaussian variance
  bool all_positions = false;  // default perturbs one uniformly chosen token
  int word_n = 1;              // substituted positions for word perturbation
};

// Adds N(0, delta_x I) noise to one row (or all rows) of the embedded input.
Mat embedding_perturb(const Mat& xe, double delta_x, bool all_positions, Prng& rng);

struct StabilityRow {
  int example_id = 0;
  double jsd = 0.0;
  double tvd = 0.0;
};

struct StabilityEval {
  MetricReport report;
  std::vector<StabilityRow> rows;
};

// Per test example: JSD between clean and perturbed attention, TVD between
// clean and perturbed prediction; F1 on the clean set. One PRNG stream per
// example id, so methods see identical perturbations.
StabilityEval eval_stability(const AttentionModel& model, const AttentionScorer& scorer,
                             std::span<const Example> test, const PerturbSpec& spec,
                             std::uint64_t seed);

struct SeedStudyRow {
  int example_id = 0;
  int label = 0;
  double max_attention = 0.0;  // max clean attention under the reference model
  int bin = 0;                 // quartile of max_attention over the test set
  double max_jsd = 0.0;        // worst JSD against the other seeds' attention
};

struct SeedStudyTrainer {
  bool use_seat = false;
  int hidden = 32;
  ScorerKind kind = ScorerKind::additive;
  int max_len = 64;
  TrainConfig base_cfg;
  SeatConfig seat_cfg;
};

// Trains one model per seed (base, plus the replacement scorer when
// use_seat), takes the first seed's model as reference, and reports each test
// example's worst attention JSD across the remaining seeds.
std::vector<SeedStudyRow> seed_study(const Dataset& data, const Vocabulary& vocab,
                                     const EmbeddingTable& table,
                                     std::span<const std::uint64_t> seeds,
                                     const SeedStudyTrainer& trainer);

struct AblationToggles {
  bool use_stability = true;  // lambda1 zeroed when false
  bool use_topk = true;       // lambda2 zeroed when false
};

struct AblationResult {
  MetricReport report;      // embedding-noise stability at the probe variance
  SeatCertificate cert;
  double final_overlap = 0.0;
};

// Retrains the replacement scorer with the toggled objective and evaluates
// stability at probe_delta_x. Both toggles off degenerates to the base
// scorer (the remaining closeness term has zero gradient at the start).
AblationResult ablation_run(const AttentionModel& base, const Dataset& data,
                            const AblationToggles& toggles, const SeatConfig& cfg,
                            double probe_delta_x, std::uint64_t seed);

}  // namespace seat
