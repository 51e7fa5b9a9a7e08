#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seat/model.hpp"

namespace seat {

enum class BallNorm { l2, linf };

struct SeatConfig {
  double lambda1 = 1.0;    // stability weight
  double lambda2 = 1000.0; // top-k surrogate weight
  int k = 7;
  double radius = 0.1;
  BallNorm norm = BallNorm::l2;
  int inner_steps = 10;      // PGD steps per batch
  double alpha = 0.0;        // PGD step size; 0 means 2*radius/inner_steps
  int epochs = 100;
  double eta = 0.001;        // outer SGD step
  double eta_decay = 2.0;    // eta_t = eta / (1 + eta_decay * epoch)
  int batch = 32;
  bool algorithm1_signs = false;   // reproduce the printed update verbatim
  bool simplex_reproject = false;  // project w~+delta back onto the simplex

  double pgd_alpha() const { return alpha > 0.0 ? alpha : 2.0 * radius / std::max(1, inner_steps); }
};

// Indices of the k largest entries; ties break toward the lower index.
std::vector<int> topk_indices(std::span<const double> v, int k);

// |topk(a) n topk(b)| / k
double topk_overlap(std::span<const double> a, std::span<const double> b, int k);

// (1/2k) (||w_S - w~_S||_1 + ||w~_T - w_T||_1), S = topk(w), T = topk(w~)
double topk_surrogate(std::span<const double> w, std::span<const double> wt, int k);

// subgradient w.r.t. wt with both index sets frozen; sign(0) = 0
Vec topk_surrogate_subgrad(std::span<const double> w, std::span<const double> wt, int k);

// Euclidean projection onto the norm ball of the given radius; idempotent.
void project(std::span<double> delta, double radius, BallNorm norm);

// Shared per-batch perturbation over padded length; each example reads its
// own prefix.
struct Perturbation {
  Vec delta;
  double radius = 0.0;
  BallNorm norm = BallNorm::l2;
};

// Ascent on the batch-mean stability term, projected after every step.
Perturbation pgd_inner(const AttentionModel& model, const AttentionScorer& tilde,
                       std::span<const ExampleCache> batch, const SeatConfig& cfg);

struct ObjectiveParts {
  double total = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double ltopk = 0.0;
};

// Batch-mean objective D1 + lambda1*D2 + lambda2*L_topk at a given delta.
ObjectiveParts seat_objective(const AttentionModel& model, const AttentionScorer& tilde,
                              std::span<const ExampleCache> batch, std::span<const double> delta,
                              const SeatConfig& cfg);

struct SeatProvenance {
  std::string base_hash;  // content hash of the base checkpoint, empty if untracked
  std::uint64_t seed = 0;
  SeatConfig config;
};

struct SeatScorer {
  AttentionScorer scorer;
  SeatProvenance provenance;
};

struct SeatTrainLog {
  std::vector<double> epoch_d1, epoch_d2, epoch_ltopk;
  std::vector<double> epoch_overlap_test;
};

// Alternating inner-PGD / outer-SGD on a copy of the base scorer; the
// embedding, encoder and decoder stay frozen throughout.
SeatScorer train_seat(const AttentionModel& base, const Dataset& data, const SeatConfig& cfg,
                      std::uint64_t seed, SeatTrainLog* log = nullptr);

// Random-perturbation baseline: delta drawn uniformly in the ball, objective
// is clean label loss plus perturbed label loss.
AttentionScorer train_attention_rp(const AttentionModel& base, const Dataset& data,
                                   const SeatConfig& cfg, std::uint64_t seed);

// Adversarial-training baseline: inner PGD maximizes label loss, outer step
// descends clean plus lambda1-weighted adversarial label loss.
AttentionScorer train_attention_at(const AttentionModel& base, const Dataset& data,
                                   const SeatConfig& cfg, std::uint64_t seed);

// Mean top-k overlap between the base scorer's and tilde's attention.
double mean_topk_overlap(const AttentionModel& base, const AttentionScorer& tilde,
                         std::span<const Example> examples, int k);

// w~ + delta over the active prefix; optionally projected back to the simplex.
Vec apply_delta(std::span<const double> w, std::span<const double> delta, bool simplex_reproject);

}  // namespace seat
