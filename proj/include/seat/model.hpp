#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seat/corpus.hpp"
#include "seat/linalg.hpp"

namespace seat {

// h_t = tanh(W_xh^T x_t + W_hh^T h_{t-1} + b_h), h_0 = 0
struct EncoderParams {
  Mat w_xh;  // d x m
  Mat w_hh;  // m x m
  Vec b_h;   // m

  int hidden() const { return static_cast<int>(b_h.size()); }
};

enum class ScorerKind { additive, scaled_dot };

// additive:   phi_t = v . tanh(W1 h_t + W2 q)
// scaled_dot: phi_t = (h_t . q) / sqrt(m)
struct AttentionScorer {
  ScorerKind kind = ScorerKind::additive;
  Vec v;   // m (additive only)
  Mat w1;  // m x m (additive only)
  Mat w2;  // m x m (additive only)
  Vec q;   // m
};

// y = [p, 1-p], p = sigmoid(theta . h_w + bias); index 0 is class 1
struct DecoderParams {
  Vec theta;
  double bias = 0.0;
};

struct FrozenMask {
  bool embeddings = false;
  bool encoder = false;
  bool scorer = false;
  bool decoder = false;
};

struct AttentionModel {
  Vocabulary vocab;
  EmbeddingTable embeddings;
  EncoderParams encoder;
  AttentionScorer scorer;
  DecoderParams decoder;
  FrozenMask frozen;
  int max_len = 64;

  int dim() const { return embeddings.dim(); }
  int hidden() const { return encoder.hidden(); }
};

// Softmax outputs live on the simplex; perturbed weight vectors are carried
// with simplex=false and are never renormalized implicitly.
struct AttentionWeights {
  Vec values;
  bool simplex = true;
};

Mat embed_sequence(const EmbeddingTable& table, const Example& x);
// returns s x m hidden states; throws NumericError on non-finite values
Mat encode(const EncoderParams& enc, const Mat& xe);
Vec attend_scores(const AttentionScorer& scorer, const Mat& h);
// max-subtracted, exact simplex output
AttentionWeights softmax(std::span<const double> scores);
// weights may be off-simplex (perturbed); used as-is
Vec decode(const DecoderParams& dec, const Mat& h, std::span<const double> w);

struct ForwardResult {
  Mat xe;
  Mat h;
  Vec scores;
  AttentionWeights w;
  Vec y;
};

ForwardResult forward(const AttentionModel& model, const Example& x);
// same trunk, different scorer (replacement attention)
ForwardResult forward(const AttentionModel& model, const AttentionScorer& scorer, const Example& x);
// explicit embedded input, bypassing table lookup
ForwardResult forward_embedded(const AttentionModel& model, const AttentionScorer& scorer, const Mat& xe);

// -log y[class], clamped at 1e-12
double bce(std::span<const double> y, int label);
// cross-entropy of pred against a fixed target distribution, same clamp
double cross_entropy(std::span<const double> target, std::span<const double> pred);

struct ModelGrads {
  Mat d_embeddings;
  Mat d_w_xh, d_w_hh;
  Vec d_b_h;
  Vec d_v;
  Mat d_w1, d_w2;
  Vec d_q;
  Vec d_theta;
  double d_bias = 0.0;
};

// Mean label-BCE gradient over the batch, backpropagated through decoder,
// scorer, encoder and embedding lookup. Frozen components get zero grads.
ModelGrads grad_all(const AttentionModel& model, std::span<const Example> batch);

// d(label BCE)/d(xe) for an explicit embedded input; used by input-space attacks
Mat input_gradient(const AttentionModel& model, const AttentionScorer& scorer, const Mat& xe, int label);

struct TrainConfig {
  double lr = 0.01;
  int epochs = 20;
  int batch = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  double final_f1 = 0.0;
};

AttentionModel init_model(const Vocabulary& vocab, const EmbeddingTable& table, int hidden,
                          ScorerKind kind, int max_len, std::uint64_t seed);

// Adam on all unfrozen components; deterministic batching from the seed.
AttentionModel train_base(const Dataset& data, const AttentionModel& init, const TrainConfig& cfg,
                          std::uint64_t seed, TrainLog* log = nullptr);

// Per-example state that stays fixed while only the scorer trains.
struct ExampleCache {
  Mat h;             // s x m
  Vec c;             // c_t = theta . h_t
  Vec base_scores;   // phi of the base scorer
  Vec base_w;        // base attention
  Vec base_y;        // base prediction
  double base_p = 0.0;
  int label = 0;
};

ExampleCache make_cache(const AttentionModel& model, const Example& x);

// Weighted objective on the scorer path:
//   d1_weight          * CE(base prediction fixed, y(w~))
//   + d2_weight        * CE(y(w~), y(w~ + delta))
//   + topk_weight      * L_topk(base w, w~)
//   + label_clean_weight * BCE(y(w~), label)
//   + label_adv_weight * BCE(y(w~ + delta), label)
// The d2 term is differentiated through both of its arguments (both are
// functions of the scorer; delta alone is held fixed), so the gradient
// matches finite differences of the reported value.
// algorithm1_signs flips the sign of the d2/topk gradient contributions
// while leaving reported component values unchanged.
struct ScorerLossSpec {
  double d1_weight = 0.0;
  double d2_weight = 0.0;
  double topk_weight = 0.0;
  double label_clean_weight = 0.0;
  double label_adv_weight = 0.0;
  int k = 7;
  bool algorithm1_signs = false;
};

struct ScorerGrads {
  Vec d_v;
  Mat d_w1, d_w2;
  Vec d_q;
};

struct LossComponents {
  double d1 = 0.0;
  double d2 = 0.0;
  double ltopk = 0.0;
  double label_clean = 0.0;
  double label_adv = 0.0;
};

struct ScorerDeltaGrad {
  ScorerGrads scorer;
  Vec d_delta;  // same length as delta, masked to the active sequence
  LossComponents comps;
};

// Analytic gradient of the weighted objective w.r.t. the replacement scorer's
// parameters and w.r.t. delta. Top-k index sets are held fixed at the current
// weights; sign(0) is 0. delta may be longer than the sequence (shared batch
// perturbation); only the first s entries act.
ScorerDeltaGrad grad_scorer_and_delta(const AttentionModel& model, const AttentionScorer& tilde,
                                      const ExampleCache& cache, std::span<const double> delta,
                                      const ScorerLossSpec& spec);

ScorerGrads zero_scorer_grads(const AttentionScorer& like);
void scorer_axpy(double a, const ScorerGrads& g, AttentionScorer& s);
void scorer_grads_axpy(double a, const ScorerGrads& g, ScorerGrads& acc);

}  // namespace seat
