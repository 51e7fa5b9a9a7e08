#include "seat/seat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "seat/errors.hpp"
#include "seat/prng.hpp"

namespace seat {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::vector<bool> topk_mask(std::span<const double> v, int k) {
  auto idx = topk_indices(v, k);
  std::vector<bool> mask(v.size(), false);
  for (int i : idx) mask[i] = true;
  return mask;
}

// Euclidean projection onto the probability simplex
Vec project_simplex(std::span<const double> v) {
  Vec u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double tau = 0.0, cum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) tau = t;
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

}  // namespace

std::vector<int> topk_indices(std::span<const double> v, int k) {
  int n = static_cast<int>(v.size());
  if (k < 1 || k > n) throw std::invalid_argument("topk_indices: k out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

double topk_overlap(std::span<const double> a, std::span<const double> b, int k) {
  if (a.size() != b.size()) throw std::invalid_argument("topk_overlap: size mismatch");
  auto ma = topk_mask(a, k);
  auto mb = topk_mask(b, k);
  int common = 0;
  for (std::size_t i = 0; i < ma.size(); ++i)
    if (ma[i] && mb[i]) ++common;
  return static_cast<double>(common) / static_cast<double>(k);
}

double topk_surrogate(std::span<const double> w, std::span<const double> wt, int k) {
  if (w.size() != wt.size()) throw std::invalid_argument("topk_surrogate: size mismatch");
  auto mw = topk_mask(w, k);
  auto mt = topk_mask(wt, k);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double d = std::fabs(w[i] - wt[i]);
    if (mw[i]) acc += d;
    if (mt[i]) acc += d;
  }
  return acc / (2.0 * static_cast<double>(k));
}

Vec topk_surrogate_subgrad(std::span<const double> w, std::span<const double> wt, int k) {
  if (w.size() != wt.size())
    throw std::invalid_argument("topk_surrogate_subgrad: size mismatch");
  auto mw = topk_mask(w, k);
  auto mt = topk_mask(wt, k);
  Vec g(w.size(), 0.0);
  double inv = 1.0 / (2.0 * static_cast<double>(k));
  for (std::size_t i = 0; i < w.size(); ++i) {
    double s = sgn(wt[i] - w[i]);
    if (mw[i]) g[i] += inv * s;
    if (mt[i]) g[i] += inv * s;
  }
  return g;
}

void project(std::span<double> delta, double radius, BallNorm norm) {
  if (radius < 0.0) throw std::invalid_argument("project: negative radius");
  if (norm == BallNorm::linf) {
    for (double& v : delta) v = std::clamp(v, -radius, radius);
    return;
  }
  double n = norm2(delta);
  if (n > radius) {
    double s = radius / n;
    for (double& v : delta) v *= s;
  }
}

Vec apply_delta(std::span<const double> w, std::span<const double> delta, bool simplex_reproject) {
  if (delta.size() < w.size()) throw std::invalid_argument("apply_delta: delta too short");
  Vec out(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) out[t] = w[t] + delta[t];
  if (simplex_reproject) out = project_simplex(out);
  return out;
}

namespace {

enum class InnerObjective { stability, label };

struct CachedTilde {
  Vec w;      // tilde attention
  double z;   // clean pre-activation
  double p;   // clean prediction
};

CachedTilde tilde_forward(const AttentionModel& model, const AttentionScorer& tilde,
                          const ExampleCache& cache) {
  CachedTilde ct;
  Vec phi = attend_scores(tilde, cache.h);
  ct.w = softmax(phi).values;
  ct.z = model.decoder.bias;
  for (int t = 0; t < cache.h.rows; ++t) ct.z += ct.w[t] * cache.c[t];
  ct.p = sigmoid(ct.z);
  return ct;
}

Perturbation pgd_inner_impl(const AttentionModel& model, const AttentionScorer& tilde,
                            std::span<const ExampleCache* const> batch, const SeatConfig& cfg,
                            InnerObjective objective) {
  if (batch.empty()) throw std::invalid_argument("pgd_inner: empty batch");
  if (cfg.inner_steps < 0) throw std::invalid_argument("pgd_inner: negative step count");

  int len = model.max_len;
  for (const auto* c : batch) len = std::max(len, c->h.rows);

  Perturbation pert;
  pert.delta.assign(len, 0.0);
  pert.radius = cfg.radius;
  pert.norm = cfg.norm;

  std::vector<CachedTilde> ct;
  ct.reserve(batch.size());
  for (const auto* c : batch) ct.push_back(tilde_forward(model, tilde, *c));

  double alpha = cfg.pgd_alpha();
  double inv_b = 1.0 / static_cast<double>(batch.size());
  Vec grad(len);
  std::vector<double> ph_of(batch.size());
  for (int step = 0; step < cfg.inner_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const ExampleCache& c = *batch[i];
      int s = c.h.rows;
      double zh;
      if (cfg.simplex_reproject) {
        Vec wd = apply_delta(std::span<const double>(ct[i].w),
                             std::span<const double>(pert.delta), true);
        zh = model.decoder.bias;
        for (int t = 0; t < s; ++t) zh += wd[t] * c.c[t];
      } else {
        zh = ct[i].z;
        for (int t = 0; t < s; ++t) zh += pert.delta[t] * c.c[t];
      }
      double ph = sigmoid(zh);
      ph_of[i] = ph;
      double target = objective == InnerObjective::stability
                          ? ct[i].p
                          : (c.label == 1 ? 1.0 : 0.0);
      double dzd = ph - target;
      for (int t = 0; t < s; ++t) grad[t] += inv_b * dzd * c.c[t];
    }
    if (std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) {
      // δ=0 is a critical point of the stability objective (the perturbed and
      // clean predictions coincide), so the first-order step stalls there even
      // though the loss grows quadratically in δ. The local Hessian is
      // (1/B)·Σ σ'(ẑ_i)·c_i c_iᵀ; one power step from the all-ones vector gives
      // its dominant direction, which is the steepest usable ascent.
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const ExampleCache& c = *batch[i];
        int s = c.h.rows;
        double sp = ph_of[i] * (1.0 - ph_of[i]);
        double csum = 0.0;
        for (int t = 0; t < s; ++t) csum += c.c[t];
        for (int t = 0; t < s; ++t) grad[t] += inv_b * sp * csum * c.c[t];
      }
      if (norm2(grad) == 0.0) break;  // no usable curvature either; δ=0 is genuinely optimal
    }
    // alpha = 2R/K is a distance budget in the ball's own geometry, so the
    // gradient only sets the step direction: unit steepest ascent is g/|g|
    // for the l2 ball and sign(g) for the linf box
    if (cfg.norm == BallNorm::linf) {
      for (double& g : grad) g = g > 0.0 ? 1.0 : g < 0.0 ? -1.0 : 0.0;
    } else {
      double gn = norm2(grad);
      for (double& g : grad) g /= gn;
    }
    axpy(alpha, grad, pert.delta);
    project(pert.delta, cfg.radius, cfg.norm);
  }
  return pert;
}

std::vector<const ExampleCache*> cache_ptrs(std::span<const ExampleCache> caches) {
  std::vector<const ExampleCache*> p;
  p.reserve(caches.size());
  for (const auto& c : caches) p.push_back(&c);
  return p;
}

Vec sample_ball(Prng& rng, int len, double radius, BallNorm norm) {
  Vec d(len);
  if (norm == BallNorm::linf) {
    for (double& v : d) v = rng.uniform(-radius, radius);
    return d;
  }
  for (double& v : d) v = rng.normal();
  double n = norm2(d);
  if (n == 0.0) return Vec(len, 0.0);
  double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(len));
  for (double& v : d) v *= r / n;
  return d;
}

void check_seat_cfg(const SeatConfig& cfg) {
  if (cfg.k < 1) throw std::invalid_argument("seat: k must be positive");
  if (cfg.radius < 0.0) throw std::invalid_argument("seat: negative radius");
  if (cfg.batch < 1) throw std::invalid_argument("seat: batch must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("seat: negative epoch count");
  if (cfg.eta <= 0.0) throw std::invalid_argument("seat: eta must be positive");
  if (cfg.inner_steps < 0) throw std::invalid_argument("seat: negative inner step count");
}

struct EpochStats {
  double d1 = 0.0, d2 = 0.0, ltopk = 0.0;
  long n = 0;
};

// shared epoch loop: per batch, build delta, take one averaged scorer step
template <class DeltaFn>
AttentionScorer scorer_descent(const AttentionModel& base, const Dataset& data,
                               const SeatConfig& cfg, std::uint64_t seed,
                               const ScorerLossSpec& spec, DeltaFn make_delta,
                               SeatTrainLog* log) {
  check_seat_cfg(cfg);
  if (data.train.empty()) throw std::invalid_argument("seat: empty training set");

  AttentionScorer tilde = base.scorer;
  std::vector<ExampleCache> caches;
  caches.reserve(data.train.size());
  for (const Example& x : data.train) caches.push_back(make_cache(base, x));

  std::vector<std::size_t> order(caches.size());
  std::iota(order.begin(), order.end(), 0);

  long batch_counter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Prng shuffle_rng(seed, "seat-epoch-shuffle", epoch);
    shuffle_rng.shuffle(order);
    double eta_t = cfg.eta / (1.0 + cfg.eta_decay * static_cast<double>(epoch));

    EpochStats stats;
    std::vector<const ExampleCache*> batch;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch) {
      batch.clear();
      for (std::size_t i = pos; i < std::min(order.size(), pos + cfg.batch); ++i)
        batch.push_back(&caches[order[i]]);

      Perturbation pert = make_delta(tilde, std::span<const ExampleCache* const>(batch),
                                     batch_counter);
      ++batch_counter;

      ScorerGrads acc = zero_scorer_grads(tilde);
      double inv_b = 1.0 / static_cast<double>(batch.size());
      for (const ExampleCache* c : batch) {
        ScorerDeltaGrad g = grad_scorer_and_delta(base, tilde, *c, pert.delta, spec);
        scorer_grads_axpy(inv_b, g.scorer, acc);
        stats.d1 += g.comps.d1;
        stats.d2 += g.comps.d2;
        stats.ltopk += g.comps.ltopk;
        ++stats.n;
      }
      scorer_axpy(-eta_t, acc, tilde);
    }

    if (!all_finite(tilde.q) || (!tilde.v.empty() && !(all_finite(tilde.v) && all_finite(tilde.w1) && all_finite(tilde.w2))))
      throw NumericError("seat: scorer diverged");
    if (log) {
      double inv_n = stats.n > 0 ? 1.0 / static_cast<double>(stats.n) : 0.0;
      log->epoch_d1.push_back(stats.d1 * inv_n);
      log->epoch_d2.push_back(stats.d2 * inv_n);
      log->epoch_ltopk.push_back(stats.ltopk * inv_n);
      log->epoch_overlap_test.push_back(
          data.test.empty() ? 0.0 : mean_topk_overlap(base, tilde, data.test, cfg.k));
    }
  }
  return tilde;
}

}  // namespace

Perturbation pgd_inner(const AttentionModel& model, const AttentionScorer& tilde,
                       std::span<const ExampleCache> batch, const SeatConfig& cfg) {
  auto ptrs = cache_ptrs(batch);
  return pgd_inner_impl(model, tilde, ptrs, cfg, InnerObjective::stability);
}

ObjectiveParts seat_objective(const AttentionModel& model, const AttentionScorer& tilde,
                              std::span<const ExampleCache> batch, std::span<const double> delta,
                              const SeatConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("seat_objective: empty batch");
  ObjectiveParts parts;
  for (const ExampleCache& c : batch) {
    CachedTilde ct = tilde_forward(model, tilde, c);
    int s = c.h.rows;
    double zh = ct.z;
    if (!delta.empty()) {
      if (cfg.simplex_reproject) {
        Vec wd = apply_delta(std::span<const double>(ct.w), delta, true);
        zh = model.decoder.bias;
        for (int t = 0; t < s; ++t) zh += wd[t] * c.c[t];
      } else {
        if (static_cast<int>(delta.size()) < s)
          throw std::invalid_argument("seat_objective: delta shorter than sequence");
        for (int t = 0; t < s; ++t) zh += delta[t] * c.c[t];
      }
    }
    double ph = sigmoid(zh);
    Vec target{c.base_p, 1.0 - c.base_p};
    Vec yt{ct.p, 1.0 - ct.p};
    Vec yh{ph, 1.0 - ph};
    parts.d1 += cross_entropy(target, yt);
    parts.d2 += cross_entropy(yt, yh);
    parts.ltopk += topk_surrogate(c.base_w, ct.w, std::min(cfg.k, s));
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  parts.d1 *= inv;
  parts.d2 *= inv;
  parts.ltopk *= inv;
  parts.total = parts.d1 + cfg.lambda1 * parts.d2 + cfg.lambda2 * parts.ltopk;
  return parts;
}

SeatScorer train_seat(const AttentionModel& base, const Dataset& data, const SeatConfig& cfg,
                      std::uint64_t seed, SeatTrainLog* log) {
  ScorerLossSpec spec;
  spec.d1_weight = 1.0;
  spec.d2_weight = cfg.lambda1;
  spec.topk_weight = cfg.lambda2;
  spec.k = cfg.k;
  spec.algorithm1_signs = cfg.algorithm1_signs;

  auto make_delta = [&](const AttentionScorer& tilde, std::span<const ExampleCache* const> batch,
                        long) {
    return pgd_inner_impl(base, tilde, batch, cfg, InnerObjective::stability);
  };

  SeatScorer out;
  out.scorer = scorer_descent(base, data, cfg, seed, spec, make_delta, log);
  out.provenance.seed = seed;
  out.provenance.config = cfg;
  return out;
}

AttentionScorer train_attention_rp(const AttentionModel& base, const Dataset& data,
                                   const SeatConfig& cfg, std::uint64_t seed) {
  ScorerLossSpec spec;
  spec.label_clean_weight = 1.0;
  spec.label_adv_weight = 1.0;
  spec.k = cfg.k;

  auto make_delta = [&](const AttentionScorer&, std::span<const ExampleCache* const> batch,
                        long counter) {
    int len = base.max_len;
    for (const auto* c : batch) len = std::max(len, c->h.rows);
    Prng rng(seed, "rp-delta", static_cast<std::uint64_t>(counter));
    Perturbation pert;
    pert.delta = sample_ball(rng, len, cfg.radius, cfg.norm);
    pert.radius = cfg.radius;
    pert.norm = cfg.norm;
    return pert;
  };
  return scorer_descent(base, data, cfg, seed, spec, make_delta, nullptr);
}

AttentionScorer train_attention_at(const AttentionModel& base, const Dataset& data,
                                   const SeatConfig& cfg, std::uint64_t seed) {
  ScorerLossSpec spec;
  spec.label_clean_weight = 1.0;
  spec.label_adv_weight = cfg.lambda1;
  spec.k = cfg.k;

  auto make_delta = [&](const AttentionScorer& tilde, std::span<const ExampleCache* const> batch,
                        long) {
    return pgd_inner_impl(base, tilde, batch, cfg, InnerObjective::label);
  };
  return scorer_descent(base, data, cfg, seed, spec, make_delta, nullptr);
}

double mean_topk_overlap(const AttentionModel& base, const AttentionScorer& tilde,
                         std::span<const Example> examples, int k) {
  if (examples.empty()) throw std::invalid_argument("mean_topk_overlap: no examples");
  double acc = 0.0;
  for (const Example& x : examples) {
    Mat xe = embed_sequence(base.embeddings, x);
    Mat h = encode(base.encoder, xe);
    Vec wb = softmax(attend_scores(base.scorer, h)).values;
    Vec wt = softmax(attend_scores(tilde, h)).values;
    acc += topk_overlap(wb, wt, std::min<int>(k, x.size()));
  }
  return acc / static_cast<double>(examples.size());
}

}  // namespace seat
