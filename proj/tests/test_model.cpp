#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "doctest.h"
#include "seat/checkpoint.hpp"
#include "seat/corpus.hpp"
#include "seat/model.hpp"
#include "seat/prng.hpp"
#include "seat/seat.hpp"

using namespace seat;

namespace {

// small corpus + model so finite differences stay well conditioned
struct Tiny {
  SyntheticCorpus corp;
  AttentionModel model;
};

Tiny make_tiny(std::uint64_t seed, ScorerKind kind = ScorerKind::additive) {
  SyntheticSpec spec;
  spec.vocab_size = 24;
  spec.dim = 5;
  spec.train_count = 8;
  spec.test_count = 4;
  spec.min_len = 3;
  spec.max_len = 6;
  spec.pos_keywords = 3;
  spec.neg_keywords = 3;
  spec.max_keywords_per_sentence = 3;
  Tiny t{generate_synthetic(spec, seed), {}};
  t.model = init_model(t.corp.vocab, t.corp.table, 4, kind, 8, seed + 1);
  return t;
}

double rel_err(double got, double want) {
  double scale = std::max({std::fabs(got), std::fabs(want), 1e-8});
  return std::fabs(got - want) / scale;
}

// central finite difference of f along one coordinate
double fd(std::function<double()> f, double& coord, double h) {
  double keep = coord;
  coord = keep + h;
  double up = f();
  coord = keep - h;
  double dn = f();
  coord = keep;
  return (up - dn) / (2.0 * h);
}

double batch_loss(const AttentionModel& m, const std::vector<Example>& batch) {
  double s = 0.0;
  for (const Example& x : batch) s += bce(forward(m, x).y, x.label);
  return s / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("closed-form activations come out exactly") {
  // sigmoid(ln 3) = 3/4 through the decoder
  AttentionModel m;
  m.decoder.theta = {1.0};
  m.decoder.bias = 0.0;
  Mat h(1, 1);
  h(0, 0) = std::log(3.0);
  Vec w{1.0};
  Vec y = decode(m.decoder, h, w);
  CHECK(y[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(y[0] + y[1] == doctest::Approx(1.0).epsilon(1e-12));

  // -ln(1/4) for the wrong-class probability
  Vec yp{0.25, 0.75};
  CHECK(bce(yp, 1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(bce(yp, 0) == doctest::Approx(-std::log(0.75)).epsilon(1e-12));

  // softmax of [ln 1, ln 2, ln 3] is [1/6, 2/6, 3/6]
  Vec scores{std::log(1.0), std::log(2.0), std::log(3.0)};
  AttentionWeights aw = softmax(scores);
  CHECK(aw.simplex);
  CHECK(aw.values[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(aw.values[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(aw.values[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));

  // shift invariance from the max subtraction
  Vec shifted{std::log(1.0) + 50, std::log(2.0) + 50, std::log(3.0) + 50};
  AttentionWeights aw2 = softmax(shifted);
  for (int i = 0; i < 3; ++i)
    CHECK(aw2.values[i] == doctest::Approx(aw.values[i]).epsilon(1e-12));
}

TEST_CASE("cross_entropy clamps and matches the by-hand sum") {
  Vec t{0.25, 0.75};
  Vec p{0.5, 0.5};
  double want = -(0.25 * std::log(0.5) + 0.75 * std::log(0.5));
  CHECK(cross_entropy(t, p) == doctest::Approx(want).epsilon(1e-12));
  Vec zero{1.0, 0.0};
  CHECK(std::isfinite(cross_entropy(t, zero)));
}

TEST_CASE("forward is deterministic and finite") {
  Tiny t = make_tiny(50);
  const Example& x = t.corp.data.train[0];
  ForwardResult a = forward(t.model, x);
  ForwardResult b = forward(t.model, x);
  CHECK(a.y == b.y);
  CHECK(a.w.values == b.w.values);
  REQUIRE(a.h.rows == x.size());
  CHECK(all_finite(a.h));
  double sum = 0.0;
  for (double v : a.w.values) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("grad_all matches finite differences on every parameter block") {
  for (auto kind : {ScorerKind::additive, ScorerKind::scaled_dot}) {
    Tiny t = make_tiny(kind == ScorerKind::additive ? 60 : 61, kind);
    std::vector<Example> batch(t.corp.data.train.begin(), t.corp.data.train.begin() + 4);
    ModelGrads g = grad_all(t.model, batch);
    auto f = [&] { return batch_loss(t.model, batch); };
    const double h = 1e-5;
    const double tol = 1e-4;

    Prng pick(1, "fd-pick");
    auto check_mat = [&](Mat& par, const Mat& grad, const char* name) {
      REQUIRE(grad.rows == par.rows);
      for (int trial = 0; trial < 12; ++trial) {
        std::size_t i = pick.below(par.a.size());
        double want = fd(f, par.a[i], h);
        INFO(name << " coord " << i);
        CHECK(rel_err(grad.a[i], want) < tol);
      }
    };
    auto check_vec = [&](Vec& par, const Vec& grad, const char* name) {
      for (int trial = 0; trial < 8 && !par.empty(); ++trial) {
        std::size_t i = pick.below(par.size());
        double want = fd(f, par[i], h);
        INFO(name << " coord " << i);
        CHECK(rel_err(grad[i], want) < tol);
      }
    };

    check_mat(t.model.embeddings.matrix, g.d_embeddings, "embeddings");
    check_mat(t.model.encoder.w_xh, g.d_w_xh, "w_xh");
    check_mat(t.model.encoder.w_hh, g.d_w_hh, "w_hh");
    check_vec(t.model.encoder.b_h, g.d_b_h, "b_h");
    if (kind == ScorerKind::additive) {
      check_vec(t.model.scorer.v, g.d_v, "v");
      check_mat(t.model.scorer.w1, g.d_w1, "w1");
      check_mat(t.model.scorer.w2, g.d_w2, "w2");
    }
    check_vec(t.model.scorer.q, g.d_q, "q");
    check_vec(t.model.decoder.theta, g.d_theta, "theta");
    double want_bias = fd(f, t.model.decoder.bias, h);
    CHECK(rel_err(g.d_bias, want_bias) < tol);
  }
}

TEST_CASE("frozen components get exactly zero gradients") {
  Tiny t = make_tiny(70);
  t.model.frozen.embeddings = true;
  t.model.frozen.decoder = true;
  std::vector<Example> batch(t.corp.data.train.begin(), t.corp.data.train.begin() + 4);
  ModelGrads g = grad_all(t.model, batch);
  for (double v : g.d_embeddings.a) CHECK(v == 0.0);
  for (double v : g.d_theta) CHECK(v == 0.0);
  CHECK(g.d_bias == 0.0);
  // unfrozen blocks still flow
  double mag = 0.0;
  for (double v : g.d_w_xh.a) mag += std::fabs(v);
  CHECK(mag > 0.0);
}

TEST_CASE("input_gradient matches finite differences on the embedded input") {
  Tiny t = make_tiny(80);
  const Example& x = t.corp.data.train[1];
  Mat xe = embed_sequence(t.corp.table, x);
  Mat g = input_gradient(t.model, t.model.scorer, xe, x.label);
  REQUIRE(g.rows == xe.rows);
  auto f = [&] { return bce(forward_embedded(t.model, t.model.scorer, xe).y, x.label); };
  Prng pick(2, "fd-input");
  for (int trial = 0; trial < 16; ++trial) {
    std::size_t i = pick.below(xe.a.size());
    double want = fd(f, xe.a[i], 1e-5);
    CHECK(rel_err(g.a[i], want) < 1e-4);
  }
}

TEST_CASE("scorer and delta gradients match finite differences per term") {
  Tiny t = make_tiny(90);
  const Example& x = t.corp.data.train[2];
  ExampleCache cache = make_cache(t.model, x);
  Vec delta(static_cast<std::size_t>(x.size()), 0.0);
  Prng dr(3, "delta-init");
  for (double& d : delta) d = 0.05 * dr.normal();

  // a replacement scorer identical to the base one would put the d1 gradient
  // and every top-k L1 term exactly at a stationary point or kink
  AttentionScorer jiggled = t.model.scorer;
  for (double& a : jiggled.w1.a) a += 0.05 * dr.normal();
  for (double& a : jiggled.v) a += 0.05 * dr.normal();
  for (double& a : jiggled.q) a += 0.05 * dr.normal();

  // one spec per objective term, then a combined one; topk uses a k away
  // from rank ties so the frozen index sets are locally exact
  std::vector<ScorerLossSpec> specs(5);
  specs[0].d1_weight = 1.0;
  specs[1].d2_weight = 1.0;
  specs[2].topk_weight = 1.0;
  specs[2].k = 2;
  specs[3].label_clean_weight = 0.7;
  specs[3].label_adv_weight = 0.3;
  specs[4].d1_weight = 1.0;
  specs[4].d2_weight = 0.5;
  specs[4].topk_weight = 0.25;
  specs[4].k = 2;

  for (std::size_t si = 0; si < specs.size(); ++si) {
    const ScorerLossSpec& spec = specs[si];
    AttentionScorer tilde = jiggled;
    auto value = [&] {
      ScorerDeltaGrad g0 = grad_scorer_and_delta(t.model, tilde, cache, delta, spec);
      return spec.d1_weight * g0.comps.d1 + spec.d2_weight * g0.comps.d2 +
             spec.topk_weight * g0.comps.ltopk + spec.label_clean_weight * g0.comps.label_clean +
             spec.label_adv_weight * g0.comps.label_adv;
    };
    ScorerDeltaGrad g = grad_scorer_and_delta(t.model, tilde, cache, delta, spec);
    Prng pick(4, "fd-scorer", si);
    // wider step than the encoder tests: these gradients sit near 1e-6, so a
    // smaller h drowns the central difference in cancellation noise
    const double h = 1e-4;
    const double tol = 1e-4;
    for (int trial = 0; trial < 10; ++trial) {
      std::size_t i = pick.below(tilde.w1.a.size());
      double want = fd(value, tilde.w1.a[i], h);
      INFO("spec " << si << " w1 coord " << i);
      CHECK(rel_err(g.scorer.d_w1.a[i], want) < tol);
    }
    for (int trial = 0; trial < 6; ++trial) {
      std::size_t i = pick.below(tilde.v.size());
      double want = fd(value, tilde.v[i], h);
      INFO("spec " << si << " v coord " << i);
      CHECK(rel_err(g.scorer.d_v[i], want) < tol);
    }
    for (int trial = 0; trial < 6; ++trial) {
      std::size_t i = pick.below(delta.size());
      double want = fd(value, delta[i], h);
      INFO("spec " << si << " delta coord " << i);
      CHECK(rel_err(g.d_delta[i], want) < tol);
    }
  }
}

TEST_CASE("algorithm1_signs flips the d2/topk gradient but not the values") {
  Tiny t = make_tiny(95);
  ExampleCache cache = make_cache(t.model, t.corp.data.train[0]);
  Vec delta(static_cast<std::size_t>(cache.h.rows), 0.01);
  ScorerLossSpec spec;
  spec.d2_weight = 1.0;
  spec.topk_weight = 1.0;
  spec.k = 2;
  ScorerDeltaGrad plain = grad_scorer_and_delta(t.model, t.model.scorer, cache, delta, spec);
  spec.algorithm1_signs = true;
  ScorerDeltaGrad flipped = grad_scorer_and_delta(t.model, t.model.scorer, cache, delta, spec);
  CHECK(plain.comps.d2 == doctest::Approx(flipped.comps.d2).epsilon(1e-12));
  CHECK(plain.comps.ltopk == doctest::Approx(flipped.comps.ltopk).epsilon(1e-12));
  for (std::size_t i = 0; i < plain.scorer.d_w1.a.size(); ++i)
    CHECK(plain.scorer.d_w1.a[i] == doctest::Approx(-flipped.scorer.d_w1.a[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < plain.scorer.d_v.size(); ++i)
    CHECK(plain.scorer.d_v[i] == doctest::Approx(-flipped.scorer.d_v[i]).epsilon(1e-12));
}

TEST_CASE("train_base reduces loss and reports f1") {
  Tiny t = make_tiny(100);
  SyntheticSpec spec;
  spec.vocab_size = 30;
  spec.dim = 6;
  spec.train_count = 64;
  spec.test_count = 32;
  spec.min_len = 4;
  spec.max_len = 6;
  spec.pos_keywords = 4;
  spec.neg_keywords = 4;
  spec.max_keywords_per_sentence = 3;
  SyntheticCorpus corp = generate_synthetic(spec, 7);
  AttentionModel init = init_model(corp.vocab, corp.table, 6, ScorerKind::additive, 8, 8);
  TrainConfig cfg;
  cfg.epochs = 8;
  TrainLog log;
  AttentionModel trained = train_base(corp.data, init, cfg, 9, &log);
  REQUIRE(log.epoch_loss.size() == static_cast<std::size_t>(cfg.epochs));
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  CHECK(log.final_f1 >= 0.0);
  CHECK(log.final_f1 <= 1.0);
  CHECK(all_finite(trained.encoder.w_xh));

  // same seed, same result
  TrainLog log2;
  AttentionModel again = train_base(corp.data, init, cfg, 9, &log2);
  CHECK(log2.epoch_loss == log.epoch_loss);
  CHECK(again.decoder.theta == trained.decoder.theta);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Tiny t = make_tiny(110);
  t.model.frozen.embeddings = true;
  std::string path = "model_roundtrip.tmp.json";
  save_model(path, t.model);
  AttentionModel back = load_model(path);

  CHECK(back.embeddings.matrix.a == t.model.embeddings.matrix.a);
  CHECK(back.encoder.w_xh.a == t.model.encoder.w_xh.a);
  CHECK(back.encoder.w_hh.a == t.model.encoder.w_hh.a);
  CHECK(back.scorer.v == t.model.scorer.v);
  CHECK(back.decoder.theta == t.model.decoder.theta);
  CHECK(back.decoder.bias == t.model.decoder.bias);
  CHECK(back.frozen.embeddings == t.model.frozen.embeddings);
  CHECK(back.vocab.id_to_token == t.model.vocab.id_to_token);

  // a second save of the loaded model produces identical bytes
  std::string path2 = "model_roundtrip2.tmp.json";
  save_model(path2, back);
  CHECK(file_hash(path) == file_hash(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());

  const Example& x = t.corp.data.train[0];
  CHECK(forward(back, x).y == forward(t.model, x).y);
}

TEST_CASE("seat scorer checkpoints keep provenance") {
  Tiny t = make_tiny(120);
  SeatScorer s;
  s.scorer = t.model.scorer;
  s.provenance.base_hash = "0123456789abcdef";
  s.provenance.seed = 77;
  s.provenance.config.epochs = 5;
  s.provenance.config.eta = 0.25;
  std::string path = "seat_roundtrip.tmp.json";
  save_seat_scorer(path, s);
  SeatScorer back = load_seat_scorer(path);
  std::remove(path.c_str());
  CHECK(back.scorer.v == s.scorer.v);
  CHECK(back.scorer.w1.a == s.scorer.w1.a);
  CHECK(back.provenance.base_hash == s.provenance.base_hash);
  CHECK(back.provenance.seed == 77);
  CHECK(back.provenance.config.epochs == 5);
  CHECK(back.provenance.config.eta == 0.25);
}
