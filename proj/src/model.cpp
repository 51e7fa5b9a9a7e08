#include "seat/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seat/errors.hpp"
#include "seat/metrics.hpp"
#include "seat/prng.hpp"
#include "seat/seat.hpp"

namespace seat {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

void rand_uniform_fan(std::span<double> out, int fan_in, Prng& rng) {
  double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : out) v = rng.uniform(-b, b);
}

// per-position intermediates of the additive scorer
struct ScorerFwd {
  Vec phi;
  Mat cu;   // tanh(W1 h_t + W2 q), additive only
  Vec w2q;  // additive only
};

ScorerFwd scorer_forward(const AttentionScorer& sc, const Mat& h) {
  int s = h.rows, m = h.cols;
  ScorerFwd f;
  f.phi.resize(s);
  if (sc.kind == ScorerKind::scaled_dot) {
    double inv = 1.0 / std::sqrt(static_cast<double>(m));
    for (int t = 0; t < s; ++t) f.phi[t] = dot(h.row(t), sc.q) * inv;
    return f;
  }
  f.cu = Mat(s, m);
  f.w2q.assign(m, 0.0);
  for (int i = 0; i < m; ++i) f.w2q[i] = dot(sc.w2.row(i), sc.q);
  for (int t = 0; t < s; ++t) {
    auto ht = h.row(t);
    for (int i = 0; i < m; ++i) {
      double u = f.w2q[i] + dot(sc.w1.row(i), ht);
      f.cu(t, i) = std::tanh(u);
    }
    f.phi[t] = dot(sc.v, f.cu.row(t));
  }
  return f;
}

// d(loss)/d(phi) given d(loss)/d(w) for w = softmax(phi)
Vec softmax_backward(std::span<const double> w, std::span<const double> dw) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += dw[i] * w[i];
  Vec dphi(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) dphi[i] = w[i] * (dw[i] - s);
  return dphi;
}

// accumulates scorer parameter grads and dL/dh from dL/dphi
void scorer_backward(const AttentionScorer& sc, const Mat& h, const ScorerFwd& fw,
                     std::span<const double> dphi, ScorerGrads* g, Mat* dh) {
  int s = h.rows, m = h.cols;
  if (sc.kind == ScorerKind::scaled_dot) {
    double inv = 1.0 / std::sqrt(static_cast<double>(m));
    for (int t = 0; t < s; ++t) {
      if (dphi[t] == 0.0) continue;
      if (g) axpy(dphi[t] * inv, h.row(t), g->d_q);
      if (dh) axpy(dphi[t] * inv, sc.q, dh->row(t));
    }
    return;
  }
  Vec gt(m);
  for (int t = 0; t < s; ++t) {
    if (dphi[t] == 0.0) continue;
    auto cu = fw.cu.row(t);
    auto ht = h.row(t);
    for (int i = 0; i < m; ++i) gt[i] = dphi[t] * sc.v[i] * (1.0 - cu[i] * cu[i]);
    if (g) {
      axpy(dphi[t], cu, g->d_v);
      for (int i = 0; i < m; ++i) {
        axpy(gt[i], ht, g->d_w1.row(i));
        axpy(gt[i], sc.q, g->d_w2.row(i));
      }
      for (int i = 0; i < m; ++i) axpy(gt[i], sc.w2.row(i), g->d_q);
    }
    if (dh) {
      auto dht = dh->row(t);
      for (int i = 0; i < m; ++i) axpy(gt[i], sc.w1.row(i), dht);
    }
  }
}

// dL/dh -> encoder parameter grads and (optionally) input grads
void encoder_backward(const EncoderParams& enc, const Mat& xe, const Mat& h, Mat& dh,
                      ModelGrads* g, Mat* dxe) {
  int s = xe.rows, d = xe.cols, m = h.cols;
  Vec da(m);
  for (int t = s - 1; t >= 0; --t) {
    auto ht = h.row(t);
    auto dht = dh.row(t);
    for (int i = 0; i < m; ++i) da[i] = dht[i] * (1.0 - ht[i] * ht[i]);
    if (g) {
      axpy(1.0, da, g->d_b_h);
      for (int j = 0; j < d; ++j) axpy(xe(t, j), da, g->d_w_xh.row(j));
      if (t > 0) {
        auto hp = h.row(t - 1);
        for (int j = 0; j < m; ++j) axpy(hp[j], da, g->d_w_hh.row(j));
      }
    }
    if (t > 0) {
      auto dhp = dh.row(t - 1);
      for (int j = 0; j < m; ++j) dhp[j] += dot(enc.w_hh.row(j), da);
    }
    if (dxe) {
      auto dx = dxe->row(t);
      for (int j = 0; j < d; ++j) dx[j] += dot(enc.w_xh.row(j), da);
    }
  }
}

ModelGrads zero_grads(const AttentionModel& model) {
  ModelGrads g;
  g.d_embeddings = Mat(model.embeddings.rows(), model.embeddings.dim());
  g.d_w_xh = Mat(model.encoder.w_xh.rows, model.encoder.w_xh.cols);
  g.d_w_hh = Mat(model.encoder.w_hh.rows, model.encoder.w_hh.cols);
  g.d_b_h.assign(model.hidden(), 0.0);
  auto sg = zero_scorer_grads(model.scorer);
  g.d_v = std::move(sg.d_v);
  g.d_w1 = std::move(sg.d_w1);
  g.d_w2 = std::move(sg.d_w2);
  g.d_q = std::move(sg.d_q);
  g.d_theta.assign(model.decoder.theta.size(), 0.0);
  g.d_bias = 0.0;
  return g;
}

}  // namespace

Mat embed_sequence(const EmbeddingTable& table, const Example& x) {
  if (x.token_ids.empty()) throw std::invalid_argument("embed_sequence: empty example");
  Mat xe(x.size(), table.dim());
  for (int t = 0; t < x.size(); ++t) {
    int id = x.token_ids[t];
    if (id < 0 || id >= table.rows())
      throw std::invalid_argument("embed_sequence: token id out of range");
    auto row = table.row(id);
    std::copy(row.begin(), row.end(), xe.row(t).begin());
  }
  return xe;
}

Mat encode(const EncoderParams& enc, const Mat& xe) {
  int s = xe.rows, d = xe.cols, m = enc.hidden();
  if (enc.w_xh.rows != d || enc.w_xh.cols != m || enc.w_hh.rows != m || enc.w_hh.cols != m)
    throw std::invalid_argument("encode: parameter shapes do not match input");
  Mat h(s, m);
  Vec a(m);
  const double* hprev = nullptr;
  for (int t = 0; t < s; ++t) {
    std::copy(enc.b_h.begin(), enc.b_h.end(), a.begin());
    for (int j = 0; j < d; ++j) axpy(xe(t, j), enc.w_xh.row(j), a);
    if (hprev)
      for (int j = 0; j < m; ++j) axpy(hprev[j], enc.w_hh.row(j), a);
    for (int i = 0; i < m; ++i) h(t, i) = std::tanh(a[i]);
    hprev = h.row(t).data();
  }
  if (!all_finite(h)) throw NumericError("encode: non-finite hidden state");
  return h;
}

Vec attend_scores(const AttentionScorer& scorer, const Mat& h) {
  auto f = scorer_forward(scorer, h);
  if (!all_finite(f.phi)) throw NumericError("attend_scores: non-finite score");
  return std::move(f.phi);
}

AttentionWeights softmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = scores[0];
  for (double v : scores) mx = std::max(mx, v);
  AttentionWeights w;
  w.values.resize(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w.values[i] = std::exp(scores[i] - mx);
    sum += w.values[i];
  }
  for (double& v : w.values) v /= sum;
  w.simplex = true;
  return w;
}

Vec decode(const DecoderParams& dec, const Mat& h, std::span<const double> w) {
  if (static_cast<int>(w.size()) != h.rows)
    throw std::invalid_argument("decode: weight length does not match sequence");
  double z = dec.bias;
  for (int t = 0; t < h.rows; ++t) z += w[t] * dot(dec.theta, h.row(t));
  double p = sigmoid(z);
  return {p, 1.0 - p};
}

ForwardResult forward(const AttentionModel& model, const Example& x) {
  return forward(model, model.scorer, x);
}

ForwardResult forward(const AttentionModel& model, const AttentionScorer& scorer,
                      const Example& x) {
  return forward_embedded(model, scorer, embed_sequence(model.embeddings, x));
}

ForwardResult forward_embedded(const AttentionModel& model, const AttentionScorer& scorer,
                               const Mat& xe) {
  ForwardResult fr;
  fr.xe = xe;
  fr.h = encode(model.encoder, fr.xe);
  fr.scores = attend_scores(scorer, fr.h);
  fr.w = softmax(fr.scores);
  fr.y = decode(model.decoder, fr.h, fr.w.values);
  return fr;
}

double bce(std::span<const double> y, int label) {
  if (y.size() != 2) throw std::invalid_argument("bce: need a two-class distribution");
  if (label != 0 && label != 1) throw std::invalid_argument("bce: label must be 0 or 1");
  double p = label == 1 ? y[0] : y[1];
  return -std::log(std::max(p, 1e-12));
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) throw std::invalid_argument("cross_entropy: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] != 0.0) s -= target[i] * std::log(std::max(pred[i], 1e-12));
  return s;
}

ScorerGrads zero_scorer_grads(const AttentionScorer& like) {
  ScorerGrads g;
  g.d_q.assign(like.q.size(), 0.0);
  if (like.kind == ScorerKind::additive) {
    g.d_v.assign(like.v.size(), 0.0);
    g.d_w1 = Mat(like.w1.rows, like.w1.cols);
    g.d_w2 = Mat(like.w2.rows, like.w2.cols);
  }
  return g;
}

void scorer_axpy(double a, const ScorerGrads& g, AttentionScorer& s) {
  axpy(a, g.d_q, s.q);
  if (s.kind == ScorerKind::additive) {
    axpy(a, g.d_v, s.v);
    axpy(a, std::span<const double>(g.d_w1.a), std::span<double>(s.w1.a));
    axpy(a, std::span<const double>(g.d_w2.a), std::span<double>(s.w2.a));
  }
}

void scorer_grads_axpy(double a, const ScorerGrads& g, ScorerGrads& acc) {
  axpy(a, g.d_q, acc.d_q);
  if (!g.d_v.empty()) {
    axpy(a, g.d_v, acc.d_v);
    axpy(a, std::span<const double>(g.d_w1.a), std::span<double>(acc.d_w1.a));
    axpy(a, std::span<const double>(g.d_w2.a), std::span<double>(acc.d_w2.a));
  }
}

ModelGrads grad_all(const AttentionModel& model, std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("grad_all: empty batch");
  ModelGrads g = zero_grads(model);
  double scale = 1.0 / static_cast<double>(batch.size());

  for (const Example& x : batch) {
    Mat xe = embed_sequence(model.embeddings, x);
    Mat h = encode(model.encoder, xe);
    ScorerFwd sfw = scorer_forward(model.scorer, h);
    AttentionWeights w = softmax(sfw.phi);
    Vec y = decode(model.decoder, h, w.values);

    int s = h.rows;
    double t1 = x.label == 1 ? 1.0 : 0.0;
    double dz = scale * (y[0] - t1);

    Mat dh(s, h.cols);
    Vec dw(s);
    Vec hw(h.cols, 0.0);
    for (int t = 0; t < s; ++t) {
      dw[t] = dz * dot(model.decoder.theta, h.row(t));
      axpy(dz * w.values[t], model.decoder.theta, dh.row(t));
      axpy(w.values[t], h.row(t), hw);
    }
    axpy(dz, hw, g.d_theta);
    g.d_bias += dz;

    Vec dphi = softmax_backward(w.values, dw);
    ScorerGrads sg = zero_scorer_grads(model.scorer);
    scorer_backward(model.scorer, h, sfw, dphi, &sg, &dh);
    axpy(1.0, sg.d_q, g.d_q);
    if (!sg.d_v.empty()) {
      axpy(1.0, sg.d_v, g.d_v);
      axpy(1.0, std::span<const double>(sg.d_w1.a), std::span<double>(g.d_w1.a));
      axpy(1.0, std::span<const double>(sg.d_w2.a), std::span<double>(g.d_w2.a));
    }

    Mat dxe(s, xe.cols);
    encoder_backward(model.encoder, xe, h, dh, &g, &dxe);
    for (int t = 0; t < s; ++t) axpy(1.0, dxe.row(t), g.d_embeddings.row(x.token_ids[t]));
  }

  // reserved embedding rows never train
  std::fill(g.d_embeddings.row(0).begin(), g.d_embeddings.row(0).end(), 0.0);
  if (g.d_embeddings.rows > 1)
    std::fill(g.d_embeddings.row(1).begin(), g.d_embeddings.row(1).end(), 0.0);

  if (model.frozen.embeddings) g.d_embeddings.fill(0.0);
  if (model.frozen.encoder) {
    g.d_w_xh.fill(0.0);
    g.d_w_hh.fill(0.0);
    std::fill(g.d_b_h.begin(), g.d_b_h.end(), 0.0);
  }
  if (model.frozen.scorer) {
    std::fill(g.d_v.begin(), g.d_v.end(), 0.0);
    g.d_w1.fill(0.0);
    g.d_w2.fill(0.0);
    std::fill(g.d_q.begin(), g.d_q.end(), 0.0);
  }
  if (model.frozen.decoder) {
    std::fill(g.d_theta.begin(), g.d_theta.end(), 0.0);
    g.d_bias = 0.0;
  }
  return g;
}

Mat input_gradient(const AttentionModel& model, const AttentionScorer& scorer, const Mat& xe,
                   int label) {
  Mat h = encode(model.encoder, xe);
  ScorerFwd sfw = scorer_forward(scorer, h);
  AttentionWeights w = softmax(sfw.phi);
  Vec y = decode(model.decoder, h, w.values);

  int s = h.rows;
  double t1 = label == 1 ? 1.0 : 0.0;
  double dz = y[0] - t1;

  Mat dh(s, h.cols);
  Vec dw(s);
  for (int t = 0; t < s; ++t) {
    dw[t] = dz * dot(model.decoder.theta, h.row(t));
    axpy(dz * w.values[t], model.decoder.theta, dh.row(t));
  }
  Vec dphi = softmax_backward(w.values, dw);
  scorer_backward(scorer, h, sfw, dphi, nullptr, &dh);

  Mat dxe(s, xe.cols);
  encoder_backward(model.encoder, xe, h, dh, nullptr, &dxe);
  return dxe;
}

AttentionModel init_model(const Vocabulary& vocab, const EmbeddingTable& table, int hidden,
                          ScorerKind kind, int max_len, std::uint64_t seed) {
  if (hidden < 1) throw std::invalid_argument("init_model: hidden must be positive");
  if (table.rows() != vocab.size())
    throw std::invalid_argument("init_model: table rows do not match vocabulary");
  AttentionModel m;
  m.vocab = vocab;
  m.embeddings = table;
  m.max_len = max_len;
  int d = table.dim();

  m.encoder.w_xh = Mat(d, hidden);
  m.encoder.w_hh = Mat(hidden, hidden);
  m.encoder.b_h.assign(hidden, 0.0);
  {
    Prng rng(seed, "init-encoder");
    rand_uniform_fan(std::span<double>(m.encoder.w_xh.a), d, rng);
    rand_uniform_fan(std::span<double>(m.encoder.w_hh.a), hidden, rng);
  }

  m.scorer.kind = kind;
  m.scorer.q.assign(hidden, 0.0);
  {
    Prng rng(seed, "init-scorer");
    if (kind == ScorerKind::additive) {
      m.scorer.v.assign(hidden, 0.0);
      m.scorer.w1 = Mat(hidden, hidden);
      m.scorer.w2 = Mat(hidden, hidden);
      rand_uniform_fan(m.scorer.v, hidden, rng);
      rand_uniform_fan(std::span<double>(m.scorer.w1.a), hidden, rng);
      rand_uniform_fan(std::span<double>(m.scorer.w2.a), hidden, rng);
    }
    rand_uniform_fan(m.scorer.q, hidden, rng);
  }

  m.decoder.theta.assign(hidden, 0.0);
  m.decoder.bias = 0.0;
  {
    Prng rng(seed, "init-decoder");
    rand_uniform_fan(m.decoder.theta, hidden, rng);
  }
  return m;
}

namespace {

struct AdamState {
  Vec m, v;
  long t = 0;
};

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& st,
               const TrainConfig& cfg, long t) {
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double batch_loss(const AttentionModel& model, std::span<const Example> batch) {
  double s = 0.0;
  for (const Example& x : batch) s += bce(forward(model, x).y, x.label);
  return s;
}

}  // namespace

AttentionModel train_base(const Dataset& data, const AttentionModel& init, const TrainConfig& cfg,
                          std::uint64_t seed, TrainLog* log) {
  if (data.train.empty()) throw std::invalid_argument("train_base: empty training set");
  if (cfg.batch < 1 || cfg.epochs < 0 || cfg.lr <= 0.0)
    throw std::invalid_argument("train_base: bad training config");

  AttentionModel model = init;

  struct Slot {
    std::span<double> param;
    bool frozen;
    AdamState st;
  };
  std::vector<Slot> slots;
  auto add_slot = [&](std::span<double> p, bool frozen) {
    Slot s{p, frozen, {}};
    s.st.m.assign(p.size(), 0.0);
    s.st.v.assign(p.size(), 0.0);
    slots.push_back(std::move(s));
  };
  add_slot(std::span<double>(model.embeddings.matrix.a), model.frozen.embeddings);
  add_slot(std::span<double>(model.encoder.w_xh.a), model.frozen.encoder);
  add_slot(std::span<double>(model.encoder.w_hh.a), model.frozen.encoder);
  add_slot(model.encoder.b_h, model.frozen.encoder);
  if (model.scorer.kind == ScorerKind::additive) {
    add_slot(model.scorer.v, model.frozen.scorer);
    add_slot(std::span<double>(model.scorer.w1.a), model.frozen.scorer);
    add_slot(std::span<double>(model.scorer.w2.a), model.frozen.scorer);
  }
  add_slot(model.scorer.q, model.frozen.scorer);
  add_slot(model.decoder.theta, model.frozen.decoder);
  std::span<double> bias_span(&model.decoder.bias, 1);
  add_slot(bias_span, model.frozen.decoder);

  auto grads_of = [&](const ModelGrads& g) {
    std::vector<std::span<const double>> v;
    v.push_back(std::span<const double>(g.d_embeddings.a));
    v.push_back(std::span<const double>(g.d_w_xh.a));
    v.push_back(std::span<const double>(g.d_w_hh.a));
    v.push_back(g.d_b_h);
    if (model.scorer.kind == ScorerKind::additive) {
      v.push_back(g.d_v);
      v.push_back(std::span<const double>(g.d_w1.a));
      v.push_back(std::span<const double>(g.d_w2.a));
    }
    v.push_back(g.d_q);
    v.push_back(g.d_theta);
    v.push_back(std::span<const double>(&g.d_bias, 1));
    return v;
  };

  long step = 0;
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Prng shuffle_rng(seed, "base-epoch-shuffle", epoch);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::vector<Example> batch;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch) {
      batch.clear();
      for (std::size_t i = pos; i < std::min(order.size(), pos + cfg.batch); ++i)
        batch.push_back(data.train[order[i]]);
      loss_sum += batch_loss(model, batch);

      ModelGrads g = grad_all(model, batch);
      auto gs = grads_of(g);
      ++step;
      for (std::size_t si = 0; si < slots.size(); ++si) {
        if (slots[si].frozen) continue;
        adam_step(slots[si].param, gs[si], slots[si].st, cfg, step);
      }
      // pad/unk rows stay pinned even though the table trains
      if (!model.frozen.embeddings) {
        auto& emb = model.embeddings.matrix;
        for (int j = 0; j < emb.cols; ++j) emb(0, j) = 0.0;
      }
    }
    double mean_loss = loss_sum / static_cast<double>(data.train.size());
    if (!std::isfinite(mean_loss)) throw NumericError("train_base: loss diverged");
    if (log) log->epoch_loss.push_back(mean_loss);
  }

  if (log && !data.test.empty()) {
    std::vector<int> pred, lab;
    for (const Example& x : data.test) {
      pred.push_back(forward(model, x).y[0] >= 0.5 ? 1 : 0);
      lab.push_back(x.label);
    }
    log->final_f1 = f1_score(pred, lab);
  }
  return model;
}

ExampleCache make_cache(const AttentionModel& model, const Example& x) {
  ExampleCache c;
  ForwardResult fr = forward(model, x);
  c.h = std::move(fr.h);
  c.base_scores = std::move(fr.scores);
  c.base_w = std::move(fr.w.values);
  c.base_y = fr.y;
  c.base_p = fr.y[0];
  c.label = x.label;
  c.c.resize(c.h.rows);
  for (int t = 0; t < c.h.rows; ++t) c.c[t] = dot(model.decoder.theta, c.h.row(t));
  return c;
}

ScorerDeltaGrad grad_scorer_and_delta(const AttentionModel& model, const AttentionScorer& tilde,
                                      const ExampleCache& cache, std::span<const double> delta,
                                      const ScorerLossSpec& spec) {
  int s = cache.h.rows;
  if (!delta.empty() && static_cast<int>(delta.size()) < s)
    throw std::invalid_argument("grad_scorer_and_delta: delta shorter than sequence");

  ScorerFwd sfw = scorer_forward(tilde, cache.h);
  AttentionWeights wt = softmax(sfw.phi);

  double zt = model.decoder.bias;
  for (int t = 0; t < s; ++t) zt += wt.values[t] * cache.c[t];
  double pt = sigmoid(zt);

  bool need_perturbed = spec.d2_weight != 0.0 || spec.label_adv_weight != 0.0 || !delta.empty();
  double zh = zt, ph = pt;
  if (need_perturbed && !delta.empty()) {
    for (int t = 0; t < s; ++t) zh += delta[t] * cache.c[t];
    ph = sigmoid(zh);
  }

  ScorerDeltaGrad out;
  out.scorer = zero_scorer_grads(tilde);
  out.d_delta.assign(delta.size(), 0.0);

  int k_eff = std::min(spec.k, s);
  Vec target{cache.base_p, 1.0 - cache.base_p};
  Vec yt{pt, 1.0 - pt};
  Vec yh{ph, 1.0 - ph};

  out.comps.d1 = cross_entropy(target, yt);
  out.comps.d2 = cross_entropy(yt, yh);
  out.comps.ltopk = topk_surrogate(cache.base_w, wt.values, k_eff);
  out.comps.label_clean = bce(yt, cache.label);
  out.comps.label_adv = bce(yh, cache.label);

  double flip = spec.algorithm1_signs ? -1.0 : 1.0;
  double t1 = cache.label == 1 ? 1.0 : 0.0;

  // direct and perturbed pre-activation sensitivities; the d2 derivative picks
  // up -sigma'(z)*zh from its live first argument on top of the usual ph - pt
  double dzt = spec.d1_weight * (pt - cache.base_p) + spec.label_clean_weight * (pt - t1);
  double d2_dz = (ph - pt) - pt * (1.0 - pt) * zh;
  double dzh = flip * spec.d2_weight * d2_dz + spec.label_adv_weight * (ph - t1);

  Vec dw(s, 0.0);
  for (int t = 0; t < s; ++t) dw[t] = (dzt + dzh) * cache.c[t];

  if (spec.topk_weight != 0.0) {
    Vec sub = topk_surrogate_subgrad(cache.base_w, wt.values, k_eff);
    axpy(flip * spec.topk_weight, sub, dw);
  }

  Vec dphi = softmax_backward(wt.values, dw);
  scorer_backward(tilde, cache.h, sfw, dphi, &out.scorer, nullptr);

  if (!delta.empty()) {
    double dzd = spec.d2_weight * (ph - pt) + spec.label_adv_weight * (ph - t1);
    for (int t = 0; t < s; ++t) out.d_delta[t] = dzd * cache.c[t];
  }
  return out;
}

}  // namespace seat
