#include "seat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seat/errors.hpp"

namespace seat {

namespace {

constexpr double kProbFloor = 1e-12;

int predicted_class(std::span<const double> y) { return y[0] >= 0.5 ? 1 : 0; }

// probability assigned to the predicted class c
double class_prob(std::span<const double> y, int c) { return c == 1 ? y[0] : y[1]; }

Example subsequence(const Example& x, const std::vector<bool>& keep, bool invert) {
  Example out;
  out.label = x.label;
  for (int t = 0; t < x.size(); ++t)
    if (keep[t] != invert) out.token_ids.push_back(x.token_ids[t]);
  return out;
}

double frobenius(const Mat& m) { return norm2(std::span<const double>(m.a)); }

}  // namespace

double kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 ln 0 = 0
    s += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
  }
  return s;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: size mismatch");
  Vec m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

double tvd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("tvd: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return 0.5 * s;
}

double f1_score(std::span<const int> pred, std::span<const int> label) {
  if (pred.size() != label.size() || pred.empty())
    throw std::invalid_argument("f1_score: need equal-length non-empty inputs");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != 0 && pred[i] != 1)
      throw std::invalid_argument("f1_score: predictions must be 0 or 1");
    if (label[i] != 0 && label[i] != 1)
      throw std::invalid_argument("f1_score: labels must be 0 or 1");
    if (pred[i] == 1 && label[i] == 1) ++tp;
    if (pred[i] == 1 && label[i] == 0) ++fp;
    if (pred[i] == 0 && label[i] == 1) ++fn;
  }
  double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double rec = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

Rationale extract_rationale(std::span<const double> w, int k) {
  int k_eff = std::min<int>(k, static_cast<int>(w.size()));
  if (k_eff < 1) throw std::invalid_argument("extract_rationale: k must be positive");
  Rationale r;
  r.positions = topk_indices(w, k_eff);
  std::sort(r.positions.begin(), r.positions.end());
  return r;
}

double comprehensiveness(const AttentionModel& model, const AttentionScorer& scorer,
                         const Example& x, int k) {
  ForwardResult fr = forward(model, scorer, x);
  int c = predicted_class(fr.y);
  Rationale r = extract_rationale(fr.w.values, k);

  std::vector<bool> keep(x.size(), false);
  for (int t : r.positions) keep[t] = true;
  Example rest = subsequence(x, keep, true);  // drop rationale tokens

  Vec y_rest{0.5, 0.5};
  if (!rest.token_ids.empty()) y_rest = forward(model, scorer, rest).y;
  return class_prob(fr.y, c) - class_prob(y_rest, c);
}

double sufficiency(const AttentionModel& model, const AttentionScorer& scorer, const Example& x,
                   int k) {
  ForwardResult fr = forward(model, scorer, x);
  int c = predicted_class(fr.y);
  Rationale r = extract_rationale(fr.w.values, k);

  std::vector<bool> keep(x.size(), false);
  for (int t : r.positions) keep[t] = true;
  Example only = subsequence(x, keep, false);  // keep rationale tokens

  Vec y_only{0.5, 0.5};
  if (!only.token_ids.empty()) y_only = forward(model, scorer, only).y;
  return class_prob(fr.y, c) - class_prob(y_only, c);
}

namespace {

// PGD ascent on label BCE over the rationale rows of the embedded input,
// inside a Frobenius ball of radius eps. Returns true when the prediction
// class changes.
bool attack_flips(const AttentionModel& model, const AttentionScorer& scorer, const Mat& xe,
                  int label, int clean_class, const std::vector<int>& rationale, double eps,
                  int steps) {
  if (eps <= 0.0) return false;
  int s = xe.rows, d = xe.cols;
  std::vector<bool> active(s, false);
  for (int t : rationale) active[t] = true;

  Mat delta(s, d);
  double step_len = 2.0 * eps / static_cast<double>(steps);
  Mat xp(s, d);
  for (int step = 0; step < steps; ++step) {
    for (std::size_t i = 0; i < xp.a.size(); ++i) xp.a[i] = xe.a[i] + delta.a[i];
    Mat g = input_gradient(model, scorer, xp, label);
    for (int t = 0; t < s; ++t)
      if (!active[t]) std::fill(g.row(t).begin(), g.row(t).end(), 0.0);
    double gn = frobenius(g);
    if (gn == 0.0) break;
    for (std::size_t i = 0; i < delta.a.size(); ++i)
      delta.a[i] += step_len * g.a[i] / gn;
    double dn = frobenius(delta);
    if (dn > eps) {
      double sc = eps / dn;
      for (double& v : delta.a) v *= sc;
    }
  }
  for (std::size_t i = 0; i < xp.a.size(); ++i) xp.a[i] = xe.a[i] + delta.a[i];
  Vec y = forward_embedded(model, scorer, xp).y;
  return predicted_class(y) != clean_class;
}

}  // namespace

SensitivityResult sensitivity(const AttentionModel& model, const AttentionScorer& scorer,
                              const Example& x, const SensitivityConfig& cfg) {
  if (cfg.sizes.empty()) throw std::invalid_argument("sensitivity: no rationale sizes");
  if (!std::is_sorted(cfg.sizes.begin(), cfg.sizes.end()))
    throw std::invalid_argument("sensitivity: sizes must be ascending");
  if (cfg.pgd_steps < 1 || cfg.eps_max <= 0.0)
    throw std::invalid_argument("sensitivity: bad attack config");

  ForwardResult fr = forward(model, scorer, x);
  int clean_class = predicted_class(fr.y);
  int s = x.size();

  SensitivityResult out;
  out.eps.reserve(cfg.sizes.size());
  for (double frac : cfg.sizes) {
    int k_r = std::max(1, static_cast<int>(std::ceil(frac * s)));
    k_r = std::min(k_r, s);
    Rationale r = extract_rationale(fr.w.values, k_r);

    auto probe = [&](double eps) {
      return attack_flips(model, scorer, fr.xe, x.label, clean_class, r.positions, eps,
                          cfg.pgd_steps);
    };

    double found;
    if (!probe(cfg.eps_max)) {
      found = cfg.eps_max;
    } else {
      double lo = 0.0, hi = cfg.eps_max;
      while (hi - lo > std::max(cfg.tol_rel * hi, cfg.tol_abs)) {
        double mid = 0.5 * (lo + hi);
        if (probe(mid))
          hi = mid;
        else
          lo = mid;
      }
      found = hi;
    }
    out.eps.push_back(found);
  }

  if (out.eps.size() == 1) {
    out.auc = out.eps[0];
  } else {
    double auc = 0.0;
    for (std::size_t i = 0; i + 1 < out.eps.size(); ++i)
      auc += (cfg.sizes[i + 1] - cfg.sizes[i]) * 0.5 * (out.eps[i] + out.eps[i + 1]);
    out.auc = auc;
  }
  return out;
}

SeatCertificate certify(const AttentionModel& base, const AttentionScorer& tilde,
                        std::span<const Example> examples, int k, double radius, BallNorm norm,
                        const CertifyConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("certify: no examples");
  if (k < 1 || radius < 0.0) throw std::invalid_argument("certify: bad k or radius");

  SeatCertificate cert;
  cert.radius = radius;
  cert.k = k;
  cert.gamma_hat = 0.0;
  cert.beta_hat = 1.0;
  cert.alpha_hat = 0.0;

  SeatConfig pgd_cfg;
  pgd_cfg.radius = radius;
  pgd_cfg.norm = norm;
  pgd_cfg.inner_steps = cfg.pgd_steps;
  pgd_cfg.alpha = cfg.alpha;
  pgd_cfg.k = k;

  for (const Example& x : examples) {
    ExampleCache cache = make_cache(base, x);
    std::span<const ExampleCache> one(&cache, 1);

    Perturbation pert = pgd_inner(base, tilde, one, pgd_cfg);
    ObjectiveParts parts = seat_objective(base, tilde, one, pert.delta, pgd_cfg);

    cert.gamma_hat = std::max(cert.gamma_hat, parts.d1);
    cert.alpha_hat = std::max(cert.alpha_hat, parts.d2);

    Vec wt = softmax(attend_scores(tilde, cache.h)).values;
    double ov = topk_overlap(cache.base_w, wt, std::min<int>(k, x.size()));
    cert.beta_hat = std::min(cert.beta_hat, ov);
  }
  return cert;
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: empty input");
  Aggregate a;
  for (double v : values) a.sum += v;
  a.mean = a.sum / static_cast<double>(values.size());
  return a;
}

}  // namespace seat
