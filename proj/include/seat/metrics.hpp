#pragma once

#include <span>
#include <vector>

#include "seat/model.hpp"
#include "seat/seat.hpp"

namespace seat {

// sum p_i ln(p_i / q_i), q clamped at 1e-12, 0 ln 0 = 0; nats
double kl(std::span<const double> p, std::span<const double> q);

// 0.5 KL(p||m) + 0.5 KL(q||m), m = (p+q)/2; bounded by ln 2
double jsd(std::span<const double> p, std::span<const double> q);

// 0.5 sum |a_i - b_i|
double tvd(std::span<const double> a, std::span<const double> b);

// F1 of class 1
double f1_score(std::span<const int> pred, std::span<const int> label);

struct Rationale {
  std::vector<int> positions;  // ascending
};

// top-k attention positions as the explanation; k clamped to the length
Rationale extract_rationale(std::span<const double> w, int k);

// p(class_hat | x) - p(class_hat | x without rationale tokens); the shortened
// sequence is re-encoded. Empty remainder predicts [0.5, 0.5].
double comprehensiveness(const AttentionModel& model, const AttentionScorer& scorer,
                         const Example& x, int k);

// p(class_hat | x) - p(class_hat | rationale tokens only)
double sufficiency(const AttentionModel& model, const AttentionScorer& scorer, const Example& x,
                   int k);

struct SensitivityConfig {
  std::vector<double> sizes{0.1, 0.2, 0.3, 0.4, 0.5};  // rationale fractions
  int pgd_steps = 50;
  double eps_max = 10.0;
  double tol_rel = 1e-2;
  double tol_abs = 1e-5;  // bisection floor, bounds the probe count
};

struct SensitivityResult {
  std::vector<double> eps;  // one radius per size fraction
  double auc = 0.0;         // trapezoid over size fractions
};

// Smallest Frobenius radius at which a PGD attack on the rationale token
// embeddings flips the prediction, found by bisection; eps_max when no flip.
SensitivityResult sensitivity(const AttentionModel& model, const AttentionScorer& scorer,
                              const Example& x, const SensitivityConfig& cfg);

struct SeatCertificate {
  double gamma_hat = 0.0;  // max closeness gap
  double beta_hat = 0.0;   // min top-k overlap
  double alpha_hat = 0.0;  // max stability gap under PGD (lower bound)
  double radius = 0.0;
  int k = 0;
};

struct CertifyConfig {
  int pgd_steps = 10;
  double alpha = 0.0;  // 0 means 2*radius/steps
};

SeatCertificate certify(const AttentionModel& base, const AttentionScorer& tilde,
                        std::span<const Example> examples, int k, double radius, BallNorm norm,
                        const CertifyConfig& cfg);

struct MetricReport {
  double jsd_mean = 0.0, jsd_sum = 0.0;
  double tvd_mean = 0.0, tvd_sum = 0.0;
  double f1 = 0.0;
  double comp = 0.0;
  double suff = 0.0;
  double sens_auc = 0.0;
  long n_examples = 0;
};

struct Aggregate {
  double mean = 0.0;
  double sum = 0.0;
};

Aggregate aggregate(std::span<const double> values);

}  // namespace seat
