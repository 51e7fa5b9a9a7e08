#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seat/metrics.hpp"
#include "seat/perturb.hpp"

namespace seat {

inline constexpr int kReportVersion = 1;

// One report per method per suite. The schema is closed: exactly these
// top-level keys, exactly the MetricReport fields inside "metrics".
struct Report {
  int version = kReportVersion;
  std::string method;  // vanilla | seat | attention-rp | attention-at
  std::string config_hash;
  MetricReport metrics;
  std::optional<SeatCertificate> certificate;
};

std::string report_to_json(const Report& r);
Report report_from_json(const std::string& text);  // rejects unknown keys
void write_report(const std::string& path, const Report& r);

// Element-wise SEAT / vanilla quotients for the stability aggregates.
struct Comparison {
  int version = kReportVersion;
  std::string config_hash;
  std::string suite;
  double jsd_mean_ratio = 0.0, jsd_sum_ratio = 0.0;
  double tvd_mean_ratio = 0.0, tvd_sum_ratio = 0.0;
};

Comparison make_comparison(const std::string& suite, const std::string& config_hash,
                           const MetricReport& seat_metrics, const MetricReport& vanilla_metrics);
void write_comparison(const std::string& path, const Comparison& c);

void write_stability_csv(const std::string& path, const std::vector<StabilityRow>& rows);
void write_seed_study_csv(const std::string& path, const std::vector<SeedStudyRow>& rows);

// Execution record: config snapshot, input/output content hashes, timings.
// Written atomically once the command finishes.
struct RunManifest {
  int version = kReportVersion;
  std::string command;
  std::string config_hash;
  std::string config_snapshot;
  std::string prng = "splitmix64-streams-v1";
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
  double wall_seconds = 0.0;
  std::map<std::string, std::vector<double>> series;  // per-epoch diagnostics
  std::map<std::string, double> scalars;
};

void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

}  // namespace seat
