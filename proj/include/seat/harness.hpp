#pragma once

#include <string>
#include <vector>

#include "seat/config.hpp"
#include "seat/report.hpp"

namespace seat {

// Fixed file layout under cfg.out_dir.
struct RunPaths {
  std::string out_dir;
  std::string model() const { return out_dir + "/base_model.json"; }
  std::string seat_scorer() const { return out_dir + "/seat_scorer.json"; }
  std::string baseline_scorer(const std::string& method) const {
    return out_dir + "/" + method + "_scorer.json";
  }
  std::string manifest(const std::string& command) const {
    return out_dir + "/manifest_" + command + ".json";
  }
  std::string report(const std::string& suite, const std::string& method) const {
    return out_dir + "/report_" + suite + "_" + method + ".json";
  }
  std::string comparison(const std::string& suite) const {
    return out_dir + "/comparison_" + suite + ".json";
  }
  std::string csv(const std::string& suite, const std::string& method) const {
    return out_dir + "/" + suite + "_" + method + ".csv";
  }
};

struct LoadedData {
  Vocabulary vocab;
  EmbeddingTable table;
  Dataset data;
};

// Synthetic corpora are regenerated from (config, seed); file corpora load
// from the configured paths.
LoadedData obtain_data(const RunConfig& cfg);

void cmd_gen_data(const RunConfig& cfg);
void cmd_train_base(const RunConfig& cfg);
void cmd_train_seat(const RunConfig& cfg);
void cmd_train_baseline(const RunConfig& cfg, const std::string& method);  // rp | at
// suites: stability-embedding, stability-word, interpretability, certify,
// seed-study, ablation, all
void cmd_eval(const RunConfig& cfg, const std::string& which);
void cmd_certify(const RunConfig& cfg);
void cmd_ablation(const RunConfig& cfg);
void cmd_seed_study(const RunConfig& cfg);

// train-base, train-seat, then every evaluation suite
void run_full_pipeline(const RunConfig& cfg);

// deterministic outputs of a finished run (reports, checkpoints, CSVs),
// hashed; manifests carry wall-clock and are excluded
std::vector<std::pair<std::string, std::string>> run_output_hashes(const std::string& out_dir);

}  // namespace seat
