#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seat/corpus.hpp"
#include "seat/metrics.hpp"
#include "seat/model.hpp"
#include "seat/perturb.hpp"
#include "seat/seat.hpp"

namespace seat {

// Flat key=value run configuration. Every knob has a default; files and
// --set overrides replace individual keys. Unknown keys are config errors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";

  std::string data_source = "synthetic";  // synthetic | files
  std::string embeddings_path;
  std::string dataset_path;

  SyntheticSpec syn;

  int model_hidden = 32;
  ScorerKind scorer_kind = ScorerKind::additive;
  int model_max_len = 64;

  TrainConfig train;
  SeatConfig seat;

  int rationale_k = 7;
  SensitivityConfig sens;
  int sens_sample = 100;    // sensitivity subset size; 0 = full test set
  int interp_sample = 0;    // comp/suff subset size; 0 = full test set

  double perturb_delta_x = 1e-3;                        // headline radius
  std::vector<double> perturb_sweep{0.005, 0.01, 0.05}; // extra radii, embedding suite only
  bool perturb_all_positions = false;
  int perturb_word_n = 1;
  int study_seeds = 5;

  int certify_pgd_steps = 10;
  double ablation_delta_x = 0.01;

  // parse "key = value" lines; '#' starts a comment
  static RunConfig from_file(const std::string& path);
  static RunConfig from_defaults();
  void set(const std::string& key, const std::string& value);
  void apply_overrides(const std::vector<std::string>& key_eq_value);
  void validate() const;

  // canonical key-sorted serialization; hashing this pins a run's identity
  std::string canonical() const;
  std::string hash() const;
};

}  // namespace seat
