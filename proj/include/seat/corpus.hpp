#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seat/linalg.hpp"
#include "seat/prng.hpp"

namespace seat {

class Prng;

// Token ids 0 and 1 are reserved for padding and unknown tokens.
struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  int pad_id = 0;
  int unk_id = 1;

  static Vocabulary with_reserved();

  int size() const { return static_cast<int>(id_to_token.size()); }
  int add(const std::string& token);  // idempotent, returns id
  // unk_id for unseen tokens
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const { return token_to_id.count(token) != 0; }
};

// Row per vocabulary id; the pad row stays all-zero.
struct EmbeddingTable {
  Mat matrix;

  int rows() const { return matrix.rows; }
  int dim() const { return matrix.cols; }
  std::span<const double> row(int id) const { return matrix.row(id); }
};

struct Example {
  std::vector<int> token_ids;  // never empty, never pad
  int label = 0;               // 0 or 1
  int size() const { return static_cast<int>(token_ids.size()); }
};

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> test;
};

struct EmbeddedVocab {
  Vocabulary vocab;
  EmbeddingTable table;
};

// Whitespace-separated text format, one token per line followed by its
// coordinates. An optional "count dim" integer header line is skipped.
// Duplicate tokens keep the first occurrence. Errors cite line numbers.
EmbeddedVocab load_embeddings(const std::string& path);

// Inverse of load_embeddings for the non-reserved rows.
void write_embeddings(const std::string& path, const Vocabulary& vocab, const EmbeddingTable& table);

// JSON-lines records {"text": ..., "label": 0|1, "split": "train"|"test"}.
// Text is lowercased and whitespace-tokenized; records that tokenize to
// nothing are rejected; sequences are truncated to max_len.
Dataset load_dataset(const std::string& path, const Vocabulary& vocab, int max_len);

struct SyntheticSpec {
  int vocab_size = 200;  // includes the two reserved ids
  int dim = 16;
  int train_count = 2000;
  int test_count = 500;
  int min_len = 9;
  int max_len = 10;
  int pos_keywords = 8;
  int neg_keywords = 8;
  int max_keywords_per_sentence = 7;  // odd: strict keyword majority decides the label
  double kw_sep = 0.0;    // keyword embedding shift along the shared class axis
  double dist_sep = 0.0;  // std of the label-free distractor shift on that axis
};

struct SyntheticCorpus {
  Vocabulary vocab;
  EmbeddingTable table;
  Dataset data;
};

// Keyword-driven binary task: every sentence carries min(max_keywords, len)
// keyword tokens from both classes, the label is the class with the strict
// majority, remaining positions are distractors. Minority counts skew toward
// near-ties so example margins vary. Labels are exactly balanced. Embeddings
// are iid U[-1,1] except the zero pad row. Fully determined by (spec, seed).
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Label implied by keyword majority, or nullopt when the rule is ambiguous.
std::optional<int> synthetic_label(const std::vector<int>& token_ids, const SyntheticSpec& spec,
                                   const Vocabulary& vocab);

// Cosine-nearest row excluding the query itself, the pad row, and zero-norm
// rows. Ties resolve to the lowest id. Zero-norm query is an error.
int nearest_synonym(int token_id, const EmbeddingTable& table, int pad_id = 0);

// Replaces min(n, replaceable positions) tokens with their nearest synonym;
// positions are drawn uniformly without replacement.
Example perturb_words(const Example& x, int n, const EmbeddingTable& table, Prng& rng);

}  // namespace seat
