#include "seat/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "seat/errors.hpp"
#include "seat/prng.hpp"

namespace seat {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_uint(const std::string& s, std::uint64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

void fill_unk_row(Mat& m) {
  Prng rng(0, "unk-embedding");
  for (int j = 0; j < m.cols; ++j) m(1, j) = rng.uniform(-1.0, 1.0);
}

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

Vocabulary Vocabulary::with_reserved() {
  Vocabulary v;
  v.add("<pad>");
  v.add("<unk>");
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  int id = size();
  id_to_token.push_back(token);
  token_to_id.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? unk_id : it->second;
}

EmbeddedVocab load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_embeddings: cannot open " + path);

  Vocabulary vocab = Vocabulary::with_reserved();
  std::vector<Vec> rows;
  int dim = -1;
  std::string line;
  int lineno = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first_content_line && fields.size() == 2) {
      std::uint64_t a, b;
      if (parse_uint(fields[0], a) && parse_uint(fields[1], b)) {
        first_content_line = false;
        continue;  // "count dim" header
      }
    }
    first_content_line = false;
    if (fields.size() < 2)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected token and values");
    const std::string& token = fields[0];
    if (token == "<pad>" || token == "<unk>")
      throw IoError(path + ":" + std::to_string(lineno) + ": reserved token " + token);
    Vec values(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (!parse_double(fields[i], values[i - 1]) || !std::isfinite(values[i - 1]))
        throw IoError(path + ":" + std::to_string(lineno) + ": bad value '" + fields[i] + "'");
    }
    if (dim < 0) dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != dim)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                    " values, got " + std::to_string(values.size()));
    if (vocab.contains(token)) continue;  // first occurrence wins
    vocab.add(token);
    rows.push_back(std::move(values));
  }
  if (dim < 0) throw IoError("load_embeddings: " + path + " has no embedding rows");

  EmbeddingTable table;
  table.matrix = Mat(vocab.size(), dim);
  fill_unk_row(table.matrix);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int j = 0; j < dim; ++j) table.matrix(static_cast<int>(r) + 2, j) = rows[r][j];
  return {std::move(vocab), std::move(table)};
}

void write_embeddings(const std::string& path, const Vocabulary& vocab,
                      const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("write_embeddings: cannot open " + path);
  for (int id = 2; id < vocab.size(); ++id) {
    out << vocab.id_to_token[id];
    for (int j = 0; j < table.dim(); ++j) out << ' ' << fmt_double(table.matrix(id, j));
    out << '\n';
  }
  if (!out) throw IoError("write_embeddings: write failed for " + path);
}

Dataset load_dataset(const std::string& path, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw std::invalid_argument("load_dataset: max_len must be positive");
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset: cannot open " + path);

  Dataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec.contains("label") ||
        !rec.contains("split"))
      throw IoError(path + ":" + std::to_string(lineno) + ": need text, label, split fields");
    if (!rec["text"].is_string() || !rec["split"].is_string() ||
        !rec["label"].is_number_integer())
      throw IoError(path + ":" + std::to_string(lineno) + ": wrong field types");

    int label = rec["label"].get<int>();
    if (label != 0 && label != 1)
      throw IoError(path + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    std::string split = rec["split"].get<std::string>();
    if (split != "train" && split != "test")
      throw IoError(path + ":" + std::to_string(lineno) + ": split must be train or test");

    std::string text = rec["text"].get<std::string>();
    for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto tokens = split_ws(text);
    if (tokens.empty())
      throw IoError(path + ":" + std::to_string(lineno) + ": text tokenizes to nothing");

    Example ex;
    ex.label = label;
    for (const auto& t : tokens) {
      if (static_cast<int>(ex.token_ids.size()) >= max_len) break;
      ex.token_ids.push_back(vocab.id_of(t));
    }
    (split == "train" ? out.train : out.test).push_back(std::move(ex));
  }
  return out;
}

namespace {

struct KeywordLayout {
  int pos_base = 2;
  int neg_base = 0;
  int dist_base = 0;
  int dist_count = 0;
};

KeywordLayout layout_of(const SyntheticSpec& spec) {
  KeywordLayout l;
  l.pos_base = 2;
  l.neg_base = l.pos_base + spec.pos_keywords;
  l.dist_base = l.neg_base + spec.neg_keywords;
  l.dist_count = spec.vocab_size - l.dist_base;
  return l;
}

void check_spec(const SyntheticSpec& spec) {
  auto l = layout_of(spec);
  if (spec.pos_keywords < 1 || spec.neg_keywords < 1 || l.dist_count < 2)
    throw std::invalid_argument("generate_synthetic: vocab too small for keyword layout");
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw std::invalid_argument("generate_synthetic: bad length range");
  if (spec.dim < 1 || spec.train_count < 2 || spec.test_count < 2)
    throw std::invalid_argument("generate_synthetic: bad counts");
  if (spec.max_keywords_per_sentence < 1)
    throw std::invalid_argument("generate_synthetic: need at least one keyword per sentence");
}

std::vector<int> balanced_labels(int n, Prng& rng) {
  std::vector<int> labels(n, 0);
  for (int i = 0; i < n / 2; ++i) labels[i] = 1;
  rng.shuffle(labels);
  return labels;
}

// Each sentence carries min(max_keywords_per_sentence, len) keyword tokens; the
// label is the class holding the strict majority of them. Minority counts are
// skewed toward near-ties so the margin distribution has real spread: a model
// cannot drive every example to the same confidence.
int draw_minority(int n_kw, Prng& rng) {
  int cap = (n_kw - 1) / 2;  // strict majority always
  if (cap == 0) return 0;
  // weights 1..cap+1 favor the hardest (largest-minority) sentences
  int total = (cap + 1) * (cap + 2) / 2;
  int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
  for (int m = cap;; --m) {
    r -= m + 1;
    if (r < 0) return m;
  }
}

Example make_sentence(const SyntheticSpec& spec, const KeywordLayout& l, int label, Prng& rng) {
  int len = spec.min_len + static_cast<int>(rng.below(spec.max_len - spec.min_len + 1));
  int n_kw = std::min(spec.max_keywords_per_sentence, len);
  int n_minor = draw_minority(n_kw, rng);

  Example ex;
  ex.label = label;
  ex.token_ids.assign(len, 0);
  auto kw_pos = rng.sample_without_replacement(len, n_kw);
  std::vector<bool> is_kw(len, false);
  for (auto p : kw_pos) is_kw[p] = true;

  int major_base = label == 1 ? l.pos_base : l.neg_base;
  int major_count = label == 1 ? spec.pos_keywords : spec.neg_keywords;
  int minor_base = label == 1 ? l.neg_base : l.pos_base;
  int minor_count = label == 1 ? spec.neg_keywords : spec.pos_keywords;
  int kw_left = n_kw, minor_left = n_minor;
  for (int t = 0; t < len; ++t) {
    if (is_kw[t]) {
      // spread the minority over the keyword slots without bias toward either end
      bool minor = rng.below(static_cast<std::uint64_t>(kw_left)) <
                   static_cast<std::uint64_t>(minor_left);
      if (minor) {
        ex.token_ids[t] = minor_base + static_cast<int>(rng.below(minor_count));
        --minor_left;
      } else {
        ex.token_ids[t] = major_base + static_cast<int>(rng.below(major_count));
      }
      --kw_left;
    } else {
      ex.token_ids[t] = l.dist_base + static_cast<int>(rng.below(l.dist_count));
    }
  }
  return ex;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  auto l = layout_of(spec);

  SyntheticCorpus corpus;
  corpus.vocab = Vocabulary::with_reserved();
  for (int i = 0; i < spec.pos_keywords; ++i) corpus.vocab.add("pos" + std::to_string(i));
  for (int i = 0; i < spec.neg_keywords; ++i) corpus.vocab.add("neg" + std::to_string(i));
  for (int i = 0; i < l.dist_count; ++i) corpus.vocab.add("w" + std::to_string(i));

  corpus.table.matrix = Mat(spec.vocab_size, spec.dim);
  {
    Prng rng(seed, "syn-embeddings");
    for (int r = 1; r < spec.vocab_size; ++r)
      for (int j = 0; j < spec.dim; ++j) corpus.table.matrix(r, j) = rng.uniform(-1.0, 1.0);
    // Sentiment-bearing words cluster in pretrained embedding spaces; mirror
    // that by shifting the keyword rows along a shared class axis. Distractor
    // rows get their own label-uncorrelated shift along the same axis, so a
    // mean-pool readout is corrupted by whichever fillers a sentence happens
    // to carry and the clean signal is only reachable by attending keywords.
    if (spec.kw_sep > 0.0 || spec.dist_sep > 0.0) {
      Vec axis(spec.dim);
      double n2 = 0.0;
      for (double& a : axis) {
        a = rng.normal();
        n2 += a * a;
      }
      double inv = 1.0 / std::sqrt(n2);
      for (int r = l.pos_base; r < l.dist_base; ++r) {
        double shift = r < l.neg_base ? spec.kw_sep : -spec.kw_sep;
        for (int j = 0; j < spec.dim; ++j)
          corpus.table.matrix(r, j) += shift * axis[j] * inv;
      }
      for (int r = l.dist_base; r < spec.vocab_size; ++r) {
        double shift = spec.dist_sep * rng.normal();
        for (int j = 0; j < spec.dim; ++j)
          corpus.table.matrix(r, j) += shift * axis[j] * inv;
      }
    }
  }

  for (int part = 0; part < 2; ++part) {
    const bool is_train = part == 0;
    int count = is_train ? spec.train_count : spec.test_count;
    Prng label_rng(seed, is_train ? "syn-labels-train" : "syn-labels-test");
    auto labels = balanced_labels(count, label_rng);
    auto& dst = is_train ? corpus.data.train : corpus.data.test;
    dst.reserve(count);
    for (int i = 0; i < count; ++i) {
      Prng ex_rng(seed, is_train ? "syn-example-train" : "syn-example-test", i);
      dst.push_back(make_sentence(spec, l, labels[i], ex_rng));
    }
  }
  return corpus;
}

std::optional<int> synthetic_label(const std::vector<int>& token_ids, const SyntheticSpec& spec,
                                   const Vocabulary& vocab) {
  (void)vocab;
  auto l = layout_of(spec);
  int pos = 0, neg = 0;
  for (int id : token_ids) {
    if (id >= l.pos_base && id < l.neg_base) ++pos;
    if (id >= l.neg_base && id < l.dist_base) ++neg;
  }
  if (pos > neg) return 1;
  if (neg > pos) return 0;
  return std::nullopt;  // tie or no keywords: label undefined
}

int nearest_synonym(int token_id, const EmbeddingTable& table, int pad_id) {
  if (token_id < 0 || token_id >= table.rows())
    throw std::invalid_argument("nearest_synonym: token id out of range");
  auto query = table.row(token_id);
  double qn = norm2(query);
  if (qn == 0.0) throw std::invalid_argument("nearest_synonym: zero-norm query row");

  int best = -1;
  double best_sim = 0.0;
  for (int id = 0; id < table.rows(); ++id) {
    if (id == token_id || id == pad_id) continue;
    auto cand = table.row(id);
    double cn = norm2(cand);
    if (cn == 0.0) continue;
    double sim = dot(query, cand) / (qn * cn);
    if (best < 0 || sim > best_sim) {
      best = id;
      best_sim = sim;
    }
  }
  if (best < 0) throw std::invalid_argument("nearest_synonym: no candidate rows");
  return best;
}

Example perturb_words(const Example& x, int n, const EmbeddingTable& table, Prng& rng) {
  if (n < 0) throw std::invalid_argument("perturb_words: n must be non-negative");
  Example out = x;
  if (n == 0) return out;

  std::vector<int> replaceable;
  for (int t = 0; t < x.size(); ++t) {
    int id = x.token_ids[t];
    if (id == 0) continue;
    if (norm2(table.row(id)) == 0.0) continue;
    replaceable.push_back(t);
  }
  int n_eff = std::min<int>(n, static_cast<int>(replaceable.size()));
  if (n_eff == 0) return out;

  auto picks = rng.sample_without_replacement(replaceable.size(), n_eff);
  for (auto p : picks) {
    int t = replaceable[p];
    out.token_ids[t] = nearest_synonym(x.token_ids[t], table);
  }
  return out;
}

}  // namespace seat
