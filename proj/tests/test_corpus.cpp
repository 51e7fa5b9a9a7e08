#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

#include "doctest.h"
#include "seat/corpus.hpp"
#include "seat/errors.hpp"
#include "seat/linalg.hpp"
#include "seat/prng.hpp"

using namespace seat;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.vocab_size = 40;
  s.dim = 8;
  s.train_count = 60;
  s.test_count = 20;
  s.min_len = 6;
  s.max_len = 9;
  s.pos_keywords = 4;
  s.neg_keywords = 4;
  s.max_keywords_per_sentence = 5;
  return s;
}

// keyword id ranges mirror the generator's vocabulary order
int pos_base() { return 2; }
int neg_base(const SyntheticSpec& s) { return 2 + s.pos_keywords; }
int dist_base(const SyntheticSpec& s) { return 2 + s.pos_keywords + s.neg_keywords; }

std::string temp_path(const char* name) {
  return std::string("corpus_test_") + name + ".tmp";
}

}  // namespace

TEST_CASE("synthetic corpus is reproducible and balanced") {
  SyntheticSpec spec = small_spec();
  SyntheticCorpus a = generate_synthetic(spec, 11);
  SyntheticCorpus b = generate_synthetic(spec, 11);

  REQUIRE(a.data.train.size() == static_cast<std::size_t>(spec.train_count));
  REQUIRE(a.data.test.size() == static_cast<std::size_t>(spec.test_count));
  CHECK(a.table.matrix.a == b.table.matrix.a);
  for (std::size_t i = 0; i < a.data.train.size(); ++i) {
    CHECK(a.data.train[i].token_ids == b.data.train[i].token_ids);
    CHECK(a.data.train[i].label == b.data.train[i].label);
  }

  int pos = 0;
  for (const Example& x : a.data.train) pos += x.label;
  CHECK(pos * 2 == spec.train_count);
  pos = 0;
  for (const Example& x : a.data.test) pos += x.label;
  CHECK(pos * 2 == spec.test_count);

  SyntheticCorpus c = generate_synthetic(spec, 12);
  CHECK(a.data.train[0].token_ids != c.data.train[0].token_ids);
}

TEST_CASE("sentence lengths and token ids respect the spec") {
  SyntheticSpec spec = small_spec();
  SyntheticCorpus corp = generate_synthetic(spec, 5);
  for (const Example& x : corp.data.train) {
    CHECK(x.size() >= spec.min_len);
    CHECK(x.size() <= spec.max_len);
    for (int id : x.token_ids) {
      CHECK(id >= 2);  // reserved ids never appear in sentences
      CHECK(id < spec.vocab_size);
    }
  }
}

TEST_CASE("stored labels agree with the keyword-majority rule") {
  SyntheticSpec spec = small_spec();
  SyntheticCorpus corp = generate_synthetic(spec, 17);
  auto check_split = [&](const std::vector<Example>& xs) {
    for (const Example& x : xs) {
      auto implied = synthetic_label(x.token_ids, spec, corp.vocab);
      REQUIRE(implied.has_value());
      CHECK(*implied == x.label);
      // and the majority is strict: counting by id range must agree
      int p = 0, n = 0;
      for (int id : x.token_ids) {
        if (id >= pos_base() && id < neg_base(spec)) ++p;
        else if (id >= neg_base(spec) && id < dist_base(spec)) ++n;
      }
      CHECK(p != n);
      CHECK(((p > n) ? 1 : 0) == x.label);
    }
  };
  check_split(corp.data.train);
  check_split(corp.data.test);
}

TEST_CASE("synthetic_label handles edge sentences") {
  SyntheticSpec spec = small_spec();
  SyntheticCorpus corp = generate_synthetic(spec, 3);
  int pos_kw = pos_base();
  int neg_kw = neg_base(spec);
  int filler = dist_base(spec);

  // a single positive keyword among distractors labels 1
  std::vector<int> one_pos{filler, pos_kw, filler, filler};
  CHECK(synthetic_label(one_pos, spec, corp.vocab) == std::optional<int>(1));

  std::vector<int> one_neg{neg_kw, filler};
  CHECK(synthetic_label(one_neg, spec, corp.vocab) == std::optional<int>(0));

  // balanced keyword counts are ambiguous, as is a keyword-free sentence
  std::vector<int> tie{pos_kw, neg_kw, filler};
  CHECK(!synthetic_label(tie, spec, corp.vocab).has_value());
  std::vector<int> none{filler, filler};
  CHECK(!synthetic_label(none, spec, corp.vocab).has_value());
}

TEST_CASE("embedding table keeps the pad row zero") {
  SyntheticCorpus corp = generate_synthetic(small_spec(), 9);
  for (double v : corp.table.row(0)) CHECK(v == 0.0);
  // non-reserved rows are populated
  double nz = 0.0;
  for (double v : corp.table.row(2)) nz += std::fabs(v);
  CHECK(nz > 0.0);
}

TEST_CASE("class-axis shifts separate keyword embeddings when enabled") {
  SyntheticSpec spec = small_spec();
  spec.kw_sep = 3.0;
  SyntheticCorpus shifted = generate_synthetic(spec, 21);
  SyntheticSpec plain_spec = spec;
  plain_spec.kw_sep = 0.0;
  SyntheticCorpus plain = generate_synthetic(plain_spec, 21);

  // the shift moves every positive keyword one way and every negative
  // keyword the other way along a single direction
  Vec axis(spec.dim, 0.0);
  for (int j = 0; j < spec.dim; ++j)
    axis[j] = shifted.table.matrix(pos_base(), j) - plain.table.matrix(pos_base(), j);
  double an = norm2(axis);
  CHECK(an == doctest::Approx(spec.kw_sep).epsilon(1e-9));
  for (int r = pos_base(); r < dist_base(spec); ++r) {
    Vec d(spec.dim);
    for (int j = 0; j < spec.dim; ++j)
      d[j] = shifted.table.matrix(r, j) - plain.table.matrix(r, j);
    double proj = dot(d, axis) / (an * an);
    double expect = r < neg_base(spec) ? 1.0 : -1.0;
    CHECK(proj == doctest::Approx(expect).epsilon(1e-9));
    // and the move is purely along the axis
    CHECK(norm2(d) == doctest::Approx(std::fabs(proj) * an).epsilon(1e-9));
  }
}

TEST_CASE("nearest_synonym matches a brute-force cosine scan") {
  SyntheticCorpus corp = generate_synthetic(small_spec(), 31);
  const Mat& t = corp.table.matrix;
  for (int id = 2; id < t.rows; ++id) {
    int got = nearest_synonym(id, corp.table);
    int best = -1;
    double best_cos = -2.0;
    for (int r = 1; r < t.rows; ++r) {
      if (r == id) continue;
      double nr = norm2(t.row(r));
      if (nr == 0.0) continue;
      double c = dot(t.row(id), t.row(r)) / (norm2(t.row(id)) * nr);
      if (c > best_cos) {
        best_cos = c;
        best = r;
      }
    }
    CHECK(got == best);
  }
}

TEST_CASE("perturb_words replaces up to n positions with synonyms") {
  SyntheticCorpus corp = generate_synthetic(small_spec(), 13);
  const Example& x = corp.data.test[0];

  Prng rng0(1, "word-test", 0);
  Example same = perturb_words(x, 0, corp.table, rng0);
  CHECK(same.token_ids == x.token_ids);
  CHECK(same.label == x.label);

  for (int n : {1, 3, 100}) {
    Prng rng(1, "word-test", static_cast<std::uint64_t>(n));
    Example y = perturb_words(x, n, corp.table, rng);
    REQUIRE(y.size() == x.size());
    int changed = 0;
    for (int i = 0; i < x.size(); ++i) {
      if (y.token_ids[i] != x.token_ids[i]) {
        ++changed;
        CHECK(y.token_ids[i] == nearest_synonym(x.token_ids[i], corp.table));
      }
    }
    CHECK(changed <= std::min(n, x.size()));
    if (n <= x.size()) CHECK(changed == n);
  }
}

TEST_CASE("embeddings file round-trips through save and load") {
  SyntheticCorpus corp = generate_synthetic(small_spec(), 41);
  std::string path = temp_path("emb");
  write_embeddings(path, corp.vocab, corp.table);
  EmbeddedVocab back = load_embeddings(path);
  std::remove(path.c_str());

  REQUIRE(back.table.dim() == corp.table.dim());
  for (int id = 2; id < corp.vocab.size(); ++id) {
    const std::string& tok = corp.vocab.id_to_token[id];
    int bid = back.vocab.id_of(tok);
    REQUIRE(bid != back.vocab.unk_id);
    for (int j = 0; j < corp.table.dim(); ++j)
      CHECK(back.table.matrix(bid, j) == doctest::Approx(corp.table.matrix(id, j)).epsilon(1e-12));
  }
}

TEST_CASE("load_dataset parses records and rejects empty text") {
  SyntheticCorpus corp = generate_synthetic(small_spec(), 41);
  std::string path = temp_path("ds");
  {
    std::ofstream out(path);
    out << R"({"text": "pos0 w1 Neg0", "label": 1, "split": "train"})" << "\n";
    out << R"({"text": "w0 w0", "label": 0, "split": "test"})" << "\n";
  }
  Dataset ds = load_dataset(path, corp.vocab, 64);
  std::remove(path.c_str());
  REQUIRE(ds.train.size() == 1);
  REQUIRE(ds.test.size() == 1);
  CHECK(ds.train[0].label == 1);
  CHECK(ds.train[0].token_ids.size() == 3);
  CHECK(ds.train[0].token_ids[0] == corp.vocab.id_of("pos0"));
  CHECK(ds.train[0].token_ids[2] == corp.vocab.id_of("neg0"));  // lowercased

  {
    std::ofstream out(path);
    out << R"({"text": "   ", "label": 0, "split": "train"})" << "\n";
  }
  CHECK_THROWS_AS(load_dataset(path, corp.vocab, 64), IoError);
  std::remove(path.c_str());
}

TEST_CASE("vocabulary add is idempotent and lookup falls back to unk") {
  Vocabulary v = Vocabulary::with_reserved();
  int a = v.add("alpha");
  CHECK(v.add("alpha") == a);
  CHECK(v.id_of("alpha") == a);
  CHECK(v.id_of("never-seen") == v.unk_id);
}
