#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "seat/checkpoint.hpp"
#include "seat/config.hpp"
#include "seat/errors.hpp"
#include "seat/harness.hpp"
#include "seat/report.hpp"

using namespace seat;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const char* tag) : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config set, canonical and hash round-trip") {
  RunConfig cfg = RunConfig::from_defaults();
  cfg.validate();

  cfg.set("seed", "42");
  cfg.set("syn.train", "100");
  cfg.set("seat.lambda2", "500");
  cfg.set("model.scorer", "scaled_dot");
  cfg.set("perturb.sweep", "0.01,0.02");
  CHECK(cfg.seed == 42);
  CHECK(cfg.syn.train_count == 100);
  CHECK(cfg.seat.lambda2 == 500.0);
  CHECK(cfg.scorer_kind == ScorerKind::scaled_dot);
  REQUIRE(cfg.perturb_sweep.size() == 2);
  CHECK(cfg.perturb_sweep[1] == 0.02);

  CHECK_THROWS_AS(cfg.set("no.such.key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("seed", "not-a-number"), ConfigError);

  // canonical text reparses to the same hash
  std::string canon = cfg.canonical();
  RunConfig back = RunConfig::from_defaults();
  std::istringstream lines(canon);
  std::string line;
  while (std::getline(lines, line)) {
    auto eq = line.find('=');
    REQUIRE(eq != std::string::npos);
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    while (!k.empty() && k.back() == ' ') k.pop_back();
    while (!v.empty() && v.front() == ' ') v.erase(v.begin());
    back.set(k, v);
  }
  CHECK(back.hash() == cfg.hash());

  RunConfig other = RunConfig::from_defaults();
  CHECK(other.hash() != cfg.hash());
  CHECK(other.hash() == RunConfig::from_defaults().hash());
}

TEST_CASE("config files accept comments and reject junk") {
  TempDir tmp("seat-cfg-test");
  std::string path = (tmp.path / "run.cfg").string();
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "seed = 9\n";
    out << "\n";
    out << "syn.dim = 12   # trailing comment\n";
    out << "out_dir = " << tmp.str() << "/run\n";
  }
  RunConfig cfg = RunConfig::from_file(path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.syn.dim == 12);

  std::vector<std::string> overrides{"seed=10", "train.epochs=3"};
  cfg.apply_overrides(overrides);
  CHECK(cfg.seed == 10);
  CHECK(cfg.train.epochs == 3);
  CHECK_THROWS_AS(cfg.apply_overrides({"missing-equals"}), ConfigError);

  CHECK_THROWS_AS(RunConfig::from_file((tmp.path / "absent.cfg").string()), IoError);

  cfg.syn.train_count = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.syn.train_count = 10;
  cfg.seat.radius = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("report JSON closes its schema and keeps the certificate") {
  Report r;
  r.method = "seat";
  r.config_hash = "00ff00ff00ff00ff";
  r.metrics.jsd_mean = 0.25;
  r.metrics.jsd_sum = 1.0;
  r.metrics.tvd_mean = 0.125;
  r.metrics.tvd_sum = 0.5;
  r.metrics.f1 = 0.75;
  r.metrics.n_examples = 4;
  SeatCertificate cert;
  cert.gamma_hat = 0.5;
  cert.beta_hat = 1.0;
  cert.alpha_hat = 0.25;
  cert.radius = 0.1;
  cert.k = 7;
  r.certificate = cert;

  std::string text = report_to_json(r);
  Report back = report_from_json(text);
  CHECK(back.method == "seat");
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.metrics.jsd_mean == r.metrics.jsd_mean);
  CHECK(back.metrics.n_examples == 4);
  REQUIRE(back.certificate.has_value());
  CHECK(back.certificate->beta_hat == 1.0);
  CHECK(back.certificate->k == 7);

  // without the certificate the key disappears entirely
  r.certificate.reset();
  Report bare = report_from_json(report_to_json(r));
  CHECK(!bare.certificate.has_value());

  // unknown keys are rejected, not ignored
  std::string tampered = text;
  tampered.insert(tampered.rfind('}'), ",\"extra\":1");
  CHECK_THROWS(report_from_json(tampered));
}

TEST_CASE("comparison divides seat aggregates by vanilla") {
  MetricReport seat_m, van;
  seat_m.jsd_mean = 1.0;
  seat_m.jsd_sum = 4.0;
  seat_m.tvd_mean = 0.5;
  seat_m.tvd_sum = 2.0;
  van.jsd_mean = 2.0;
  van.jsd_sum = 8.0;
  van.tvd_mean = 2.0;
  van.tvd_sum = 4.0;
  Comparison c = make_comparison("stability-embedding", "abcd", seat_m, van);
  CHECK(c.jsd_mean_ratio == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.jsd_sum_ratio == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.tvd_mean_ratio == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(c.tvd_sum_ratio == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.suite == "stability-embedding");
}

TEST_CASE("manifests round-trip through disk") {
  TempDir tmp("seat-manifest-test");
  RunManifest m;
  m.command = "train-base";
  m.config_hash = "1122334455667788";
  m.config_snapshot = "seed = 1\n";
  m.inputs["a.json"] = "00";
  m.outputs["b.json"] = "ff";
  m.wall_seconds = 1.5;
  m.series["loss"] = {3.0, 2.0, 1.0};
  m.scalars["final_f1"] = 0.9;
  std::string path = (tmp.path / "manifest.json").string();
  write_manifest(path, m);
  RunManifest back = read_manifest(path);
  CHECK(back.command == m.command);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.inputs == m.inputs);
  CHECK(back.outputs == m.outputs);
  CHECK(back.series["loss"] == m.series["loss"]);
  CHECK(back.scalars["final_f1"] == 0.9);
  CHECK(back.prng == "splitmix64-streams-v1");
}

TEST_CASE("atomic_write and file hashes are stable") {
  TempDir tmp("seat-hash-test");
  std::string path = (tmp.path / "blob.txt").string();
  atomic_write(path, "abc");
  // FNV-1a 64 of "abc"
  CHECK(file_hash(path) == "e71fa2190541574b");
  CHECK(bytes_hash("abc") == "e71fa2190541574b");
  CHECK(bytes_hash("") == "cbf29ce484222325");
  atomic_write(path, "abd");
  CHECK(file_hash(path) != "e71fa2190541574b");
  // no stray temp files left behind
  int entries = 0;
  for ([[maybe_unused]] auto& e : fs::directory_iterator(tmp.path)) ++entries;
  CHECK(entries == 1);
}

TEST_CASE("synthetic data generation is reproducible through the harness") {
  TempDir tmp("seat-gendata-test");
  RunConfig cfg = RunConfig::from_defaults();
  cfg.out_dir = tmp.str() + "/run";
  cfg.syn.train_count = 20;
  cfg.syn.test_count = 8;
  cfg.syn.vocab_size = 40;
  cfg.syn.dim = 6;

  LoadedData d1 = obtain_data(cfg);
  LoadedData d2 = obtain_data(cfg);
  CHECK(d1.data.train.size() == 20);
  CHECK(d1.data.test.size() == 8);
  REQUIRE(d1.data.train.size() == d2.data.train.size());
  for (std::size_t i = 0; i < d1.data.train.size(); ++i) {
    CHECK(d1.data.train[i].token_ids == d2.data.train[i].token_ids);
    CHECK(d1.data.train[i].label == d2.data.train[i].label);
  }
  CHECK(d1.table.matrix.a == d2.table.matrix.a);

  cmd_gen_data(cfg);
  RunPaths paths{cfg.out_dir};
  CHECK(fs::exists(paths.manifest("gen-data")));
  RunManifest m = read_manifest(paths.manifest("gen-data"));
  CHECK(m.command == "gen-data");
  CHECK(m.config_hash == cfg.hash());
}

TEST_CASE("run output hashing skips manifests") {
  TempDir tmp("seat-outhash-test");
  atomic_write((tmp.path / "report_x_seat.json").string(), "{}");
  atomic_write((tmp.path / "manifest_train-base.json").string(), "{\"wall\":1}");
  atomic_write((tmp.path / "stability_seat.csv").string(), "a,b\n");
  auto hashes = run_output_hashes(tmp.str());
  REQUIRE(hashes.size() == 2);
  bool saw_manifest = false;
  for (auto& [name, h] : hashes) {
    if (name.find("manifest") != std::string::npos) saw_manifest = true;
    CHECK(h.size() == 16);
  }
  CHECK(!saw_manifest);
  // sorted by name, so the listing itself is deterministic
  CHECK(hashes[0].first <= hashes[1].first);
}
