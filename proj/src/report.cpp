#include "seat/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "seat/checkpoint.hpp"
#include "seat/errors.hpp"

namespace seat {

namespace {

using json = nlohmann::ordered_json;

std::string csv_num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

void require_keys(const json& j, std::initializer_list<const char*> keys,
                  const std::string& where) {
  for (const char* k : keys)
    if (!j.contains(k)) throw IoError(where + ": missing key '" + k + "'");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    bool known = false;
    for (const char* want : keys) known |= (k == want);
    if (!known) throw IoError(where + ": unknown key '" + k + "'");
  }
}

json metrics_to_json(const MetricReport& m) {
  json j;
  j["jsd_mean"] = m.jsd_mean;
  j["jsd_sum"] = m.jsd_sum;
  j["tvd_mean"] = m.tvd_mean;
  j["tvd_sum"] = m.tvd_sum;
  j["f1"] = m.f1;
  j["comp"] = m.comp;
  j["suff"] = m.suff;
  j["sens_auc"] = m.sens_auc;
  j["n_examples"] = m.n_examples;
  return j;
}

MetricReport metrics_from_json(const json& j) {
  require_keys(j, {"jsd_mean", "jsd_sum", "tvd_mean", "tvd_sum", "f1", "comp", "suff", "sens_auc",
                   "n_examples"},
               "report.metrics");
  MetricReport m;
  m.jsd_mean = j.at("jsd_mean").get<double>();
  m.jsd_sum = j.at("jsd_sum").get<double>();
  m.tvd_mean = j.at("tvd_mean").get<double>();
  m.tvd_sum = j.at("tvd_sum").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.comp = j.at("comp").get<double>();
  m.suff = j.at("suff").get<double>();
  m.sens_auc = j.at("sens_auc").get<double>();
  m.n_examples = j.at("n_examples").get<long>();
  return m;
}

json cert_to_json(const SeatCertificate& c) {
  json j;
  j["gamma_hat"] = c.gamma_hat;
  j["beta_hat"] = c.beta_hat;
  j["alpha_hat"] = c.alpha_hat;
  j["radius"] = c.radius;
  j["k"] = c.k;
  return j;
}

SeatCertificate cert_from_json(const json& j) {
  require_keys(j, {"gamma_hat", "beta_hat", "alpha_hat", "radius", "k"}, "report.certificate");
  SeatCertificate c;
  c.gamma_hat = j.at("gamma_hat").get<double>();
  c.beta_hat = j.at("beta_hat").get<double>();
  c.alpha_hat = j.at("alpha_hat").get<double>();
  c.radius = j.at("radius").get<double>();
  c.k = j.at("k").get<int>();
  return c;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::string report_to_json(const Report& r) {
  json j;
  j["version"] = r.version;
  j["method"] = r.method;
  j["config_hash"] = r.config_hash;
  j["metrics"] = metrics_to_json(r.metrics);
  if (r.certificate) j["certificate"] = cert_to_json(*r.certificate);
  // kept empty so reports stay byte-reproducible; wall-clock lives in the manifest
  j["timings"] = json::object();
  return j.dump(1) + "\n";
}

Report report_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, true);
  const bool has_cert = j.contains("certificate");
  if (has_cert)
    require_keys(j, {"version", "method", "config_hash", "metrics", "certificate", "timings"},
                 "report");
  else
    require_keys(j, {"version", "method", "config_hash", "metrics", "timings"}, "report");
  if (!j.at("timings").is_object()) throw IoError("report: timings must be an object");
  Report r;
  r.version = j.at("version").get<int>();
  if (r.version != kReportVersion)
    throw IoError("report: unsupported version " + std::to_string(r.version));
  r.method = j.at("method").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.metrics = metrics_from_json(j.at("metrics"));
  if (has_cert) r.certificate = cert_from_json(j.at("certificate"));
  return r;
}

void write_report(const std::string& path, const Report& r) {
  atomic_write(path, report_to_json(r));
}

Comparison make_comparison(const std::string& suite, const std::string& config_hash,
                           const MetricReport& seat_metrics, const MetricReport& vanilla_metrics) {
  Comparison c;
  c.suite = suite;
  c.config_hash = config_hash;
  c.jsd_mean_ratio = ratio(seat_metrics.jsd_mean, vanilla_metrics.jsd_mean);
  c.jsd_sum_ratio = ratio(seat_metrics.jsd_sum, vanilla_metrics.jsd_sum);
  c.tvd_mean_ratio = ratio(seat_metrics.tvd_mean, vanilla_metrics.tvd_mean);
  c.tvd_sum_ratio = ratio(seat_metrics.tvd_sum, vanilla_metrics.tvd_sum);
  return c;
}

void write_comparison(const std::string& path, const Comparison& c) {
  json j;
  j["version"] = c.version;
  j["suite"] = c.suite;
  j["config_hash"] = c.config_hash;
  j["jsd_mean_ratio"] = c.jsd_mean_ratio;
  j["jsd_sum_ratio"] = c.jsd_sum_ratio;
  j["tvd_mean_ratio"] = c.tvd_mean_ratio;
  j["tvd_sum_ratio"] = c.tvd_sum_ratio;
  atomic_write(path, j.dump(1) + "\n");
}

void write_stability_csv(const std::string& path, const std::vector<StabilityRow>& rows) {
  std::string out = "example_id,jsd,tvd\n";
  for (const auto& r : rows) {
    out += std::to_string(r.example_id);
    out += ',';
    out += csv_num(r.jsd);
    out += ',';
    out += csv_num(r.tvd);
    out += '\n';
  }
  atomic_write(path, out);
}

void write_seed_study_csv(const std::string& path, const std::vector<SeedStudyRow>& rows) {
  std::string out = "example_id,label,max_attention,bin,max_jsd\n";
  for (const auto& r : rows) {
    out += std::to_string(r.example_id);
    out += ',';
    out += std::to_string(r.label);
    out += ',';
    out += csv_num(r.max_attention);
    out += ',';
    out += std::to_string(r.bin);
    out += ',';
    out += csv_num(r.max_jsd);
    out += '\n';
  }
  atomic_write(path, out);
}

void write_manifest(const std::string& path, const RunManifest& m) {
  json j;
  j["version"] = m.version;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["config_snapshot"] = m.config_snapshot;
  j["prng"] = m.prng;
  j["inputs"] = json::object();
  for (const auto& [k, v] : m.inputs) j["inputs"][k] = v;
  j["outputs"] = json::object();
  for (const auto& [k, v] : m.outputs) j["outputs"][k] = v;
  j["wall_seconds"] = m.wall_seconds;
  j["series"] = json::object();
  for (const auto& [k, v] : m.series) j["series"][k] = v;
  j["scalars"] = json::object();
  for (const auto& [k, v] : m.scalars) j["scalars"][k] = v;
  atomic_write(path, j.dump(1) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j = json::parse(text, nullptr, true);
  require_keys(j,
               {"version", "command", "config_hash", "config_snapshot", "prng", "inputs",
                "outputs", "wall_seconds", "series", "scalars"},
               "manifest");
  RunManifest m;
  m.version = j.at("version").get<int>();
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.config_snapshot = j.at("config_snapshot").get<std::string>();
  m.prng = j.at("prng").get<std::string>();
  for (const auto& [k, v] : j.at("inputs").items()) m.inputs[k] = v.get<std::string>();
  for (const auto& [k, v] : j.at("outputs").items()) m.outputs[k] = v.get<std::string>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  for (const auto& [k, v] : j.at("series").items()) m.series[k] = v.get<std::vector<double>>();
  for (const auto& [k, v] : j.at("scalars").items()) m.scalars[k] = v.get<double>();
  return m;
}

}  // namespace seat
