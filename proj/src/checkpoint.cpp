#include "seat/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seat/errors.hpp"

namespace seat {

using json = nlohmann::ordered_json;

namespace {

json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["data"] = m.a;
  return j;
}

Mat mat_from_json(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw IoError(std::string("checkpoint: malformed matrix ") + what);
  Mat m(j["rows"].get<int>(), j["cols"].get<int>());
  auto data = j["data"].get<Vec>();
  if (data.size() != m.a.size())
    throw IoError(std::string("checkpoint: matrix size mismatch in ") + what);
  m.a = std::move(data);
  if (!all_finite(m)) throw IoError(std::string("checkpoint: non-finite values in ") + what);
  return m;
}

Vec vec_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw IoError(std::string("checkpoint: malformed vector ") + what);
  Vec v = j.get<Vec>();
  if (!all_finite(v)) throw IoError(std::string("checkpoint: non-finite values in ") + what);
  return v;
}

json scorer_to_json(const AttentionScorer& s) {
  json j;
  j["variant"] = s.kind == ScorerKind::additive ? "additive" : "scaled_dot";
  j["q"] = s.q;
  if (s.kind == ScorerKind::additive) {
    j["v"] = s.v;
    j["w1"] = mat_to_json(s.w1);
    j["w2"] = mat_to_json(s.w2);
  }
  return j;
}

AttentionScorer scorer_from_json(const json& j) {
  if (!j.is_object() || !j.contains("variant") || !j.contains("q"))
    throw IoError("checkpoint: malformed scorer");
  AttentionScorer s;
  std::string variant = j["variant"].get<std::string>();
  if (variant == "additive")
    s.kind = ScorerKind::additive;
  else if (variant == "scaled_dot")
    s.kind = ScorerKind::scaled_dot;
  else
    throw IoError("checkpoint: unknown scorer variant " + variant);
  s.q = vec_from_json(j["q"], "scorer.q");
  if (s.kind == ScorerKind::additive) {
    if (!j.contains("v") || !j.contains("w1") || !j.contains("w2"))
      throw IoError("checkpoint: additive scorer missing parameters");
    s.v = vec_from_json(j["v"], "scorer.v");
    s.w1 = mat_from_json(j["w1"], "scorer.w1");
    s.w2 = mat_from_json(j["w2"], "scorer.w2");
  }
  return s;
}

json seat_config_to_json(const SeatConfig& c) {
  json j;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["k"] = c.k;
  j["radius"] = c.radius;
  j["norm"] = c.norm == BallNorm::l2 ? "l2" : "linf";
  j["inner_steps"] = c.inner_steps;
  j["alpha"] = c.alpha;
  j["epochs"] = c.epochs;
  j["eta"] = c.eta;
  j["eta_decay"] = c.eta_decay;
  j["batch"] = c.batch;
  j["algorithm1_signs"] = c.algorithm1_signs;
  j["simplex_reproject"] = c.simplex_reproject;
  return j;
}

SeatConfig seat_config_from_json(const json& j) {
  SeatConfig c;
  c.lambda1 = j.at("lambda1").get<double>();
  c.lambda2 = j.at("lambda2").get<double>();
  c.k = j.at("k").get<int>();
  c.radius = j.at("radius").get<double>();
  std::string norm = j.at("norm").get<std::string>();
  if (norm == "l2")
    c.norm = BallNorm::l2;
  else if (norm == "linf")
    c.norm = BallNorm::linf;
  else
    throw IoError("checkpoint: unknown norm " + norm);
  c.inner_steps = j.at("inner_steps").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.eta = j.at("eta").get<double>();
  c.eta_decay = j.at("eta_decay").get<double>();
  c.batch = j.at("batch").get<int>();
  c.algorithm1_signs = j.at("algorithm1_signs").get<bool>();
  c.simplex_reproject = j.at("simplex_reproject").get<bool>();
  return c;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad JSON: " + e.what());
  }
  return j;
}

}  // namespace

void atomic_write(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("atomic_write: cannot open " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("atomic_write: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("atomic_write: rename to " + path + " failed: " + ec.message());
}

std::string bytes_hash(std::string_view bytes) {
  std::uint64_t h = fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file_hash: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_hash(ss.str());
}

void save_model(const std::string& path, const AttentionModel& model) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "attention_model";
  j["max_len"] = model.max_len;
  j["vocab"] = {{"tokens", model.vocab.id_to_token},
                {"pad_id", model.vocab.pad_id},
                {"unk_id", model.vocab.unk_id}};
  j["embeddings"] = mat_to_json(model.embeddings.matrix);
  j["encoder"] = {{"w_xh", mat_to_json(model.encoder.w_xh)},
                  {"w_hh", mat_to_json(model.encoder.w_hh)},
                  {"b_h", model.encoder.b_h}};
  j["scorer"] = scorer_to_json(model.scorer);
  j["decoder"] = {{"theta", model.decoder.theta}, {"bias", model.decoder.bias}};
  j["frozen"] = {{"embeddings", model.frozen.embeddings},
                 {"encoder", model.frozen.encoder},
                 {"scorer", model.frozen.scorer},
                 {"decoder", model.frozen.decoder}};
  atomic_write(path, j.dump(1) + "\n");
}

AttentionModel load_model(const std::string& path) {
  json j = parse_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointFormatVersion)
    throw IoError(path + ": unsupported checkpoint format version");
  if (!j.contains("kind") || j["kind"].get<std::string>() != "attention_model")
    throw IoError(path + ": not a model checkpoint");

  AttentionModel m;
  m.max_len = j.at("max_len").get<int>();
  auto tokens = j.at("vocab").at("tokens").get<std::vector<std::string>>();
  for (const auto& t : tokens) m.vocab.add(t);
  m.vocab.pad_id = j.at("vocab").at("pad_id").get<int>();
  m.vocab.unk_id = j.at("vocab").at("unk_id").get<int>();

  m.embeddings.matrix = mat_from_json(j.at("embeddings"), "embeddings");
  if (m.embeddings.rows() != m.vocab.size())
    throw IoError(path + ": embedding rows do not match vocabulary");

  m.encoder.w_xh = mat_from_json(j.at("encoder").at("w_xh"), "encoder.w_xh");
  m.encoder.w_hh = mat_from_json(j.at("encoder").at("w_hh"), "encoder.w_hh");
  m.encoder.b_h = vec_from_json(j.at("encoder").at("b_h"), "encoder.b_h");
  m.scorer = scorer_from_json(j.at("scorer"));
  m.decoder.theta = vec_from_json(j.at("decoder").at("theta"), "decoder.theta");
  m.decoder.bias = j.at("decoder").at("bias").get<double>();
  m.frozen.embeddings = j.at("frozen").at("embeddings").get<bool>();
  m.frozen.encoder = j.at("frozen").at("encoder").get<bool>();
  m.frozen.scorer = j.at("frozen").at("scorer").get<bool>();
  m.frozen.decoder = j.at("frozen").at("decoder").get<bool>();

  if (m.encoder.w_xh.cols != m.encoder.hidden() || m.encoder.w_hh.rows != m.encoder.hidden())
    throw IoError(path + ": inconsistent encoder shapes");
  if (static_cast<int>(m.decoder.theta.size()) != m.encoder.hidden())
    throw IoError(path + ": decoder width does not match encoder");
  return m;
}

void save_seat_scorer(const std::string& path, const SeatScorer& scorer) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "seat_scorer";
  j["scorer"] = scorer_to_json(scorer.scorer);
  j["provenance"] = {{"base_hash", scorer.provenance.base_hash},
                     {"seed", scorer.provenance.seed},
                     {"config", seat_config_to_json(scorer.provenance.config)}};
  atomic_write(path, j.dump(1) + "\n");
}

SeatScorer load_seat_scorer(const std::string& path) {
  json j = parse_file(path);
  if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointFormatVersion)
    throw IoError(path + ": unsupported checkpoint format version");
  if (!j.contains("kind") || j["kind"].get<std::string>() != "seat_scorer")
    throw IoError(path + ": not a scorer checkpoint");
  SeatScorer s;
  s.scorer = scorer_from_json(j.at("scorer"));
  s.provenance.base_hash = j.at("provenance").at("base_hash").get<std::string>();
  s.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
  s.provenance.config = seat_config_from_json(j.at("provenance").at("config"));
  return s;
}

}  // namespace seat
