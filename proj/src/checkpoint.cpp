#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace mswa {

namespace {

constexpr char kMagic[] = "MSWA1\n";
constexpr size_t kMagicLen = 6;

using json = nlohmann::json;

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["model_dim"] = cfg.model_dim;
  j["head_dim"] = cfg.head_dim;
  j["vocab"] = cfg.vocab;
  j["base_window"] = cfg.base_window;
  j["strategy"] = strategy_name(cfg.strategy);
  j["feature_dim"] = cfg.feature_dim;
  j["max_seq_len"] = cfg.max_seq_len;
  json pat = json::array();
  for (LayerKind k : cfg.resolved_pattern()) pat.push_back(layer_kind_name(k));
  j["pattern"] = pat;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.layers = j.at("layers").get<int64_t>();
  cfg.heads = j.at("heads").get<int64_t>();
  cfg.model_dim = j.at("model_dim").get<int64_t>();
  cfg.head_dim = j.at("head_dim").get<int64_t>();
  cfg.vocab = j.at("vocab").get<int64_t>();
  cfg.base_window = j.at("base_window").get<int64_t>();
  const std::string sname = j.at("strategy").get<std::string>();
  const auto strat = strategy_from_name(sname);
  if (!strat) fail(ErrorCode::Io, "checkpoint: unknown strategy '" + sname + "'");
  cfg.strategy = *strat;
  cfg.feature_dim = j.at("feature_dim").get<int64_t>();
  cfg.max_seq_len = j.at("max_seq_len").get<int64_t>();
  cfg.pattern.clear();
  for (const auto& e : j.at("pattern")) {
    const auto kind = layer_kind_from_name(e.get<std::string>());
    if (!kind) fail(ErrorCode::Io, "checkpoint: unknown layer kind in pattern");
    cfg.pattern.push_back(*kind);
  }
  return cfg;
}

void write_blob(std::ofstream& out, const std::vector<float>& blob) {
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

std::vector<float> read_blob(std::ifstream& in, size_t count,
                             const std::string& what) {
  std::vector<float> blob(count);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) fail(ErrorCode::Io, "checkpoint: truncated reading " + what);
  return blob;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json header;
  header["config"] = config_to_json(ck.config);
  header["seed"] = ck.seed;
  json params = json::array();
  for (const auto& [name, blob] : ck.params) {
    params.push_back({{"name", name}, {"size", blob.size()}});
  }
  header["params"] = params;
  header["optimizer"] = {{"present", ck.has_optimizer}, {"step", ck.opt_step}};
  header["trainer"] = {{"present", ck.has_trainer},
                       {"step", ck.train_step},
                       {"data_rng_state", ck.data_rng_state}};
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, kMagicLen);
  const uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, blob] : ck.params) {
    (void)name;
    write_blob(out, blob);
  }
  if (ck.has_optimizer) {
    for (size_t i = 0; i < ck.params.size(); ++i) {
      write_blob(out, ck.opt_m[i]);
      write_blob(out, ck.opt_v[i]);
    }
  }
  out.flush();
  if (!out) fail(ErrorCode::Io, "checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "checkpoint: cannot open '" + path + "'");
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    fail(ErrorCode::Io, "checkpoint: '" + path + "' is not a checkpoint file");
  }
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) fail(ErrorCode::Io, "checkpoint: truncated header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) fail(ErrorCode::Io, "checkpoint: truncated header");

  json header;
  try {
    header = json::parse(htext);
  } catch (const std::exception& e) {
    fail(ErrorCode::Io, std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = config_from_json(header.at("config"));
    ck.seed = header.at("seed").get<uint64_t>();
    for (const auto& p : header.at("params")) {
      ck.params.emplace_back(p.at("name").get<std::string>(),
                             std::vector<float>());
      ck.params.back().second.resize(p.at("size").get<size_t>());
    }
    ck.has_optimizer = header.at("optimizer").at("present").get<bool>();
    ck.opt_step = header.at("optimizer").at("step").get<int64_t>();
    ck.has_trainer = header.at("trainer").at("present").get<bool>();
    ck.train_step = header.at("trainer").at("step").get<int64_t>();
    ck.data_rng_state = header.at("trainer").at("data_rng_state").get<uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("checkpoint: malformed header: ") + e.what());
  }

  for (auto& [name, blob] : ck.params) {
    blob = read_blob(in, blob.size(), "parameter '" + name + "'");
  }
  if (ck.has_optimizer) {
    ck.opt_m.resize(ck.params.size());
    ck.opt_v.resize(ck.params.size());
    for (size_t i = 0; i < ck.params.size(); ++i) {
      ck.opt_m[i] = read_blob(in, ck.params[i].second.size(),
                              "moment m of '" + ck.params[i].first + "'");
      ck.opt_v[i] = read_blob(in, ck.params[i].second.size(),
                              "moment v of '" + ck.params[i].first + "'");
    }
  }
  return ck;
}

Checkpoint snapshot(const Model& model) {
  Checkpoint ck;
  ck.config = model.config();
  ck.seed = model.seed();
  for (const auto& p : model.parameters()) {
    std::vector<float> blob(p.tensor.size());
    const double* src = p.tensor.data();
    for (size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<float>(src[i]);
    ck.params.emplace_back(p.name, std::move(blob));
  }
  return ck;
}

void snapshot_optimizer(Checkpoint& ck, const AdamW& opt) {
  const auto& m = opt.moment1();
  const auto& v = opt.moment2();
  if (m.size() != ck.params.size()) {
    fail(ErrorCode::State, "snapshot_optimizer: optimizer tracks " +
                               std::to_string(m.size()) + " tensors, checkpoint has " +
                               std::to_string(ck.params.size()));
  }
  ck.has_optimizer = true;
  ck.opt_step = opt.steps_taken();
  ck.opt_m.clear();
  ck.opt_v.clear();
  for (size_t i = 0; i < m.size(); ++i) {
    std::vector<float> bm(m[i].size()), bv(v[i].size());
    for (size_t k = 0; k < bm.size(); ++k) bm[k] = static_cast<float>(m[i][k]);
    for (size_t k = 0; k < bv.size(); ++k) bv[k] = static_cast<float>(v[i][k]);
    ck.opt_m.push_back(std::move(bm));
    ck.opt_v.push_back(std::move(bv));
  }
}

void restore_params(Model& model, const Checkpoint& ck) {
  auto& params = model.parameters();
  if (params.size() != ck.params.size()) {
    fail(ErrorCode::Config, "checkpoint holds " + std::to_string(ck.params.size()) +
                                " parameters, model has " +
                                std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, blob] = ck.params[i];
    if (params[i].name != name) {
      fail(ErrorCode::Config, "checkpoint parameter '" + name +
                                  "' does not match model parameter '" +
                                  params[i].name + "'");
    }
    if (static_cast<size_t>(params[i].tensor.size()) != blob.size()) {
      fail(ErrorCode::Config, "checkpoint parameter '" + name + "' has " +
                                  std::to_string(blob.size()) +
                                  " values, model expects " +
                                  std::to_string(params[i].tensor.size()));
    }
    double* dst = params[i].tensor.data();
    for (size_t k = 0; k < blob.size(); ++k) dst[k] = static_cast<double>(blob[k]);
  }
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Model model(ck.config, ck.seed);
  restore_params(model, ck);
  return model;
}

void restore_optimizer(AdamW& opt, const Checkpoint& ck) {
  if (!ck.has_optimizer) {
    fail(ErrorCode::State, "checkpoint has no optimizer state");
  }
  auto& m = opt.moment1();
  auto& v = opt.moment2();
  if (m.size() != ck.opt_m.size()) {
    fail(ErrorCode::State, "optimizer tracks " + std::to_string(m.size()) +
                               " tensors, checkpoint has " +
                               std::to_string(ck.opt_m.size()));
  }
  for (size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != ck.opt_m[i].size()) {
      fail(ErrorCode::State, "optimizer moment size mismatch at tensor " +
                                 std::to_string(i));
    }
    for (size_t k = 0; k < m[i].size(); ++k) {
      m[i][k] = static_cast<double>(ck.opt_m[i][k]);
      v[i][k] = static_cast<double>(ck.opt_v[i][k]);
    }
  }
  opt.set_steps_taken(ck.opt_step);
}

}  // namespace mswa
