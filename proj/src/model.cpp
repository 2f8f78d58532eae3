#include "model.hpp"

#include <algorithm>
#include <cctype>

#include "error.hpp"
#include "rng.hpp"

namespace mswa {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Local: return "local";
    case LayerKind::Linear: return "linear";
    case LayerKind::Full: return "full";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from_name(std::string_view name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "local") return LayerKind::Local;
  if (n == "linear") return LayerKind::Linear;
  if (n == "full") return LayerKind::Full;
  return std::nullopt;
}

int64_t ModelConfig::ffn_hidden() const {
  const int64_t raw = (8 * model_dim + 2) / 3;  // ceil(8D/3)
  return (raw + 15) / 16 * 16;
}

std::vector<LayerKind> ModelConfig::resolved_pattern() const {
  if (pattern.empty()) return std::vector<LayerKind>(layers, LayerKind::Local);
  return pattern;
}

int64_t ModelConfig::local_layer_count() const {
  const auto pat = resolved_pattern();
  return std::count(pat.begin(), pat.end(), LayerKind::Local);
}

void ModelConfig::validate() const {
  if (layers < 1) fail(ErrorCode::Config, "config: layers must be >= 1");
  if (heads < 1) fail(ErrorCode::Config, "config: heads must be >= 1");
  if (model_dim < 1) fail(ErrorCode::Config, "config: model_dim must be >= 1");
  if (head_dim < 1) fail(ErrorCode::Config, "config: head_dim must be >= 1");
  if (vocab < 2) fail(ErrorCode::Config, "config: vocab must be >= 2");
  if (feature_dim < 1) fail(ErrorCode::Config, "config: feature_dim must be >= 1");
  if (max_seq_len < 2) fail(ErrorCode::Config, "config: max_seq_len must be >= 2");
  if (base_window < 1) fail(ErrorCode::Config, "config: base_window must be >= 1");
  if (!pattern.empty() && static_cast<int64_t>(pattern.size()) != layers) {
    fail(ErrorCode::Config, "config: pattern has " + std::to_string(pattern.size()) +
                                " entries for " + std::to_string(layers) + " layers");
  }
}

std::vector<LayerKind> ModelConfig::hybrid_pattern(int64_t layers) {
  if (layers < 3 || layers % 3 != 0) {
    fail(ErrorCode::Config, "hybrid pattern: layers must be a positive multiple of 3 (got " +
                                std::to_string(layers) + ")");
  }
  std::vector<LayerKind> pat;
  pat.reserve(layers);
  for (int64_t i = 0; i < layers / 3; ++i) {
    pat.push_back(LayerKind::Linear);
    pat.push_back(LayerKind::Local);
    pat.push_back(LayerKind::Local);
  }
  return pat;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int64_t n_local = cfg_.local_layer_count();
  if (n_local > 0) {
    plan_ = build_plan(cfg_.strategy, n_local, cfg_.heads, cfg_.base_window);
  }
  build(seed);
}

namespace {

Tensor init_matrix(Rng& root, const std::string& name, std::vector<int64_t> shape,
                   double stddev) {
  Rng r = root.child(name);
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) p[i] = r.truncated_normal(stddev);
  return t;
}

Tensor init_ones(std::vector<int64_t> shape) {
  return Tensor::full(std::move(shape), 1.0, /*requires_grad=*/true);
}

}  // namespace

void Model::build(uint64_t seed) {
  seed_ = seed;
  Rng root(seed);
  const int64_t D = cfg_.model_dim;
  const int64_t h = cfg_.heads;
  const int64_t d = cfg_.head_dim;
  const int64_t r = cfg_.feature_dim;
  const int64_t F = cfg_.ffn_hidden();
  const double stddev = 0.02;

  auto reg = [&](const std::string& name, Tensor t) {
    params_.push_back(Parameter{name, t});
    return t;
  };

  embed_ = reg("embed", init_matrix(root, "embed", {cfg_.vocab, D}, stddev));

  const auto pattern = cfg_.resolved_pattern();
  int64_t local_idx = 0;
  layers_.resize(cfg_.layers);
  for (int64_t i = 0; i < cfg_.layers; ++i) {
    LayerWeights& lw = layers_[i];
    lw.kind = pattern[i];
    const std::string base = "layers." + std::to_string(i) + ".";
    lw.attn_norm = reg(base + "attn_norm", init_ones({D}));
    lw.attn.model_dim = D;
    lw.attn.head_dim = d;
    lw.attn.heads = h;
    lw.attn.wq = reg(base + "attn.wq", init_matrix(root, base + "attn.wq", {D, h * d}, stddev));
    lw.attn.wk = reg(base + "attn.wk", init_matrix(root, base + "attn.wk", {D, h * d}, stddev));
    lw.attn.wv = reg(base + "attn.wv", init_matrix(root, base + "attn.wv", {D, h * d}, stddev));
    lw.attn.wo = reg(base + "attn.wo", init_matrix(root, base + "attn.wo", {h * d, D}, stddev));
    if (lw.kind == LayerKind::Linear) {
      for (int64_t j = 0; j < h; ++j) {
        const std::string qn = base + "attn.wqr." + std::to_string(j);
        const std::string kn = base + "attn.wkr." + std::to_string(j);
        lw.wqr.push_back(reg(qn, init_matrix(root, qn, {d, r}, stddev)));
        lw.wkr.push_back(reg(kn, init_matrix(root, kn, {d, r}, stddev)));
      }
    } else if (lw.kind == LayerKind::Local) {
      lw.windows = plan_->row(local_idx++);
    } else {
      lw.windows.assign(h, -1);
    }
    lw.ffn_norm = reg(base + "ffn_norm", init_ones({D}));
    lw.w_gate = reg(base + "ffn.w_gate", init_matrix(root, base + "ffn.w_gate", {D, F}, stddev));
    lw.w_up = reg(base + "ffn.w_up", init_matrix(root, base + "ffn.w_up", {D, F}, stddev));
    lw.w_down = reg(base + "ffn.w_down", init_matrix(root, base + "ffn.w_down", {F, D}, stddev));
  }

  final_norm_ = reg("final_norm", init_ones({D}));
  head_ = reg("head", init_matrix(root, "head", {D, cfg_.vocab}, stddev));
}

Tensor Model::forward(const std::vector<int32_t>& tokens, KernelStats* stats) const {
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n < 1) fail(ErrorCode::InvalidArgument, "forward: empty sequence");
  if (n > cfg_.max_seq_len) {
    fail(ErrorCode::InvalidArgument, "forward: sequence length " + std::to_string(n) +
                                         " exceeds max_seq_len " +
                                         std::to_string(cfg_.max_seq_len));
  }
  const int64_t d = cfg_.head_dim;
  const FeatureMapConfig fm = feature_config();

  Tensor x = embedding(embed_, tokens);
  for (const LayerWeights& lw : layers_) {
    Tensor hin = rms_norm(x, lw.attn_norm);
    Tensor att;
    if (lw.kind == LayerKind::Linear) {
      Tensor q = rotary(matmul(hin, lw.attn.wq), d, 0);
      Tensor k = rotary(matmul(hin, lw.attn.wk), d, 0);
      Tensor v = matmul(hin, lw.attn.wv);
      std::vector<Tensor> heads_out;
      for (int64_t j = 0; j < cfg_.heads; ++j) {
        Tensor qj = matmul(slice(q, 1, j * d, d), lw.wqr[j]);
        Tensor kj = matmul(slice(k, 1, j * d, d), lw.wkr[j]);
        Tensor vj = slice(v, 1, j * d, d);
        heads_out.push_back(linear_attention(qj, kj, vj, fm));
      }
      Tensor merged = heads_out.size() == 1 ? heads_out[0] : concat(heads_out, 1);
      att = matmul(merged, lw.attn.wo);
    } else {
      att = mswa_layer(hin, lw.attn, lw.windows, /*grouped=*/true, /*start_pos=*/0,
                       stats);
    }
    x = add(x, att);

    Tensor hff = rms_norm(x, lw.ffn_norm);
    Tensor gate = silu(matmul(hff, lw.w_gate));
    Tensor up = matmul(hff, lw.w_up);
    Tensor ffn = matmul(mul(gate, up), lw.w_down);
    x = add(x, ffn);
  }
  return matmul(rms_norm(x, final_norm_), head_);
}

Tensor Model::loss(const std::vector<int32_t>& inputs,
                   const std::vector<int32_t>& targets) const {
  if (inputs.size() != targets.size()) {
    fail(ErrorCode::Shape, "loss: inputs and targets differ in length: " +
                               std::to_string(inputs.size()) + " vs " +
                               std::to_string(targets.size()));
  }
  return cross_entropy_with_logits(forward(inputs), targets);
}

Tensor& Model::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  fail(ErrorCode::InvalidArgument, "param: no parameter named '" + name + "'");
}

int64_t Model::parameter_count() const {
  int64_t total = 0;
  for (const auto& p : params_) total += p.tensor.size();
  return total;
}

}  // namespace mswa
