#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attention.hpp"
#include "tensor.hpp"
#include "window_plan.hpp"

namespace mswa {

enum class LayerKind { Local, Linear, Full };

const char* layer_kind_name(LayerKind k);
std::optional<LayerKind> layer_kind_from_name(std::string_view name);

struct ModelConfig {
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t model_dim = 128;
  int64_t head_dim = 32;
  int64_t vocab = 256;  // byte-level
  int64_t base_window = 64;
  Strategy strategy = Strategy::Mswa;
  // Per-layer mechanism; empty means every layer is windowed (Local).
  std::vector<LayerKind> pattern;
  int64_t feature_dim = 16;  // projected q/k width for Linear layers
  int64_t max_seq_len = 4096;

  // SwiGLU hidden width: 8/3 * model_dim rounded up to a multiple of 16.
  int64_t ffn_hidden() const;
  std::vector<LayerKind> resolved_pattern() const;
  int64_t local_layer_count() const;
  void validate() const;

  // The hybrid preset: [Linear, Local, Local] repeated; layers must be a
  // multiple of 3.
  static std::vector<LayerKind> hybrid_pattern(int64_t layers);
};

// Weights of one decoder block. For Linear layers, wqr/wkr hold the per-head
// feature projections ([head_dim, feature_dim] each) and windows is empty;
// for Full layers windows holds the sentinel -1 per head.
struct LayerWeights {
  LayerKind kind = LayerKind::Local;
  AttentionParams attn;
  std::vector<Tensor> wqr, wkr;
  Tensor attn_norm, ffn_norm;
  Tensor w_gate, w_up, w_down;
  std::vector<int64_t> windows;
};

// Pre-norm byte-level decoder: embedding, [attention + SwiGLU] blocks with
// residual connections, final RMSNorm, untied output head. The window plan
// covers the Local layers only (shallow to deep), since they share one
// window-variation scheme regardless of interleaved Linear/Full layers.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  const std::optional<WindowPlan>& plan() const { return plan_; }
  const std::vector<LayerWeights>& layers() const { return layers_; }
  const Tensor& embed() const { return embed_; }
  const Tensor& final_norm() const { return final_norm_; }
  const Tensor& head() const { return head_; }
  FeatureMapConfig feature_config() const {
    return FeatureMapConfig{cfg_.feature_dim, cfg_.head_dim};
  }

  // Tape forward over a token sequence; returns [n, vocab] logits.
  Tensor forward(const std::vector<int32_t>& tokens,
                 KernelStats* stats = nullptr) const;
  // Mean next-token cross-entropy (nats) of inputs against targets.
  Tensor loss(const std::vector<int32_t>& inputs,
              const std::vector<int32_t>& targets) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Tensor& param(const std::string& name);

  int64_t parameter_count() const;

 private:
  void build(uint64_t seed);

  ModelConfig cfg_;
  uint64_t seed_ = 0;
  std::optional<WindowPlan> plan_;
  std::vector<LayerWeights> layers_;
  Tensor embed_, final_norm_, head_;
  std::vector<Parameter> params_;
};

}  // namespace mswa
