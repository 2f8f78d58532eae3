#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace mswa {

// Exact work/memory accounting for a model configuration at sequence length
// n, derived in closed form (no execution). Conventions, with one
// multiply-accumulate = 2 FLOPs:
//
//   attended pairs of a window-w head   P = sum_{i<n} (min(i, w) + 1)
//   attention_flops per windowed head   4 * d * P   (score + value matmuls)
//   softmax_flops per windowed head     4 * P       (max, exp, sum, divide)
//   cache_rows per windowed head        min(n, w)   key/value rows
//
// Full attention is accounted as its window degeneration w = n - 1, which
// makes a full layer's row identical to an SWA(n-1) layer's row. Linear
// layers are billed per token and head:
//
//   feature_flops = 4*d*r (q/k feature projections) + 2*(r + 2*r^2) (maps)
//   linear_flops  = 4*f*d + 3*f + d (state update, readout, normalize)
//   state_scalars = f*(d+1), constant in n
//
// window_budget sums effective per-head windows (local windows uncapped by
// n; full heads count n - 1; linear heads contribute nothing), which is the
// quantity training-cost comparisons are stated in.

struct LayerCostRow {
  int64_t layer = 0;
  LayerKind kind = LayerKind::Local;
  std::vector<int64_t> windows;  // effective windows; empty for linear layers
  long long attended_pairs = 0;
  long long attention_flops = 0;
  long long softmax_flops = 0;
  long long feature_flops = 0;
  long long linear_flops = 0;
  long long cache_rows = 0;
  long long state_scalars = 0;
};

struct CostReport {
  ModelConfig config;
  int64_t seq_len = 0;
  std::vector<LayerCostRow> layers;

  long long total_attended_pairs = 0;
  long long total_attention_flops = 0;
  long long total_softmax_flops = 0;
  long long total_feature_flops = 0;
  long long total_linear_flops = 0;
  long long total_cache_rows = 0;
  long long total_state_scalars = 0;
  long long window_budget = 0;

  long long total_flops() const {
    return total_attention_flops + total_softmax_flops + total_feature_flops +
           total_linear_flops;
  }
  uint64_t cache_bytes(int64_t bytes_per_scalar) const {
    return (2ull * total_cache_rows * config.head_dim + total_state_scalars) *
           static_cast<uint64_t>(bytes_per_scalar);
  }
};

// Closed-form pairs count for one window-w head over n tokens (w < 0 means
// full causal). Exposed so tests can cross-check kernels independently.
long long attended_pairs(int64_t n, int64_t window);

CostReport cost_report(const ModelConfig& config, int64_t seq_len);

// Window-budget ratio report/reference. Both reports must agree on layer and
// head counts.
double relative_cost(const CostReport& report, const CostReport& reference);

std::string format_cost_text(const CostReport& report);
std::string format_cost_csv(const CostReport& report);

}  // namespace mswa
