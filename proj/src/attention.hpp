#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace mswa {

// Counts work actually performed by the windowed kernels so the analytic
// cost model can be cross-checked against instrumented runs.
struct KernelStats {
  long long attended_pairs = 0;  // number of (query, key) dot products
};

// Softmax attention where query i attends to keys max(0, i - window) .. i.
// window < 0 means unbounded (full causal). Buffers are row-major with an
// explicit leading dimension so a contiguous head group can be processed
// inside a wider activation matrix without copying:
//   q/k/v/out row t starts at t * ld_*, and covers heads * d columns.
void attention_window_forward(const double* q, int64_t ldq, const double* k,
                              int64_t ldk, const double* v, int64_t ldv,
                              double* out, int64_t ldo, int64_t n, int64_t heads,
                              int64_t d, int64_t window,
                              KernelStats* stats = nullptr);

// Gradients for the same computation; attention weights are recomputed
// rather than stored. Gradient buffers use the same leading dimensions as
// their primals and are accumulated into (callers pass zeroed buffers).
void attention_window_backward(const double* q, int64_t ldq, const double* k,
                               int64_t ldk, const double* v, int64_t ldv,
                               const double* gout, int64_t ldo, double* gq,
                               double* gk, double* gv, int64_t n, int64_t heads,
                               int64_t d, int64_t window);

// Tape ops over [n, heads*d] activations. causal_attention is the
// window-unbounded case; swa_attention requires window >= 1. Both reject
// empty sequences. Scores are scaled by 1/sqrt(d).
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int64_t head_dim, KernelStats* stats = nullptr);
Tensor swa_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     int64_t head_dim, int64_t window,
                     KernelStats* stats = nullptr);

// Second-order Taylor softmax features:
//   phi(x) = [1, x / d^(1/4), vec(x (x) x) / (sqrt(2) * sqrt(d))]
// mapping an [n, r] input to [n, 1 + r + r^2]. normalizer_dim is the head
// dimension d of the pre-projection queries/keys, so that
// phi(q) . phi(k) = 1 + s + s^2/2 with s = (q_full . k_full)/sqrt(d) when
// r = d and the projection is the identity.
struct FeatureMapConfig {
  int64_t proj_dim = 16;        // r, width of the projected query/key
  int64_t normalizer_dim = 16;  // d used in the scale factors
  int64_t feature_len() const { return 1 + proj_dim + proj_dim * proj_dim; }
};

Tensor taylor2_feature_map(const Tensor& x, const FeatureMapConfig& cfg);

// Causal linear attention over pre-computed features:
//   out_i = (phi_q_i . S_i) / (phi_q_i . z_i),
//   S_i = sum_{j<=i} phi_k_j^T v_j,   z_i = sum_{j<=i} phi_k_j.
// The denominator is provably >= (i+1)/2 for Taylor features of real inputs;
// a non-positive denominator raises a numeric error.
Tensor linear_attention_core(const Tensor& phi_q, const Tensor& phi_k,
                             const Tensor& v);

// Convenience composition: feature map on q and k, then the core scan.
Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const FeatureMapConfig& cfg);

// Non-tape scan used by the decoder and evaluator. S (f x d) and z (f) are
// carried state: they are read as the prefix sums before this chunk and left
// holding the sums after it. phi_q/phi_k are [n, f], v is [n, d] with leading
// dimension ldv, out is [n, d] contiguous.
void linear_scan(const double* phi_q, const double* phi_k, int64_t f,
                 const double* v, int64_t ldv, int64_t n, int64_t d, double* S,
                 double* z, double* out);

// Applies the Taylor feature map to a single row x[r] -> phi[1 + r + r^2].
void taylor2_feature_row(const double* x, int64_t r, int64_t normalizer_dim,
                         double* phi);

// Weights for one multi-head attention block. wq/wk/wv map [n, model_dim] to
// [n, heads*head_dim]; wo maps back.
struct AttentionParams {
  Tensor wq, wk, wv;  // [model_dim, heads*head_dim]
  Tensor wo;          // [heads*head_dim, model_dim]
  int64_t model_dim = 0;
  int64_t head_dim = 0;
  int64_t heads = 0;
};

// One windowed multi-head attention layer: fused QKV projections, rotary
// position encoding on q and k, per-head windowed attention with the given
// per-head windows, then the output projection. Heads with equal windows are
// batched into a single kernel call; set grouped=false to force one call per
// head (used to cross-check the grouping).
Tensor mswa_layer(const Tensor& x, const AttentionParams& params,
                  const std::vector<int64_t>& windows, bool grouped = true,
                  int64_t start_pos = 0, KernelStats* stats = nullptr);

}  // namespace mswa
