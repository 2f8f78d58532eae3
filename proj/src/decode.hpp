#pragma once

#include <cstdint>
#include <vector>

#include "model.hpp"

namespace mswa {

// Fixed-capacity ring of cached key/value rows for one attention head.
// insert() overwrites the oldest row once full; rows are consumed oldest to
// newest so the reduction order matches the parallel kernels.
struct RingCache {
  int64_t capacity = 0;
  int64_t width = 0;
  int64_t filled = 0;
  int64_t next = 0;  // slot the next insert writes
  std::vector<double> k, v;

  void init(int64_t cap, int64_t row_width) {
    capacity = cap;
    width = row_width;
    k.assign(cap * row_width, 0.0);
    v.assign(cap * row_width, 0.0);
    filled = 0;
    next = 0;
  }
  void insert(const double* kr, const double* vr);
  // Physical slot of the ord-th stored row, ord = 0 is the oldest.
  int64_t slot(int64_t ord) const {
    const int64_t start = (next - filled + capacity) % capacity;
    return (start + ord) % capacity;
  }
  void reset() {
    filled = 0;
    next = 0;
  }
};

// Running prefix state of one linear-attention head: S = sum phi(k)^T v and
// z = sum phi(k).
struct LinearHeadState {
  std::vector<double> S;  // feature_len x head_dim
  std::vector<double> z;  // feature_len
  void init(int64_t f, int64_t d) {
    S.assign(f * d, 0.0);
    z.assign(f, 0.0);
  }
  void reset() {
    std::fill(S.begin(), S.end(), 0.0);
    std::fill(z.begin(), z.end(), 0.0);
  }
};

class DecodeState;

// Non-tape forward over a whole sequence; returns [n, vocab] logits in
// row-major order. When state is non-null its caches are left exactly as if
// the tokens had been fed through DecodeState::step one at a time.
std::vector<double> forward_inference(const Model& model,
                                      const std::vector<int32_t>& tokens,
                                      DecodeState* state = nullptr,
                                      KernelStats* stats = nullptr);

// Incremental decoder over a model: one token in, next-token logits out,
// with per-head caches sized by each head's window rather than the full
// sequence. Full-attention heads cache up to max_seq_len rows; linear heads
// keep constant-size prefix state.
class DecodeState {
 public:
  explicit DecodeState(const Model& model);

  const Model& model() const { return *model_; }
  // Number of tokens consumed so far; the next step processes this position.
  int64_t position() const { return tokens_seen_; }

  std::vector<double> step(int32_t token);
  // Parallel prefill of a fresh decoder; returns logits for the last token.
  std::vector<double> prefill(const std::vector<int32_t>& tokens);
  void reset();

  // Bytes of cached state right now, counting key/value rows actually held
  // plus the constant linear-head state, at the given scalar width.
  uint64_t cache_bytes(int64_t bytes_per_scalar = 8) const;

 private:
  friend std::vector<double> forward_inference(const Model&,
                                               const std::vector<int32_t>&,
                                               DecodeState*, KernelStats*);

  struct LayerCache {
    std::vector<RingCache> rings;      // Local/Full layers, one per head
    std::vector<LinearHeadState> lin;  // Linear layers, one per head
  };

  const Model* model_;
  int64_t tokens_seen_ = 0;
  std::vector<LayerCache> layers_;
  // Step scratch, preallocated so step() does no heap work.
  std::vector<double> x_, xn_, q_, k_, v_, att_, gate_, up_, scores_, feat_;
};

// Closed-form size of the decoder cache after consuming `tokens_seen` tokens:
// per local head min(tokens_seen, w) key/value rows, per full head
// min(tokens_seen, max_seq_len) rows, per linear head f*(d+1) scalars.
uint64_t planned_cache_bytes(const Model& model, int64_t tokens_seen,
                             int64_t bytes_per_scalar = 8);

}  // namespace mswa
