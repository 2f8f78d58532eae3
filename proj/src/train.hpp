#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace mswa {

struct TrainConfig {
  int64_t steps = 200;
  int64_t batch_size = 4;
  int64_t seq_len = 128;
  double lr = 3e-3;
  int64_t warmup_steps = 20;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double grad_clip = 1.0;      // global L2 norm; <= 0 disables clipping
  uint64_t seed = 1;           // batch sampling stream
  int64_t checkpoint_every = 0;  // extra saves every N steps; 0 = final only

  void validate() const;
};

// Reported after each optimizer step; step is zero-based.
struct StepMetrics {
  int64_t step = 0;
  double loss_bpc = 0.0;  // batch-mean cross entropy in bits per byte
  double lr = 0.0;
  double elapsed_s = 0.0;
};
using MetricsFn = std::function<void(const StepMetrics&)>;

struct EvalResult {
  double ppl = 0.0;
  double bpc = 0.0;
  int64_t positions = 0;  // scored next-byte predictions
};

// AdamW training with linear-warmup cosine schedule over byte sequences
// sampled uniformly from a corpus region. Runs are deterministic for a fixed
// model seed, train seed and corpus; wall-clock fields are the only
// exception. Losses are averaged over the batch by scaling each element's
// loss before backprop, so gradients match the batch-mean loss exactly.
class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg);
  // Resumes step counter, optimizer moments and data stream from a
  // checkpoint produced by make_checkpoint().
  Trainer(Model& model, const TrainConfig& cfg, const Checkpoint& ck);

  int64_t step() const { return step_; }
  const AdamW& optimizer() const { return opt_; }

  // Trains until cfg.steps using corpus[begin, end). When checkpoint_path is
  // non-empty, saves there on completion (and every checkpoint_every steps).
  void run(const std::vector<uint8_t>& corpus, size_t begin, size_t end,
           const MetricsFn& metrics = {}, const std::string& checkpoint_path = "");

  Checkpoint make_checkpoint() const;

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamW opt_;
  Rng data_rng_;
  int64_t step_ = 0;
};

// Mean next-byte NLL over non-overlapping seq_len blocks of corpus[begin,
// end); positions 1..seq_len-1 of each block are scored against the model's
// prediction from the preceding prefix. threads shards whole blocks and
// reduces partial sums in shard order, so any thread count produces
// identical results.
EvalResult evaluate(const Model& model, const std::vector<uint8_t>& corpus,
                    size_t begin, size_t end, int64_t seq_len, int threads = 1);

// Shard count for evaluate() from MSWA_THREADS (default 1).
int eval_threads_from_env();

// Budget-matched comparison: each config is trained from the same
// initialization seed on the same batch stream, then evaluated on a held-out
// tail. entries[0] is the baseline; every other entry must not exceed its
// window budget, making "cheaper and better/comparable" claims checkable.
// Returns CSV rows: label, strategy, base_window, total_windows,
// budget_ratio (exact fraction), train_bpc, eval_ppl, eval_bpc.
struct ComparisonEntry {
  std::string label;
  ModelConfig config;
};
std::string run_budget_comparison(const std::vector<ComparisonEntry>& entries,
                                  const TrainConfig& tcfg, uint64_t model_seed,
                                  const std::vector<uint8_t>& corpus,
                                  double train_frac, int64_t eval_seq_len,
                                  const MetricsFn& metrics = {});

}  // namespace mswa
