#include "train.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

#include "decode.hpp"
#include "error.hpp"
#include "window_plan.hpp"

namespace mswa {

namespace {

constexpr double kLn2 = 0.6931471805599453;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) fail(ErrorCode::Config, "train: steps must be >= 1");
  if (batch_size < 1) fail(ErrorCode::Config, "train: batch_size must be >= 1");
  if (seq_len < 2) fail(ErrorCode::Config, "train: seq_len must be >= 2");
  if (!(lr > 0.0)) fail(ErrorCode::Config, "train: lr must be > 0");
  if (warmup_steps < 0 || warmup_steps > steps) {
    fail(ErrorCode::Config, "train: warmup_steps must lie in [0, steps]");
  }
  if (checkpoint_every < 0) {
    fail(ErrorCode::Config, "train: checkpoint_every must be >= 0");
  }
}

Trainer::Trainer(Model& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_(cfg.beta1, cfg.beta2, cfg.weight_decay),
      data_rng_(cfg.seed) {
  cfg_.validate();
  opt_.attach(model_.parameters());
}

Trainer::Trainer(Model& model, const TrainConfig& cfg, const Checkpoint& ck)
    : Trainer(model, cfg) {
  if (!ck.has_trainer) {
    fail(ErrorCode::State, "resume: checkpoint carries no trainer state");
  }
  restore_optimizer(opt_, ck);
  step_ = ck.train_step;
  data_rng_.set_state(ck.data_rng_state);
}

void Trainer::run(const std::vector<uint8_t>& corpus, size_t begin, size_t end,
                  const MetricsFn& metrics, const std::string& checkpoint_path) {
  if (begin > end || end > corpus.size()) {
    fail(ErrorCode::Data, "train: corpus region [" + std::to_string(begin) + ", " +
                              std::to_string(end) + ") is out of bounds");
  }
  const size_t len = end - begin;
  const size_t need = static_cast<size_t>(cfg_.seq_len) + 1;
  if (len < need) {
    fail(ErrorCode::Data, "train: corpus region has " + std::to_string(len) +
                              " bytes, need at least " + std::to_string(need));
  }
  if (model_.config().max_seq_len < cfg_.seq_len) {
    fail(ErrorCode::Config, "train: seq_len " + std::to_string(cfg_.seq_len) +
                                " exceeds model max_seq_len " +
                                std::to_string(model_.config().max_seq_len));
  }

  auto& params = model_.parameters();
  const auto t0 = std::chrono::steady_clock::now();
  const uint64_t offsets = static_cast<uint64_t>(len - cfg_.seq_len);
  std::vector<int32_t> inputs(cfg_.seq_len), targets(cfg_.seq_len);

  while (step_ < cfg_.steps) {
    const double lr = cosine_lr(step_, cfg_.steps, cfg_.warmup_steps, cfg_.lr);
    for (auto& p : params) p.tensor.zero_grad();

    double batch_loss = 0.0;
    for (int64_t b = 0; b < cfg_.batch_size; ++b) {
      const size_t off = begin + static_cast<size_t>(data_rng_.uniform_below(offsets));
      for (int64_t t = 0; t < cfg_.seq_len; ++t) {
        inputs[t] = corpus[off + t];
        targets[t] = corpus[off + t + 1];
      }
      Tensor loss = model_.loss(inputs, targets);
      scale(loss, 1.0 / static_cast<double>(cfg_.batch_size)).backward();
      batch_loss += loss.item();
    }
    batch_loss /= static_cast<double>(cfg_.batch_size);
    if (!std::isfinite(batch_loss)) {
      fail(ErrorCode::Numeric, "training diverged at step " + std::to_string(step_) +
                                   ": loss is not finite");
    }
    clip_grad_norm(params, cfg_.grad_clip);
    opt_.step(params, lr);
    ++step_;

    if (metrics) {
      metrics(StepMetrics{step_ - 1, batch_loss / kLn2, lr, seconds_since(t0)});
    }
    if (!checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
        step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.steps) {
      save_checkpoint(checkpoint_path, make_checkpoint());
    }
  }
  if (!checkpoint_path.empty()) {
    save_checkpoint(checkpoint_path, make_checkpoint());
  }
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck = snapshot(model_);
  snapshot_optimizer(ck, opt_);
  ck.has_trainer = true;
  ck.train_step = step_;
  ck.data_rng_state = data_rng_.state();
  return ck;
}

namespace {

// Sum of next-byte NLL over one block; logits row t predicts token t+1.
void block_nll(const Model& model, const std::vector<int32_t>& tokens,
               double* nll_sum, int64_t* count) {
  const std::vector<double> logits = forward_inference(model, tokens);
  const int64_t v = model.config().vocab;
  const int64_t L = static_cast<int64_t>(tokens.size());
  for (int64_t t = 1; t < L; ++t) {
    const double* row = logits.data() + (t - 1) * v;
    double mx = row[0];
    for (int64_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double lse = 0.0;
    for (int64_t c = 0; c < v; ++c) lse += std::exp(row[c] - mx);
    *nll_sum += mx + std::log(lse) - row[tokens[t]];
    ++(*count);
  }
}

}  // namespace

EvalResult evaluate(const Model& model, const std::vector<uint8_t>& corpus,
                    size_t begin, size_t end, int64_t seq_len, int threads) {
  if (seq_len < 2) {
    fail(ErrorCode::Config, "evaluate: seq_len must be >= 2");
  }
  if (seq_len > model.config().max_seq_len) {
    fail(ErrorCode::Config, "evaluate: seq_len " + std::to_string(seq_len) +
                                " exceeds model max_seq_len " +
                                std::to_string(model.config().max_seq_len));
  }
  if (begin > end || end > corpus.size()) {
    fail(ErrorCode::Data, "evaluate: corpus region [" + std::to_string(begin) +
                              ", " + std::to_string(end) + ") is out of bounds");
  }
  const size_t len = end - begin;
  const int64_t blocks = static_cast<int64_t>(len / static_cast<size_t>(seq_len));
  if (blocks < 1) {
    fail(ErrorCode::Data, "evaluate: split has " + std::to_string(len) +
                              " bytes, need at least " + std::to_string(seq_len));
  }

  if (threads < 1) threads = 1;
  if (threads > blocks) threads = static_cast<int>(blocks);

  // Per-block partial sums reduced in block order: the result is bitwise
  // identical no matter how the blocks are spread across threads.
  std::vector<double> per_block_nll(blocks, 0.0);
  std::vector<int64_t> per_block_count(blocks, 0);
  auto work = [&](int tid) {
    const int64_t b0 = blocks * tid / threads;
    const int64_t b1 = blocks * (tid + 1) / threads;
    std::vector<int32_t> tokens(seq_len);
    for (int64_t b = b0; b < b1; ++b) {
      const size_t off = begin + static_cast<size_t>(b) * seq_len;
      for (int64_t t = 0; t < seq_len; ++t) tokens[t] = corpus[off + t];
      block_nll(model, tokens, &per_block_nll[b], &per_block_count[b]);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  double nll = 0.0;
  int64_t count = 0;
  for (int64_t b = 0; b < blocks; ++b) {
    nll += per_block_nll[b];
    count += per_block_count[b];
  }
  const double mean = nll / static_cast<double>(count);
  return EvalResult{std::exp(mean), mean / kLn2, count};
}

int eval_threads_from_env() {
  const char* env = std::getenv("MSWA_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

std::string run_budget_comparison(const std::vector<ComparisonEntry>& entries,
                                  const TrainConfig& tcfg, uint64_t model_seed,
                                  const std::vector<uint8_t>& corpus,
                                  double train_frac, int64_t eval_seq_len,
                                  const MetricsFn& metrics) {
  if (entries.size() < 2) {
    fail(ErrorCode::Config, "comparison: need at least two configurations");
  }
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    fail(ErrorCode::Config, "comparison: train_frac must lie in (0, 1)");
  }

  // Exact budgets first: the point of the harness is that cost claims are
  // checked before any training happens.
  std::vector<long long> budgets;
  for (const auto& e : entries) {
    e.config.validate();
    const int64_t n_local = e.config.local_layer_count();
    long long total = 0;
    if (n_local > 0) {
      const WindowPlan plan =
          build_plan(e.config.strategy, n_local, e.config.heads, e.config.base_window);
      total = total_budget(plan).total_windows;
    }
    budgets.push_back(total);
  }
  for (size_t i = 1; i < entries.size(); ++i) {
    if (budgets[i] > budgets[0]) {
      fail(ErrorCode::Config, "comparison: '" + entries[i].label +
                                  "' has window budget " + std::to_string(budgets[i]) +
                                  " exceeding baseline '" + entries[0].label + "' (" +
                                  std::to_string(budgets[0]) + ")");
    }
  }

  const size_t split = static_cast<size_t>(static_cast<double>(corpus.size()) * train_frac);

  std::ostringstream csv;
  csv << "label,strategy,base_window,total_windows,budget_ratio,train_bpc,eval_ppl,eval_bpc\n";
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    Model model(e.config, model_seed);
    Trainer trainer(model, tcfg);
    double last_bpc = 0.0;
    trainer.run(corpus, 0, split,
                [&](const StepMetrics& m) {
                  last_bpc = m.loss_bpc;
                  if (metrics) metrics(m);
                });
    const EvalResult ev = evaluate(model, corpus, split, corpus.size(),
                                   eval_seq_len, eval_threads_from_env());
    csv << e.label << ',' << strategy_name(e.config.strategy) << ','
        << e.config.base_window << ',' << budgets[i] << ','
        << Rational::of(budgets[i], budgets[0]).str() << ',' << std::fixed
        << std::setprecision(4) << last_bpc << ',' << std::setprecision(3)
        << ev.ppl << ',' << std::setprecision(4) << ev.bpc << '\n';
    csv.unsetf(std::ios::fixed);
  }
  return csv.str();
}

}  // namespace mswa
