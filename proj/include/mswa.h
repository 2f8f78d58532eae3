/*
 * mswa: multi-scale window attention decoders on the CPU.
 *
 * C interface to the core library: window-allocation plans, byte-level
 * decoder models (windowed softmax, full causal and Taylor-feature linear
 * attention layers), AdamW training, perplexity evaluation, incremental
 * decoding with per-head ring caches, and an analytic cost model.
 *
 * Conventions:
 *   - Every fallible call returns mswa_status; MSWA_OK is 0. On failure,
 *     mswa_last_error() returns a thread-local description of what went
 *     wrong in the failing call.
 *   - Objects returned through mswa_*_create/build/parse/load are owned by
 *     the caller and released with the matching mswa_*_free.
 *   - A decoder borrows its model: the model must outlive the decoder.
 *   - Strings returned through char** are released with mswa_string_free.
 */

#ifndef MSWA_H
#define MSWA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32) && defined(MSWA_SHARED)
#  ifdef MSWA_BUILD
#    define MSWA_API __declspec(dllexport)
#  else
#    define MSWA_API __declspec(dllimport)
#  endif
#else
#  define MSWA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mswa_status {
  MSWA_OK = 0,
  MSWA_ERR_INVALID_ARGUMENT = 1,
  MSWA_ERR_PLAN = 2,
  MSWA_ERR_SHAPE = 3,
  MSWA_ERR_VOCAB = 4,
  MSWA_ERR_IO = 5,
  MSWA_ERR_NUMERIC = 6,
  MSWA_ERR_STATE = 7,
  MSWA_ERR_CONFIG = 8,
  MSWA_ERR_DATA = 9,
  MSWA_ERR_UNKNOWN = 127
} mswa_status;

/* How window sizes vary across layers and heads. */
typedef enum mswa_strategy {
  MSWA_STRATEGY_UNIFORM = 0,
  MSWA_STRATEGY_MSWA_H = 1,
  MSWA_STRATEGY_MSWA_L = 2,
  MSWA_STRATEGY_MSWA = 3,
  MSWA_STRATEGY_MSWA_REVERSED_LAYERS = 4,
  MSWA_STRATEGY_MSWA_ARITHMETIC = 5
} mswa_strategy;

typedef enum mswa_layer_kind {
  MSWA_LAYER_LOCAL = 0,  /* windowed softmax attention */
  MSWA_LAYER_LINEAR = 1, /* Taylor-feature linear attention */
  MSWA_LAYER_FULL = 2    /* full causal softmax attention */
} mswa_layer_kind;

typedef struct mswa_plan mswa_plan;
typedef struct mswa_model mswa_model;
typedef struct mswa_decoder mswa_decoder;
typedef struct mswa_cost_report mswa_cost_report;

/* Message for the most recent failing call on this thread; never NULL. */
MSWA_API const char* mswa_last_error(void);

MSWA_API void mswa_string_free(char* s);

/* ---------------- window plans ---------------- */

MSWA_API const char* mswa_strategy_name(mswa_strategy strategy);
/* Case-insensitive; accepts '_' for '-'. */
MSWA_API mswa_status mswa_strategy_parse(const char* name, mswa_strategy* out);

/* Builds the layers x heads window matrix for a strategy. Divisibility
 * violations (layers/heads not multiples of 4 where grouped, base_window not
 * a multiple of the strategy's modulus) fail with MSWA_ERR_PLAN. */
MSWA_API mswa_status mswa_plan_build(mswa_strategy strategy, int32_t layers,
                                     int32_t heads, int32_t base_window,
                                     mswa_plan** out);
MSWA_API mswa_status mswa_plan_window(const mswa_plan* plan, int32_t layer,
                                      int32_t head, int32_t* out);
/* Sum of all windows, plus the exact reduced fraction of that sum over the
 * uniform budget layers*heads*base_window. */
MSWA_API mswa_status mswa_plan_budget(const mswa_plan* plan,
                                      int64_t* total_windows, int64_t* ratio_num,
                                      int64_t* ratio_den);
/* Budget ratio plan/reference; plans must agree on layers and heads. */
MSWA_API mswa_status mswa_plan_relative_cost(const mswa_plan* plan,
                                             const mswa_plan* reference,
                                             double* out);
/* Text round-trip: "layers heads base_window strategy" header plus one line
 * of windows per layer. Parsing re-validates against the named strategy. */
MSWA_API mswa_status mswa_plan_format(const mswa_plan* plan, char** out);
MSWA_API mswa_status mswa_plan_parse(const char* text, mswa_plan** out);
MSWA_API void mswa_plan_free(mswa_plan* plan);

/* ---------------- models ---------------- */

typedef struct mswa_model_config {
  int32_t layers;
  int32_t heads;
  int32_t model_dim;
  int32_t head_dim;
  int32_t vocab;       /* byte-level: 256 */
  int32_t base_window;
  mswa_strategy strategy;
  int32_t feature_dim; /* projected q/k width in linear layers */
  int32_t max_seq_len;
  /* Optional per-layer mechanism (mswa_layer_kind values, length = layers);
   * NULL means every layer is windowed. */
  const int32_t* pattern;
} mswa_model_config;

MSWA_API void mswa_model_config_default(mswa_model_config* cfg);
/* Fills pattern_out[layers] with the repeating [linear, local, local] block;
 * layers must be a positive multiple of 3. */
MSWA_API mswa_status mswa_hybrid_pattern(int32_t layers, int32_t* pattern_out);

MSWA_API mswa_status mswa_model_create(const mswa_model_config* cfg,
                                       uint64_t seed, mswa_model** out);
MSWA_API mswa_status mswa_model_save(const mswa_model* model, const char* path);
MSWA_API mswa_status mswa_model_load(const char* path, mswa_model** out);
MSWA_API void mswa_model_free(mswa_model* model);

MSWA_API mswa_status mswa_model_param_count(const mswa_model* model,
                                            int64_t* out);
/* Effective per-head window: the plan window for windowed layers, -1 for
 * full layers, 0 for linear layers. */
MSWA_API mswa_status mswa_model_window(const mswa_model* model, int32_t layer,
                                       int32_t head, int32_t* out);

/* Next-token logits for every position; logits_out holds n * vocab doubles,
 * row t scoring the token that follows tokens[t]. */
MSWA_API mswa_status mswa_model_forward(const mswa_model* model,
                                        const int32_t* tokens, int32_t n,
                                        double* logits_out);

/* ---------------- training & evaluation ---------------- */

typedef struct mswa_train_config {
  int32_t steps;
  int32_t batch_size;
  int32_t seq_len;
  int32_t warmup_steps;
  double lr;
  double beta1;
  double beta2;
  double weight_decay;
  double grad_clip; /* global L2 norm; <= 0 disables */
  uint64_t seed;    /* batch sampling stream */
  int32_t checkpoint_every;
} mswa_train_config;

typedef void (*mswa_train_callback)(void* user, int32_t step, double loss_bpc,
                                    double lr, double elapsed_s);

MSWA_API void mswa_train_config_default(mswa_train_config* cfg);

/* Trains in place on corpus bytes. checkpoint_path may be NULL (no saves);
 * otherwise the final state (and every checkpoint_every steps) is saved
 * there, including optimizer moments and the batch stream position. */
MSWA_API mswa_status mswa_train(mswa_model* model, const uint8_t* corpus,
                                size_t corpus_len, const mswa_train_config* cfg,
                                const char* checkpoint_path,
                                mswa_train_callback callback, void* user);

/* Resumes a run saved by mswa_train and continues to cfg->steps. The
 * returned model is a fresh handle built from the checkpoint. */
MSWA_API mswa_status mswa_train_resume(const char* checkpoint_path,
                                       const uint8_t* corpus, size_t corpus_len,
                                       const mswa_train_config* cfg,
                                       mswa_train_callback callback, void* user,
                                       mswa_model** out);

/* Mean next-byte NLL over non-overlapping seq_len blocks. threads <= 0 reads
 * MSWA_THREADS (default 1); any thread count gives identical results. */
MSWA_API mswa_status mswa_evaluate(const mswa_model* model,
                                   const uint8_t* corpus, size_t corpus_len,
                                   int32_t seq_len, int32_t threads, double* ppl,
                                   double* bpc);

/* Budget-matched strategy comparison: trains one model per config with the
 * same seed and batch stream on the head of the corpus, evaluates both on
 * the tail, and emits CSV (label, strategy, base_window, total_windows,
 * budget_ratio, train_bpc, eval_ppl, eval_bpc). Fails with MSWA_ERR_CONFIG
 * before training if the challenger's window budget exceeds the baseline's. */
MSWA_API mswa_status mswa_budget_comparison(
    const char* baseline_label, const mswa_model_config* baseline,
    const char* challenger_label, const mswa_model_config* challenger,
    const mswa_train_config* tcfg, uint64_t model_seed, const uint8_t* corpus,
    size_t corpus_len, double train_frac, int32_t eval_seq_len, char** csv_out);

/* ---------------- incremental decoding ---------------- */

MSWA_API mswa_status mswa_decoder_create(const mswa_model* model,
                                         mswa_decoder** out);
/* Feeds one token; logits_out holds vocab doubles for the next token. */
MSWA_API mswa_status mswa_decoder_step(mswa_decoder* dec, int32_t token,
                                       double* logits_out);
/* Parallel prefill of a fresh decoder; logits_out holds vocab doubles for
 * the token following the prompt. */
MSWA_API mswa_status mswa_decoder_prefill(mswa_decoder* dec,
                                          const int32_t* tokens, int32_t n,
                                          double* logits_out);
/* Tokens consumed so far. */
MSWA_API mswa_status mswa_decoder_position(const mswa_decoder* dec,
                                           int64_t* out);
/* Bytes of live cache right now at the given scalar width: key/value rows
 * actually held per windowed head plus constant linear-head state. */
MSWA_API mswa_status mswa_decoder_cache_bytes(const mswa_decoder* dec,
                                              int32_t bytes_per_scalar,
                                              uint64_t* out);
MSWA_API mswa_status mswa_decoder_reset(mswa_decoder* dec);
MSWA_API void mswa_decoder_free(mswa_decoder* dec);

/* ---------------- cost model ---------------- */

MSWA_API mswa_status mswa_cost_report_create(const mswa_model_config* cfg,
                                             int64_t seq_len,
                                             mswa_cost_report** out);
MSWA_API mswa_status mswa_cost_total_flops(const mswa_cost_report* report,
                                           int64_t* out);
MSWA_API mswa_status mswa_cost_attended_pairs(const mswa_cost_report* report,
                                              int64_t* out);
MSWA_API mswa_status mswa_cost_cache_bytes(const mswa_cost_report* report,
                                           int32_t bytes_per_scalar,
                                           uint64_t* out);
/* Window-budget ratio report/reference (full heads count seq_len - 1). */
MSWA_API mswa_status mswa_cost_relative(const mswa_cost_report* report,
                                        const mswa_cost_report* reference,
                                        double* out);
/* csv nonzero -> machine-readable per-layer rows; zero -> aligned text. */
MSWA_API mswa_status mswa_cost_format(const mswa_cost_report* report,
                                      int32_t csv, char** out);
MSWA_API void mswa_cost_report_free(mswa_cost_report* report);

#ifdef __cplusplus
}
#endif

#endif /* MSWA_H */
