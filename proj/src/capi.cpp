#include "mswa.h"

#include <cstdlib>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "cost.hpp"
#include "decode.hpp"
#include "error.hpp"
#include "model.hpp"
#include "train.hpp"
#include "window_plan.hpp"

struct mswa_plan {
  mswa::WindowPlan plan;
};
struct mswa_model {
  mswa::Model model;
};
struct mswa_decoder {
  mswa::DecodeState state;
};
struct mswa_cost_report {
  mswa::CostReport report;
};

namespace {

thread_local std::string g_last_error;

mswa_status map_code(mswa::ErrorCode code) {
  switch (code) {
    case mswa::ErrorCode::InvalidArgument: return MSWA_ERR_INVALID_ARGUMENT;
    case mswa::ErrorCode::Plan: return MSWA_ERR_PLAN;
    case mswa::ErrorCode::Shape: return MSWA_ERR_SHAPE;
    case mswa::ErrorCode::Vocab: return MSWA_ERR_VOCAB;
    case mswa::ErrorCode::Io: return MSWA_ERR_IO;
    case mswa::ErrorCode::Numeric: return MSWA_ERR_NUMERIC;
    case mswa::ErrorCode::State: return MSWA_ERR_STATE;
    case mswa::ErrorCode::Config: return MSWA_ERR_CONFIG;
    case mswa::ErrorCode::Data: return MSWA_ERR_DATA;
  }
  return MSWA_ERR_UNKNOWN;
}

template <typename Fn>
mswa_status guarded(Fn&& fn) {
  try {
    fn();
    return MSWA_OK;
  } catch (const mswa::Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSWA_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return MSWA_ERR_UNKNOWN;
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) mswa::fail(mswa::ErrorCode::InvalidArgument, what);
}

mswa::Strategy to_cpp(mswa_strategy s) {
  switch (s) {
    case MSWA_STRATEGY_UNIFORM: return mswa::Strategy::Uniform;
    case MSWA_STRATEGY_MSWA_H: return mswa::Strategy::MswaH;
    case MSWA_STRATEGY_MSWA_L: return mswa::Strategy::MswaL;
    case MSWA_STRATEGY_MSWA: return mswa::Strategy::Mswa;
    case MSWA_STRATEGY_MSWA_REVERSED_LAYERS: return mswa::Strategy::MswaReversedLayers;
    case MSWA_STRATEGY_MSWA_ARITHMETIC: return mswa::Strategy::MswaArithmetic;
  }
  mswa::fail(mswa::ErrorCode::InvalidArgument,
             "unknown strategy id " + std::to_string(static_cast<int>(s)));
}

mswa_strategy to_c(mswa::Strategy s) {
  switch (s) {
    case mswa::Strategy::Uniform: return MSWA_STRATEGY_UNIFORM;
    case mswa::Strategy::MswaH: return MSWA_STRATEGY_MSWA_H;
    case mswa::Strategy::MswaL: return MSWA_STRATEGY_MSWA_L;
    case mswa::Strategy::Mswa: return MSWA_STRATEGY_MSWA;
    case mswa::Strategy::MswaReversedLayers: return MSWA_STRATEGY_MSWA_REVERSED_LAYERS;
    case mswa::Strategy::MswaArithmetic: return MSWA_STRATEGY_MSWA_ARITHMETIC;
  }
  return MSWA_STRATEGY_UNIFORM;
}

mswa::ModelConfig to_cpp(const mswa_model_config& c) {
  mswa::ModelConfig cfg;
  cfg.layers = c.layers;
  cfg.heads = c.heads;
  cfg.model_dim = c.model_dim;
  cfg.head_dim = c.head_dim;
  cfg.vocab = c.vocab;
  cfg.base_window = c.base_window;
  cfg.strategy = to_cpp(c.strategy);
  cfg.feature_dim = c.feature_dim;
  cfg.max_seq_len = c.max_seq_len;
  if (c.pattern) {
    cfg.pattern.reserve(c.layers);
    for (int32_t i = 0; i < c.layers; ++i) {
      switch (c.pattern[i]) {
        case MSWA_LAYER_LOCAL: cfg.pattern.push_back(mswa::LayerKind::Local); break;
        case MSWA_LAYER_LINEAR: cfg.pattern.push_back(mswa::LayerKind::Linear); break;
        case MSWA_LAYER_FULL: cfg.pattern.push_back(mswa::LayerKind::Full); break;
        default:
          mswa::fail(mswa::ErrorCode::Config,
                     "pattern[" + std::to_string(i) + "] = " +
                         std::to_string(c.pattern[i]) + " is not a layer kind");
      }
    }
  }
  return cfg;
}

mswa::TrainConfig to_cpp(const mswa_train_config& c) {
  mswa::TrainConfig cfg;
  cfg.steps = c.steps;
  cfg.batch_size = c.batch_size;
  cfg.seq_len = c.seq_len;
  cfg.warmup_steps = c.warmup_steps;
  cfg.lr = c.lr;
  cfg.beta1 = c.beta1;
  cfg.beta2 = c.beta2;
  cfg.weight_decay = c.weight_decay;
  cfg.grad_clip = c.grad_clip;
  cfg.seed = c.seed;
  cfg.checkpoint_every = c.checkpoint_every;
  return cfg;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) mswa::fail(mswa::ErrorCode::Io, "out of memory");
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

mswa::MetricsFn wrap_callback(mswa_train_callback callback, void* user) {
  if (!callback) return {};
  return [callback, user](const mswa::StepMetrics& m) {
    callback(user, static_cast<int32_t>(m.step), m.loss_bpc, m.lr, m.elapsed_s);
  };
}

}  // namespace

extern "C" {

const char* mswa_last_error(void) { return g_last_error.c_str(); }

void mswa_string_free(char* s) { std::free(s); }

const char* mswa_strategy_name(mswa_strategy strategy) {
  switch (strategy) {
    case MSWA_STRATEGY_UNIFORM:
    case MSWA_STRATEGY_MSWA_H:
    case MSWA_STRATEGY_MSWA_L:
    case MSWA_STRATEGY_MSWA:
    case MSWA_STRATEGY_MSWA_REVERSED_LAYERS:
    case MSWA_STRATEGY_MSWA_ARITHMETIC:
      return mswa::strategy_name(to_cpp(strategy));
  }
  return "?";
}

mswa_status mswa_strategy_parse(const char* name, mswa_strategy* out) {
  return guarded([&] {
    require(name && out, "mswa_strategy_parse: null argument");
    const auto s = mswa::strategy_from_name(name);
    if (!s) {
      mswa::fail(mswa::ErrorCode::InvalidArgument,
                 std::string("unknown strategy '") + name + "'");
    }
    *out = to_c(*s);
  });
}

mswa_status mswa_plan_build(mswa_strategy strategy, int32_t layers, int32_t heads,
                            int32_t base_window, mswa_plan** out) {
  return guarded([&] {
    require(out != nullptr, "mswa_plan_build: null output");
    *out = new mswa_plan{mswa::build_plan(to_cpp(strategy), layers, heads,
                                          base_window)};
  });
}

mswa_status mswa_plan_window(const mswa_plan* plan, int32_t layer, int32_t head,
                             int32_t* out) {
  return guarded([&] {
    require(plan && out, "mswa_plan_window: null argument");
    if (layer < 0 || layer >= plan->plan.layers || head < 0 ||
        head >= plan->plan.heads) {
      mswa::fail(mswa::ErrorCode::InvalidArgument,
                 "mswa_plan_window: index (" + std::to_string(layer) + ", " +
                     std::to_string(head) + ") outside " +
                     std::to_string(plan->plan.layers) + "x" +
                     std::to_string(plan->plan.heads));
    }
    *out = static_cast<int32_t>(plan->plan.window(layer, head));
  });
}

mswa_status mswa_plan_budget(const mswa_plan* plan, int64_t* total_windows,
                             int64_t* ratio_num, int64_t* ratio_den) {
  return guarded([&] {
    require(plan != nullptr, "mswa_plan_budget: null plan");
    const mswa::Budget b = mswa::total_budget(plan->plan);
    if (total_windows) *total_windows = b.total_windows;
    if (ratio_num) *ratio_num = b.ratio_to_uniform.num;
    if (ratio_den) *ratio_den = b.ratio_to_uniform.den;
  });
}

mswa_status mswa_plan_relative_cost(const mswa_plan* plan,
                                    const mswa_plan* reference, double* out) {
  return guarded([&] {
    require(plan && reference && out, "mswa_plan_relative_cost: null argument");
    *out = mswa::relative_cost(plan->plan, reference->plan);
  });
}

mswa_status mswa_plan_format(const mswa_plan* plan, char** out) {
  return guarded([&] {
    require(plan && out, "mswa_plan_format: null argument");
    *out = dup_string(mswa::format_plan(plan->plan));
  });
}

mswa_status mswa_plan_parse(const char* text, mswa_plan** out) {
  return guarded([&] {
    require(text && out, "mswa_plan_parse: null argument");
    *out = new mswa_plan{mswa::parse_plan(text)};
  });
}

void mswa_plan_free(mswa_plan* plan) { delete plan; }

void mswa_model_config_default(mswa_model_config* cfg) {
  if (!cfg) return;
  const mswa::ModelConfig d;
  cfg->layers = static_cast<int32_t>(d.layers);
  cfg->heads = static_cast<int32_t>(d.heads);
  cfg->model_dim = static_cast<int32_t>(d.model_dim);
  cfg->head_dim = static_cast<int32_t>(d.head_dim);
  cfg->vocab = static_cast<int32_t>(d.vocab);
  cfg->base_window = static_cast<int32_t>(d.base_window);
  cfg->strategy = to_c(d.strategy);
  cfg->feature_dim = static_cast<int32_t>(d.feature_dim);
  cfg->max_seq_len = static_cast<int32_t>(d.max_seq_len);
  cfg->pattern = NULL;
}

mswa_status mswa_hybrid_pattern(int32_t layers, int32_t* pattern_out) {
  return guarded([&] {
    require(pattern_out != nullptr, "mswa_hybrid_pattern: null output");
    const auto pat = mswa::ModelConfig::hybrid_pattern(layers);
    for (size_t i = 0; i < pat.size(); ++i) {
      switch (pat[i]) {
        case mswa::LayerKind::Local: pattern_out[i] = MSWA_LAYER_LOCAL; break;
        case mswa::LayerKind::Linear: pattern_out[i] = MSWA_LAYER_LINEAR; break;
        case mswa::LayerKind::Full: pattern_out[i] = MSWA_LAYER_FULL; break;
      }
    }
  });
}

mswa_status mswa_model_create(const mswa_model_config* cfg, uint64_t seed,
                              mswa_model** out) {
  return guarded([&] {
    require(cfg && out, "mswa_model_create: null argument");
    *out = new mswa_model{mswa::Model(to_cpp(*cfg), seed)};
  });
}

mswa_status mswa_model_save(const mswa_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "mswa_model_save: null argument");
    mswa::save_checkpoint(path, mswa::snapshot(model->model));
  });
}

mswa_status mswa_model_load(const char* path, mswa_model** out) {
  return guarded([&] {
    require(path && out, "mswa_model_load: null argument");
    *out = new mswa_model{mswa::model_from_checkpoint(mswa::load_checkpoint(path))};
  });
}

void mswa_model_free(mswa_model* model) { delete model; }

mswa_status mswa_model_param_count(const mswa_model* model, int64_t* out) {
  return guarded([&] {
    require(model && out, "mswa_model_param_count: null argument");
    *out = model->model.parameter_count();
  });
}

mswa_status mswa_model_window(const mswa_model* model, int32_t layer,
                              int32_t head, int32_t* out) {
  return guarded([&] {
    require(model && out, "mswa_model_window: null argument");
    const auto& cfg = model->model.config();
    if (layer < 0 || layer >= cfg.layers || head < 0 || head >= cfg.heads) {
      mswa::fail(mswa::ErrorCode::InvalidArgument,
                 "mswa_model_window: index out of range");
    }
    const auto& lw = model->model.layers()[layer];
    *out = lw.kind == mswa::LayerKind::Linear
               ? 0
               : static_cast<int32_t>(lw.windows[head]);
  });
}

mswa_status mswa_model_forward(const mswa_model* model, const int32_t* tokens,
                               int32_t n, double* logits_out) {
  return guarded([&] {
    require(model && tokens && logits_out, "mswa_model_forward: null argument");
    require(n >= 1, "mswa_model_forward: n must be >= 1");
    const std::vector<int32_t> toks(tokens, tokens + n);
    const std::vector<double> logits = mswa::forward_inference(model->model, toks);
    std::memcpy(logits_out, logits.data(), logits.size() * sizeof(double));
  });
}

void mswa_train_config_default(mswa_train_config* cfg) {
  if (!cfg) return;
  const mswa::TrainConfig d;
  cfg->steps = static_cast<int32_t>(d.steps);
  cfg->batch_size = static_cast<int32_t>(d.batch_size);
  cfg->seq_len = static_cast<int32_t>(d.seq_len);
  cfg->warmup_steps = static_cast<int32_t>(d.warmup_steps);
  cfg->lr = d.lr;
  cfg->beta1 = d.beta1;
  cfg->beta2 = d.beta2;
  cfg->weight_decay = d.weight_decay;
  cfg->grad_clip = d.grad_clip;
  cfg->seed = d.seed;
  cfg->checkpoint_every = static_cast<int32_t>(d.checkpoint_every);
}

mswa_status mswa_train(mswa_model* model, const uint8_t* corpus,
                       size_t corpus_len, const mswa_train_config* cfg,
                       const char* checkpoint_path, mswa_train_callback callback,
                       void* user) {
  return guarded([&] {
    require(model && corpus && cfg, "mswa_train: null argument");
    const std::vector<uint8_t> data(corpus, corpus + corpus_len);
    mswa::Trainer trainer(model->model, to_cpp(*cfg));
    trainer.run(data, 0, data.size(), wrap_callback(callback, user),
                checkpoint_path ? checkpoint_path : "");
  });
}

mswa_status mswa_train_resume(const char* checkpoint_path, const uint8_t* corpus,
                              size_t corpus_len, const mswa_train_config* cfg,
                              mswa_train_callback callback, void* user,
                              mswa_model** out) {
  return guarded([&] {
    require(checkpoint_path && corpus && cfg && out,
            "mswa_train_resume: null argument");
    const mswa::Checkpoint ck = mswa::load_checkpoint(checkpoint_path);
    auto holder = new mswa_model{mswa::model_from_checkpoint(ck)};
    try {
      const std::vector<uint8_t> data(corpus, corpus + corpus_len);
      mswa::Trainer trainer(holder->model, to_cpp(*cfg), ck);
      trainer.run(data, 0, data.size(), wrap_callback(callback, user),
                  checkpoint_path);
    } catch (...) {
      delete holder;
      throw;
    }
    *out = holder;
  });
}

mswa_status mswa_evaluate(const mswa_model* model, const uint8_t* corpus,
                          size_t corpus_len, int32_t seq_len, int32_t threads,
                          double* ppl, double* bpc) {
  return guarded([&] {
    require(model && corpus, "mswa_evaluate: null argument");
    const std::vector<uint8_t> data(corpus, corpus + corpus_len);
    const int t = threads > 0 ? threads : mswa::eval_threads_from_env();
    const mswa::EvalResult r =
        mswa::evaluate(model->model, data, 0, data.size(), seq_len, t);
    if (ppl) *ppl = r.ppl;
    if (bpc) *bpc = r.bpc;
  });
}

mswa_status mswa_budget_comparison(const char* baseline_label,
                                   const mswa_model_config* baseline,
                                   const char* challenger_label,
                                   const mswa_model_config* challenger,
                                   const mswa_train_config* tcfg,
                                   uint64_t model_seed, const uint8_t* corpus,
                                   size_t corpus_len, double train_frac,
                                   int32_t eval_seq_len, char** csv_out) {
  return guarded([&] {
    require(baseline_label && baseline && challenger_label && challenger &&
                tcfg && corpus && csv_out,
            "mswa_budget_comparison: null argument");
    const std::vector<uint8_t> data(corpus, corpus + corpus_len);
    const std::vector<mswa::ComparisonEntry> entries = {
        {baseline_label, to_cpp(*baseline)},
        {challenger_label, to_cpp(*challenger)},
    };
    *csv_out = dup_string(mswa::run_budget_comparison(
        entries, to_cpp(*tcfg), model_seed, data, train_frac, eval_seq_len));
  });
}

mswa_status mswa_decoder_create(const mswa_model* model, mswa_decoder** out) {
  return guarded([&] {
    require(model && out, "mswa_decoder_create: null argument");
    *out = new mswa_decoder{mswa::DecodeState(model->model)};
  });
}

mswa_status mswa_decoder_step(mswa_decoder* dec, int32_t token,
                              double* logits_out) {
  return guarded([&] {
    require(dec && logits_out, "mswa_decoder_step: null argument");
    const std::vector<double> logits = dec->state.step(token);
    std::memcpy(logits_out, logits.data(), logits.size() * sizeof(double));
  });
}

mswa_status mswa_decoder_prefill(mswa_decoder* dec, const int32_t* tokens,
                                 int32_t n, double* logits_out) {
  return guarded([&] {
    require(dec && tokens && logits_out, "mswa_decoder_prefill: null argument");
    require(n >= 1, "mswa_decoder_prefill: n must be >= 1");
    const std::vector<int32_t> toks(tokens, tokens + n);
    const std::vector<double> logits = dec->state.prefill(toks);
    std::memcpy(logits_out, logits.data(), logits.size() * sizeof(double));
  });
}

mswa_status mswa_decoder_position(const mswa_decoder* dec, int64_t* out) {
  return guarded([&] {
    require(dec && out, "mswa_decoder_position: null argument");
    *out = dec->state.position();
  });
}

mswa_status mswa_decoder_cache_bytes(const mswa_decoder* dec,
                                     int32_t bytes_per_scalar, uint64_t* out) {
  return guarded([&] {
    require(dec && out, "mswa_decoder_cache_bytes: null argument");
    require(bytes_per_scalar >= 1, "mswa_decoder_cache_bytes: bytes_per_scalar must be >= 1");
    *out = dec->state.cache_bytes(bytes_per_scalar);
  });
}

mswa_status mswa_decoder_reset(mswa_decoder* dec) {
  return guarded([&] {
    require(dec != nullptr, "mswa_decoder_reset: null decoder");
    dec->state.reset();
  });
}

void mswa_decoder_free(mswa_decoder* dec) { delete dec; }

mswa_status mswa_cost_report_create(const mswa_model_config* cfg, int64_t seq_len,
                                    mswa_cost_report** out) {
  return guarded([&] {
    require(cfg && out, "mswa_cost_report_create: null argument");
    *out = new mswa_cost_report{mswa::cost_report(to_cpp(*cfg), seq_len)};
  });
}

mswa_status mswa_cost_total_flops(const mswa_cost_report* report, int64_t* out) {
  return guarded([&] {
    require(report && out, "mswa_cost_total_flops: null argument");
    *out = report->report.total_flops();
  });
}

mswa_status mswa_cost_attended_pairs(const mswa_cost_report* report,
                                     int64_t* out) {
  return guarded([&] {
    require(report && out, "mswa_cost_attended_pairs: null argument");
    *out = report->report.total_attended_pairs;
  });
}

mswa_status mswa_cost_cache_bytes(const mswa_cost_report* report,
                                  int32_t bytes_per_scalar, uint64_t* out) {
  return guarded([&] {
    require(report && out, "mswa_cost_cache_bytes: null argument");
    require(bytes_per_scalar >= 1, "mswa_cost_cache_bytes: bytes_per_scalar must be >= 1");
    *out = report->report.cache_bytes(bytes_per_scalar);
  });
}

mswa_status mswa_cost_relative(const mswa_cost_report* report,
                               const mswa_cost_report* reference, double* out) {
  return guarded([&] {
    require(report && reference && out, "mswa_cost_relative: null argument");
    *out = mswa::relative_cost(report->report, reference->report);
  });
}

mswa_status mswa_cost_format(const mswa_cost_report* report, int32_t csv,
                             char** out) {
  return guarded([&] {
    require(report && out, "mswa_cost_format: null argument");
    *out = dup_string(csv ? mswa::format_cost_csv(report->report)
                          : mswa::format_cost_text(report->report));
  });
}

void mswa_cost_report_free(mswa_cost_report* report) { delete report; }

}  // extern "C"
