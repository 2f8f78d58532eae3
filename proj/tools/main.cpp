// Command-line front end over the C API: plan inspection, training,
// evaluation, decode benchmarking and the analytic cost model.

#include <chrono>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mswa.h"

namespace {

int exit_code_for(mswa_status st) {
  switch (st) {
    case MSWA_OK:
      return 0;
    case MSWA_ERR_INVALID_ARGUMENT:
    case MSWA_ERR_PLAN:
    case MSWA_ERR_SHAPE:
    case MSWA_ERR_VOCAB:
    case MSWA_ERR_CONFIG:
    case MSWA_ERR_DATA:
      return 2;  // bad request: flags, plan or data shape
    default:
      return 1;  // io, numeric, state, unknown
  }
}

[[noreturn]] void die(mswa_status st) {
  std::fprintf(stderr, "error: %s\n", mswa_last_error());
  std::exit(exit_code_for(st));
}

void check(mswa_status st) {
  if (st != MSWA_OK) die(st);
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "error: cannot open '%s'\n", path.c_str());
    std::exit(2);
  }
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  return data;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::fprintf(stderr, "error: cannot write '%s'\n", path.c_str());
    std::exit(1);
  }
  out << text;
}

mswa_strategy parse_strategy_or_die(const std::string& name) {
  mswa_strategy s;
  check(mswa_strategy_parse(name.c_str(), &s));
  return s;
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Fill options from a key=value file; anything given on the command line
// keeps its value. Keys are the long option names without the leading dashes.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file '%s'\n", path.c_str());
    std::exit(2);
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim_ws(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: %s:%d: expected key=value\n", path.c_str(),
                   lineno);
      std::exit(2);
    }
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string value = trim_ws(line.substr(eq + 1));
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      std::fprintf(stderr, "error: %s:%d: unknown config key '%s'\n",
                   path.c_str(), lineno, key.c_str());
      std::exit(2);
    }
    if (opt->count() > 0) continue;  // explicit flags and earlier lines win
    opt->add_result(value);
    opt->run_callback();
  }
}

// Shared model-shape flags and their translation to mswa_model_config.
struct ModelFlags {
  int32_t layers = 4;
  int32_t heads = 4;
  int32_t model_dim = 128;
  int32_t head_dim = 32;
  int32_t window = 64;
  std::string strategy = "mswa";
  std::string pattern = "local";  // local | hybrid | comma list of kinds
  int32_t feature_dim = 16;
  int32_t max_seq_len = 4096;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "Decoder layers")->capture_default_str();
    cmd->add_option("--heads", heads, "Attention heads per layer")->capture_default_str();
    cmd->add_option("--model-dim", model_dim, "Residual width")->capture_default_str();
    cmd->add_option("--head-dim", head_dim, "Per-head width")->capture_default_str();
    cmd->add_option("--window", window, "Base window size w")->capture_default_str();
    cmd->add_option("--strategy", strategy,
                    "Window allocation: uniform, mswa-h, mswa-l, mswa, "
                    "mswa-reversed-layers, mswa-arithmetic")
        ->capture_default_str();
    cmd->add_option("--pattern", pattern,
                    "Layer mechanisms: 'local', 'hybrid' or a comma list of "
                    "local/linear/full")
        ->capture_default_str();
    cmd->add_option("--feature-dim", feature_dim, "Linear-layer feature width")
        ->capture_default_str();
    cmd->add_option("--max-seq-len", max_seq_len, "Decode/eval length bound")
        ->capture_default_str();
  }

  // pattern_store must stay alive while the config is used.
  mswa_model_config to_config(std::vector<int32_t>& pattern_store) const {
    mswa_model_config cfg;
    mswa_model_config_default(&cfg);
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.model_dim = model_dim;
    cfg.head_dim = head_dim;
    cfg.base_window = window;
    cfg.strategy = parse_strategy_or_die(strategy);
    cfg.feature_dim = feature_dim;
    cfg.max_seq_len = max_seq_len;
    pattern_store.clear();
    if (pattern == "local" || pattern.empty()) {
      cfg.pattern = nullptr;
      return cfg;
    }
    if (pattern == "hybrid") {
      pattern_store.resize(layers);
      check(mswa_hybrid_pattern(layers, pattern_store.data()));
    } else {
      std::stringstream ss(pattern);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "local") {
          pattern_store.push_back(MSWA_LAYER_LOCAL);
        } else if (item == "linear") {
          pattern_store.push_back(MSWA_LAYER_LINEAR);
        } else if (item == "full") {
          pattern_store.push_back(MSWA_LAYER_FULL);
        } else {
          std::fprintf(stderr, "error: unknown layer kind '%s' in --pattern\n",
                       item.c_str());
          std::exit(2);
        }
      }
      if (static_cast<int32_t>(pattern_store.size()) != layers) {
        std::fprintf(stderr,
                     "error: --pattern lists %zu layers but --layers is %d\n",
                     pattern_store.size(), layers);
        std::exit(2);
      }
    }
    cfg.pattern = pattern_store.data();
    return cfg;
  }

  std::string resolved_text() const {
    std::ostringstream out;
    out << "layers=" << layers << "\n"
        << "heads=" << heads << "\n"
        << "model-dim=" << model_dim << "\n"
        << "head-dim=" << head_dim << "\n"
        << "window=" << window << "\n"
        << "strategy=" << strategy << "\n"
        << "pattern=" << pattern << "\n"
        << "feature-dim=" << feature_dim << "\n"
        << "max-seq-len=" << max_seq_len << "\n";
    return out.str();
  }
};

// ---------------- plan ----------------

int run_plan(const std::string& strategy, int32_t layers, int32_t heads,
             int32_t window, const std::string& out_path) {
  mswa_plan* plan = nullptr;
  check(mswa_plan_build(parse_strategy_or_die(strategy), layers, heads, window,
                        &plan));
  char* text = nullptr;
  check(mswa_plan_format(plan, &text));
  int64_t total = 0, num = 0, den = 0;
  check(mswa_plan_budget(plan, &total, &num, &den));

  if (out_path.empty()) {
    std::fputs(text, stdout);
  } else {
    write_text_file(out_path, text);
  }
  std::fprintf(stdout, "total_windows=%" PRId64 " budget_ratio=%" PRId64 "/%" PRId64 "\n",
               total, num, den);
  mswa_string_free(text);
  mswa_plan_free(plan);
  return 0;
}

// ---------------- train ----------------

struct TrainLogger {
  std::ofstream csv;
  int32_t log_every = 10;
  int32_t total_steps = 0;
};

void train_callback(void* user, int32_t step, double loss_bpc, double lr,
                    double elapsed_s) {
  auto* log = static_cast<TrainLogger*>(user);
  log->csv << step << ',' << loss_bpc << ',' << lr << ',' << elapsed_s << '\n';
  if (log->log_every > 0 &&
      (step % log->log_every == 0 || step + 1 == log->total_steps)) {
    std::fprintf(stderr, "step %d/%d  loss %.3f bpc  lr %.2e  %.1fs\n", step + 1,
                 log->total_steps, loss_bpc, lr, elapsed_s);
  }
}

int run_train(const ModelFlags& mf, const mswa_train_config& tcfg,
              const std::string& data_path, const std::string& out_dir,
              uint64_t model_seed, bool resume, int32_t log_every) {
  const std::vector<uint8_t> corpus = read_file_bytes(data_path);
  const std::string ckpt_path = out_dir + "/model.ckpt";
  const std::string metrics_path = out_dir + "/metrics.csv";
  const std::string resolved_path = out_dir + "/config.resolved";

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  TrainLogger log;
  log.csv.open(metrics_path, resume ? std::ios::app : std::ios::trunc);
  if (!log.csv) {
    std::fprintf(stderr, "error: cannot write '%s'\n", metrics_path.c_str());
    return 1;
  }
  if (!resume) log.csv << "step,loss_bpc,lr,elapsed_s\n";
  log.log_every = log_every;
  log.total_steps = tcfg.steps;

  {
    std::ostringstream resolved;
    resolved << mf.resolved_text() << "data=" << data_path << "\n"
             << "out=" << out_dir << "\n"
             << "seed=" << model_seed << "\n"
             << "steps=" << tcfg.steps << "\n"
             << "batch=" << tcfg.batch_size << "\n"
             << "seq-len=" << tcfg.seq_len << "\n"
             << "lr=" << tcfg.lr << "\n"
             << "warmup=" << tcfg.warmup_steps << "\n"
             << "weight-decay=" << tcfg.weight_decay << "\n"
             << "grad-clip=" << tcfg.grad_clip << "\n"
             << "data-seed=" << tcfg.seed << "\n"
             << "checkpoint-every=" << tcfg.checkpoint_every << "\n";
    write_text_file(resolved_path, resolved.str());
  }

  mswa_model* model = nullptr;
  if (resume) {
    check(mswa_train_resume(ckpt_path.c_str(), corpus.data(), corpus.size(),
                            &tcfg, train_callback, &log, &model));
  } else {
    std::vector<int32_t> pattern_store;
    const mswa_model_config cfg = mf.to_config(pattern_store);
    check(mswa_model_create(&cfg, model_seed, &model));
    const mswa_status st = mswa_train(model, corpus.data(), corpus.size(), &tcfg,
                                      ckpt_path.c_str(), train_callback, &log);
    if (st != MSWA_OK) {
      mswa_model_free(model);
      die(st);
    }
  }
  log.csv.flush();
  std::fprintf(stdout, "checkpoint=%s metrics=%s\n", ckpt_path.c_str(),
               metrics_path.c_str());
  mswa_model_free(model);
  return 0;
}

// ---------------- eval ----------------

int run_eval(const std::string& model_path, const std::string& data_path,
             int32_t seq_len, int32_t threads) {
  const std::vector<uint8_t> corpus = read_file_bytes(data_path);
  mswa_model* model = nullptr;
  check(mswa_model_load(model_path.c_str(), &model));
  double ppl = 0.0, bpc = 0.0;
  const mswa_status st = mswa_evaluate(model, corpus.data(), corpus.size(),
                                       seq_len, threads, &ppl, &bpc);
  mswa_model_free(model);
  if (st != MSWA_OK) die(st);
  std::fprintf(stdout, "ppl=%.2f bpc=%.3f\n", ppl, bpc);
  return 0;
}

// ---------------- bench ----------------

int run_bench(const ModelFlags& mf, const std::string& model_path,
              uint64_t model_seed, int32_t tokens, int32_t prefill,
              int32_t bytes_per_scalar, const std::string& out_path) {
  mswa_model* model = nullptr;
  if (!model_path.empty()) {
    check(mswa_model_load(model_path.c_str(), &model));
  } else {
    std::vector<int32_t> pattern_store;
    const mswa_model_config cfg = mf.to_config(pattern_store);
    check(mswa_model_create(&cfg, model_seed, &model));
  }

  mswa_decoder* dec = nullptr;
  check(mswa_decoder_create(model, &dec));

  std::vector<double> logits(256);
  int32_t token = 10;  // start from a newline byte
  if (prefill > 0) {
    std::vector<int32_t> prompt(prefill);
    for (int32_t i = 0; i < prefill; ++i) prompt[i] = 'a' + (i % 26);
    check(mswa_decoder_prefill(dec, prompt.data(), prefill, logits.data()));
    token = 0;
    for (int c = 1; c < 256; ++c) {
      if (logits[c] > logits[token]) token = c;
    }
  }

  std::ostringstream csv;
  csv << "position,step_micros,cache_bytes\n";
  for (int32_t s = 0; s < tokens; ++s) {
    int64_t position = 0;
    check(mswa_decoder_position(dec, &position));
    const auto t0 = std::chrono::steady_clock::now();
    const mswa_status st = mswa_decoder_step(dec, token, logits.data());
    const auto t1 = std::chrono::steady_clock::now();
    if (st != MSWA_OK) {
      mswa_decoder_free(dec);
      mswa_model_free(model);
      die(st);
    }
    uint64_t cache = 0;
    check(mswa_decoder_cache_bytes(dec, bytes_per_scalar, &cache));
    const double micros =
        std::chrono::duration<double, std::micro>(t1 - t0).count();
    char line[96];
    std::snprintf(line, sizeof(line), "%" PRId64 ",%.3f,%" PRIu64 "\n", position,
                  micros, cache);
    csv << line;
    token = 0;
    for (int c = 1; c < 256; ++c) {
      if (logits[c] > logits[token]) token = c;
    }
  }

  if (out_path.empty()) {
    std::fputs(csv.str().c_str(), stdout);
  } else {
    write_text_file(out_path, csv.str());
    std::fprintf(stdout, "bench=%s\n", out_path.c_str());
  }
  mswa_decoder_free(dec);
  mswa_model_free(model);
  return 0;
}

// ---------------- cost ----------------

int run_cost(const ModelFlags& mf, int64_t seq_len, bool csv, bool compare,
             const std::string& windows_list, const std::string& strategies_list,
             const std::string& ref_strategy, int32_t ref_window,
             const std::string& out_path) {
  std::ostringstream result;
  if (compare) {
    // Budget sweep: every strategy at every window, relative to a reference
    // plan, using exact integer budgets.
    mswa_plan* ref = nullptr;
    check(mswa_plan_build(parse_strategy_or_die(ref_strategy), mf.layers,
                          mf.heads, ref_window, &ref));
    int64_t ref_total = 0;
    check(mswa_plan_budget(ref, &ref_total, nullptr, nullptr));
    mswa_plan_free(ref);

    result << "strategy,base_window,total_windows,budget_ratio,relative_cost\n";
    std::stringstream ws(windows_list);
    std::string wtok;
    while (std::getline(ws, wtok, ',')) {
      const int32_t w = std::atoi(wtok.c_str());
      std::stringstream ss(strategies_list);
      std::string stok;
      while (std::getline(ss, stok, ',')) {
        mswa_plan* plan = nullptr;
        check(mswa_plan_build(parse_strategy_or_die(stok), mf.layers, mf.heads,
                              w, &plan));
        int64_t total = 0, num = 0, den = 0;
        check(mswa_plan_budget(plan, &total, &num, &den));
        mswa_plan_free(plan);
        char line[160];
        std::snprintf(line, sizeof(line),
                      "%s,%d,%" PRId64 ",%" PRId64 "/%" PRId64 ",%.2f\n",
                      stok.c_str(), w, total, num, den,
                      static_cast<double>(total) / static_cast<double>(ref_total));
        result << line;
      }
    }
  } else {
    std::vector<int32_t> pattern_store;
    const mswa_model_config cfg = mf.to_config(pattern_store);
    mswa_cost_report* report = nullptr;
    check(mswa_cost_report_create(&cfg, seq_len, &report));
    char* text = nullptr;
    check(mswa_cost_format(report, csv ? 1 : 0, &text));
    result << text;
    mswa_string_free(text);
    mswa_cost_report_free(report);
  }

  if (out_path.empty()) {
    std::fputs(result.str().c_str(), stdout);
  } else {
    write_text_file(out_path, result.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-scale window attention decoders"};
  app.require_subcommand(1);

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Build and print a window plan");
  std::string plan_strategy = "mswa", plan_out;
  int32_t plan_layers = 4, plan_heads = 4, plan_window = 64;
  plan_cmd->add_option("--strategy", plan_strategy, "Window allocation strategy")
      ->capture_default_str();
  plan_cmd->add_option("--layers", plan_layers, "Layers")->capture_default_str();
  plan_cmd->add_option("--heads", plan_heads, "Heads")->capture_default_str();
  plan_cmd->add_option("--window", plan_window, "Base window")->capture_default_str();
  plan_cmd->add_option("--out", plan_out, "Write the plan here instead of stdout");
  std::string plan_config_path;
  plan_cmd->add_option("--config", plan_config_path,
                        "key=value configuration file (explicit flags win)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a byte-level model");
  ModelFlags train_mf;
  train_mf.add_to(train_cmd);
  std::string train_data, train_out = "run";
  uint64_t train_model_seed = 1234;
  bool train_resume = false;
  int32_t train_log_every = 10;
  mswa_train_config tcfg;
  mswa_train_config_default(&tcfg);
  train_cmd->add_option("--data", train_data, "Training corpus (raw bytes)")
      ->required();
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();
  train_cmd->add_option("--seed", train_model_seed, "Model init seed")
      ->capture_default_str();
  train_cmd->add_option("--steps", tcfg.steps, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch", tcfg.batch_size, "Sequences per step")
      ->capture_default_str();
  train_cmd->add_option("--seq-len", tcfg.seq_len, "Training sequence length")
      ->capture_default_str();
  train_cmd->add_option("--lr", tcfg.lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--warmup", tcfg.warmup_steps, "Warmup steps")
      ->capture_default_str();
  train_cmd->add_option("--weight-decay", tcfg.weight_decay, "AdamW weight decay")
      ->capture_default_str();
  train_cmd->add_option("--grad-clip", tcfg.grad_clip, "Global gradient norm cap")
      ->capture_default_str();
  train_cmd->add_option("--data-seed", tcfg.seed, "Batch sampling seed")
      ->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tcfg.checkpoint_every,
                        "Also save every N steps")
      ->capture_default_str();
  train_cmd->add_option("--log-every", train_log_every, "Progress print period")
      ->capture_default_str();
  train_cmd->add_flag("--resume", train_resume,
                      "Continue from <out>/model.ckpt to --steps");
  std::string train_config_path;
  train_cmd->add_option("--config", train_config_path,
                        "key=value configuration file (explicit flags win)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate perplexity on a corpus");
  std::string eval_model, eval_data;
  int32_t eval_seq_len = 512, eval_threads = 0;
  eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "Evaluation corpus")->required();
  eval_cmd->add_option("--seq-len", eval_seq_len, "Block length")->capture_default_str();
  eval_cmd->add_option("--threads", eval_threads,
                       "Evaluation shards (0 = MSWA_THREADS env)")
      ->capture_default_str();
  std::string eval_config_path;
  eval_cmd->add_option("--config", eval_config_path,
                        "key=value configuration file (explicit flags win)");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Time incremental decode steps");
  ModelFlags bench_mf;
  bench_mf.add_to(bench_cmd);
  std::string bench_model, bench_out;
  uint64_t bench_seed = 1234;
  int32_t bench_tokens = 512, bench_prefill = 0, bench_bytes = 8;
  bench_cmd->add_option("--model", bench_model,
                        "Checkpoint path (default: fresh random weights)");
  bench_cmd->add_option("--seed", bench_seed, "Seed for fresh weights")
      ->capture_default_str();
  bench_cmd->add_option("--tokens", bench_tokens, "Steps to time")->capture_default_str();
  bench_cmd->add_option("--prefill", bench_prefill, "Prompt length to prefill")
      ->capture_default_str();
  bench_cmd->add_option("--bytes-per-scalar", bench_bytes,
                        "Cache accounting width (8 = stored doubles)")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "CSV path (default stdout)");
  std::string bench_config_path;
  bench_cmd->add_option("--config", bench_config_path,
                        "key=value configuration file (explicit flags win)");

  // cost
  auto* cost_cmd = app.add_subcommand("cost", "Analytic cost report");
  ModelFlags cost_mf;
  cost_mf.add_to(cost_cmd);
  int64_t cost_seq_len = 2048;
  bool cost_csv = false, cost_compare = false;
  std::string cost_windows = "512,256,128,64";
  std::string cost_strategies = "uniform,mswa";
  std::string cost_ref_strategy = "mswa";
  int32_t cost_ref_window = 128;
  std::string cost_out;
  cost_cmd->add_option("--seq-len", cost_seq_len, "Sequence length n")
      ->capture_default_str();
  cost_cmd->add_flag("--csv", cost_csv, "Emit per-layer CSV instead of text");
  cost_cmd->add_flag("--compare", cost_compare,
                     "Budget sweep across strategies and windows");
  cost_cmd->add_option("--windows", cost_windows, "Sweep windows (comma list)")
      ->capture_default_str();
  cost_cmd->add_option("--strategies", cost_strategies, "Sweep strategies")
      ->capture_default_str();
  cost_cmd->add_option("--ref-strategy", cost_ref_strategy,
                       "Reference strategy for relative cost")
      ->capture_default_str();
  cost_cmd->add_option("--ref-window", cost_ref_window, "Reference base window")
      ->capture_default_str();
  cost_cmd->add_option("--out", cost_out, "Write here instead of stdout");
  std::string cost_config_path;
  cost_cmd->add_option("--config", cost_config_path,
                        "key=value configuration file (explicit flags win)");

  CLI11_PARSE(app, argc, argv);

  if (plan_cmd->parsed() && !plan_config_path.empty())
    apply_config_file(plan_cmd, plan_config_path);
  if (train_cmd->parsed() && !train_config_path.empty())
    apply_config_file(train_cmd, train_config_path);
  if (eval_cmd->parsed() && !eval_config_path.empty())
    apply_config_file(eval_cmd, eval_config_path);
  if (bench_cmd->parsed() && !bench_config_path.empty())
    apply_config_file(bench_cmd, bench_config_path);
  if (cost_cmd->parsed() && !cost_config_path.empty())
    apply_config_file(cost_cmd, cost_config_path);

  if (plan_cmd->parsed()) {
    return run_plan(plan_strategy, plan_layers, plan_heads, plan_window, plan_out);
  }
  if (train_cmd->parsed()) {
    return run_train(train_mf, tcfg, train_data, train_out, train_model_seed,
                     train_resume, train_log_every);
  }
  if (eval_cmd->parsed()) {
    return run_eval(eval_model, eval_data, eval_seq_len, eval_threads);
  }
  if (bench_cmd->parsed()) {
    return run_bench(bench_mf, bench_model, bench_seed, bench_tokens,
                     bench_prefill, bench_bytes, bench_out);
  }
  if (cost_cmd->parsed()) {
    return run_cost(cost_mf, cost_seq_len, cost_csv, cost_compare, cost_windows,
                    cost_strategies, cost_ref_strategy, cost_ref_window, cost_out);
  }
  return 0;
}
