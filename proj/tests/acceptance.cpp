// Top-level acceptance checks. Each numbered criterion prints exactly one
// PASS/FAIL line; the process exit code is the number of failures. The
// checks pin the frozen numbers (budget identities, the window matrix, the
// relative-cost ladder) and the behavioral equivalences (kernel oracles,
// decode parity, memory accounting, training sanity) with hard tolerances.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "attention.hpp"
#include "cost.hpp"
#include "decode.hpp"
#include "model.hpp"
#include "testutil.hpp"
#include "train.hpp"
#include "window_plan.hpp"

using namespace mswa;

namespace {

struct Failure : std::runtime_error {
  explicit Failure(const std::string& m) : std::runtime_error(m) {}
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double now_s() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::vector<int32_t> prompt_bytes(int64_t n) {
  std::vector<int32_t> t(n);
  for (int64_t i = 0; i < n; ++i) t[i] = 'a' + static_cast<int32_t>(i % 19);
  return t;
}

// ---------------------------------------------------------------------- 1

void criterion_budget_identities() {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t layers = 4 * (1 + static_cast<int64_t>(rng.uniform_below(6)));
    const int64_t heads = 4 * (1 + static_cast<int64_t>(rng.uniform_below(6)));
    const int64_t w = 16 * (1 + static_cast<int64_t>(rng.uniform_below(128)));
    const auto check = [&](Strategy s, long long num, long long den) {
      const Budget b = total_budget(build_plan(s, layers, heads, w));
      require(b.ratio_to_uniform == Rational::of(num, den),
              std::string(strategy_name(s)) + " ratio " +
                  b.ratio_to_uniform.str() + " != " + std::to_string(num) +
                  "/" + std::to_string(den) + " at l=" +
                  std::to_string(layers) + " h=" + std::to_string(heads) +
                  " w=" + std::to_string(w));
      require(b.total_windows * den == layers * heads * w * num,
              "total_windows inconsistent with ratio");
    };
    check(Strategy::MswaH, 15, 16);
    check(Strategy::MswaL, 15, 16);
    check(Strategy::Mswa, 225, 256);
  }
}

// ---------------------------------------------------------------------- 2

void criterion_window_matrix() {
  for (int64_t layers : {int64_t{4}, int64_t{8}, int64_t{16}}) {
    for (int64_t heads : {int64_t{4}, int64_t{8}}) {
      for (int64_t w = 16; w <= 2048; w += 16) {
        const WindowPlan p = build_plan(Strategy::Mswa, layers, heads, w);
        for (int64_t i = 0; i < layers; ++i) {
          for (int64_t j = 0; j < heads; ++j) {
            const int64_t a = i / (layers / 4);
            const int64_t b = j / (heads / 4);
            const int64_t want =
                a + b >= 4 ? w << (a + b - 4) : w >> (4 - a - b);
            require(p.window(i, j) == want,
                    "w(" + std::to_string(i) + "," + std::to_string(j) +
                        ") = " + std::to_string(p.window(i, j)) + " != w*2^(" +
                        std::to_string(a) + "+" + std::to_string(b) +
                        "-4) for w=" + std::to_string(w));
          }
        }
      }
    }
  }
  // the canonical small instance, spelled out
  const WindowPlan p = build_plan(Strategy::Mswa, 4, 4, 16);
  const int64_t want[4][4] = {
      {1, 2, 4, 8}, {2, 4, 8, 16}, {4, 8, 16, 32}, {8, 16, 32, 64}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      require(p.window(i, j) == want[i][j], "canonical 4x4@16 matrix");
}

// ---------------------------------------------------------------------- 3

void criterion_relative_cost_ladder() {
  ModelConfig ref_cfg;
  ref_cfg.layers = 4;
  ref_cfg.heads = 4;
  ref_cfg.base_window = 128;
  ref_cfg.strategy = Strategy::Mswa;
  ref_cfg.max_seq_len = 8192;
  const CostReport ref = cost_report(ref_cfg, 4096);
  const struct {
    Strategy s;
    int64_t w;
    const char* want;
  } rows[] = {
      {Strategy::Uniform, 512, "4.55"}, {Strategy::Mswa, 512, "4.00"},
      {Strategy::Uniform, 256, "2.28"}, {Strategy::Mswa, 256, "2.00"},
      {Strategy::Uniform, 128, "1.14"}, {Strategy::Mswa, 128, "1.00"},
      {Strategy::Uniform, 64, "0.57"},  {Strategy::Mswa, 64, "0.50"},
  };
  for (const auto& row : rows) {
    ModelConfig cfg = ref_cfg;
    cfg.strategy = row.s;
    cfg.base_window = row.w;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f",
                  relative_cost(cost_report(cfg, 4096), ref));
    require(std::strcmp(buf, row.want) == 0,
            std::string(strategy_name(row.s)) + "-" + std::to_string(row.w) +
                " -> " + buf + " != " + row.want);
  }
}

// ---------------------------------------------------------------------- 4

AttentionParams make_params(Rng& rng, int64_t model_dim, int64_t heads,
                            int64_t d, bool grad) {
  AttentionParams p;
  p.model_dim = model_dim;
  p.heads = heads;
  p.head_dim = d;
  p.wq = testutil::random_tensor(rng, {model_dim, heads * d}, 0.3, grad);
  p.wk = testutil::random_tensor(rng, {model_dim, heads * d}, 0.3, grad);
  p.wv = testutil::random_tensor(rng, {model_dim, heads * d}, 0.3, grad);
  p.wo = testutil::random_tensor(rng, {heads * d, model_dim}, 0.3, grad);
  return p;
}

Tensor assemble_per_head(const Tensor& x, const AttentionParams& p,
                         const std::vector<int64_t>& windows) {
  const int64_t d = p.head_dim;
  Tensor q = rotary(matmul(x, p.wq), d, 0);
  Tensor k = rotary(matmul(x, p.wk), d, 0);
  Tensor v = matmul(x, p.wv);
  std::vector<Tensor> outs;
  for (int64_t j = 0; j < p.heads; ++j) {
    Tensor qh = slice(q, 1, j * d, d);
    Tensor kh = slice(k, 1, j * d, d);
    Tensor vh = slice(v, 1, j * d, d);
    outs.push_back(windows[j] < 0 ? causal_attention(qh, kh, vh, d)
                                  : swa_attention(qh, kh, vh, d, windows[j]));
  }
  return matmul(concat(outs, 1), p.wo);
}

void criterion_kernel_oracles() {
  Rng rng(77);
  double worst_dense = 0.0;
  for (int64_t n : {int64_t{1}, int64_t{2}, int64_t{3}, int64_t{17},
                    int64_t{40}, int64_t{64}}) {
    for (int64_t d : {int64_t{4}, int64_t{8}}) {
      Tensor q = testutil::random_tensor(rng, {n, d});
      Tensor k = testutil::random_tensor(rng, {n, d});
      Tensor v = testutil::random_tensor(rng, {n, d});
      for (int64_t w : {int64_t{1}, int64_t{2}, int64_t{3}, int64_t{7}, n - 1}) {
        if (w < 1) continue;
        Tensor got = swa_attention(q, k, v, d, w);
        std::vector<double> want(n * d);
        testutil::dense_window_attention(q.data(), k.data(), v.data(),
                                         want.data(), n, d, w);
        worst_dense = std::max(
            worst_dense, testutil::max_abs_diff(got.data(), want.data(), n * d));
      }
      Tensor full = causal_attention(q, k, v, d);
      std::vector<double> want(n * d);
      testutil::dense_window_attention(q.data(), k.data(), v.data(),
                                       want.data(), n, d, -1);
      worst_dense = std::max(
          worst_dense, testutil::max_abs_diff(full.data(), want.data(), n * d));
    }
  }
  require(worst_dense < 1e-10,
          "windowed kernel vs dense oracle: " + fmt(worst_dense));

  // fused layer vs per-head assembly, grouped vs ungrouped
  const int64_t n = 23, model_dim = 12, heads = 4, d = 4;
  AttentionParams p = make_params(rng, model_dim, heads, d, false);
  Tensor x = testutil::random_tensor(rng, {n, model_dim});
  const std::vector<int64_t> windows{2, 4, 4, -1};
  Tensor fused = mswa_layer(x, p, windows, true);
  Tensor manual = assemble_per_head(x, p, windows);
  const double d1 =
      testutil::max_abs_diff(fused.data(), manual.data(), n * model_dim);
  require(d1 < 1e-12, "fused layer vs per-head assembly: " + fmt(d1));
  Tensor ungrouped = mswa_layer(x, p, windows, false);
  const double d2 =
      testutil::max_abs_diff(fused.data(), ungrouped.data(), n * model_dim);
  require(d2 < 1e-12, "grouped vs ungrouped execution: " + fmt(d2));
}

// ---------------------------------------------------------------------- 5

void criterion_degeneration() {
  Rng rng(88);
  const int64_t n = 29, d = 8;
  Tensor q = testutil::random_tensor(rng, {n, d});
  Tensor k = testutil::random_tensor(rng, {n, d});
  Tensor v = testutil::random_tensor(rng, {n, d});
  Tensor causal = causal_attention(q, k, v, d);
  for (int64_t w : {n - 1, n, 3 * n}) {
    Tensor swa = swa_attention(q, k, v, d, w);
    const double diff =
        testutil::max_abs_diff(swa.data(), causal.data(), n * d);
    require(diff == 0.0, "swa(" + std::to_string(w) + ") vs causal: " + fmt(diff));
  }

  // whole model: huge-window local layers vs the full-attention pattern
  ModelConfig local;
  local.layers = 4;
  local.heads = 4;
  local.model_dim = 32;
  local.head_dim = 8;
  local.strategy = Strategy::Uniform;
  local.base_window = 4096;  // far beyond the sequence
  local.max_seq_len = 4096;
  ModelConfig full = local;
  full.pattern.assign(4, LayerKind::Full);
  Model ml(local, 99), mf(full, 99);
  const auto toks = prompt_bytes(48);
  Tensor a = ml.forward(toks);
  Tensor b = mf.forward(toks);
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, testutil::rel_err(a.data()[i], b.data()[i]));
  require(worst < 1e-6, "local(huge w) vs full pattern rel diff " + fmt(worst));
}

// ---------------------------------------------------------------------- 6

void criterion_linear_attention() {
  Rng rng(66);
  // feature-map identity
  const int64_t d = 8;
  FeatureMapConfig idc{d, d};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor q = testutil::random_tensor(rng, {1, d});
    Tensor k = testutil::random_tensor(rng, {1, d});
    Tensor pq = taylor2_feature_map(q, idc);
    Tensor pk = taylor2_feature_map(k, idc);
    double dot = 0.0, s = 0.0;
    for (int64_t t = 0; t < idc.feature_len(); ++t)
      dot += pq.data()[t] * pk.data()[t];
    for (int64_t a = 0; a < d; ++a) s += q.data()[a] * k.data()[a];
    s /= std::sqrt(static_cast<double>(d));
    worst = std::max(worst, std::abs(dot - (1.0 + s + 0.5 * s * s)));
  }
  require(worst < 1e-12, "phi(q).phi(k) identity: " + fmt(worst));

  // recurrent vs parallel quadratic form
  const int64_t n = 24, r = 4, dv = 6;
  Tensor q = testutil::random_tensor(rng, {n, r});
  Tensor k = testutil::random_tensor(rng, {n, r});
  Tensor v = testutil::random_tensor(rng, {n, dv});
  FeatureMapConfig cfg{r, 8};
  Tensor out = linear_attention(q, k, v, cfg);
  auto want = testutil::parallel_linear_attention(
      std::vector<double>(q.data(), q.data() + n * r),
      std::vector<double>(k.data(), k.data() + n * r),
      std::vector<double>(v.data(), v.data() + n * dv), n, r, dv,
      cfg.normalizer_dim);
  const double diff = testutil::max_abs_diff(out.data(), want.data(), n * dv);
  require(diff < 1e-10, "recurrent vs parallel form: " + fmt(diff));

  // accumulator save/resume invariance
  const int64_t f = cfg.feature_len();
  std::vector<double> phi_q(n * f), phi_k(n * f);
  for (int64_t i = 0; i < n; ++i) {
    taylor2_feature_row(q.data() + i * r, r, cfg.normalizer_dim, &phi_q[i * f]);
    taylor2_feature_row(k.data() + i * r, r, cfg.normalizer_dim, &phi_k[i * f]);
  }
  std::vector<double> S(f * dv, 0.0), z(f, 0.0), one(n * dv, 0.0);
  linear_scan(phi_q.data(), phi_k.data(), f, v.data(), dv, n, dv, S.data(),
              z.data(), one.data());
  std::vector<double> S2(f * dv, 0.0), z2(f, 0.0), two(n * dv, 0.0);
  int64_t at = 0;
  for (int64_t chunk : {int64_t{7}, int64_t{1}, int64_t{11}, int64_t{5}}) {
    linear_scan(phi_q.data() + at * f, phi_k.data() + at * f, f,
                v.data() + at * dv, dv, chunk, dv, S2.data(), z2.data(),
                two.data() + at * dv);
    at += chunk;
  }
  require(at == n, "chunk bookkeeping");
  require(testutil::max_abs_diff(one, two) == 0.0 &&
              testutil::max_abs_diff(S, S2) == 0.0 &&
              testutil::max_abs_diff(z, z2) == 0.0,
          "save/resume changed the scan");
}

// ---------------------------------------------------------------------- 7

void criterion_gradients() {
  Rng rng(55);
  double worst = 0.0;
  auto track = [&](double e, const char* what) {
    if (e > worst) worst = e;
    require(e < 1e-4, std::string(what) + " grad rel err " + fmt(e));
  };

  {
    const int64_t n = 5, d = 3;
    Tensor q = testutil::random_tensor(rng, {n, d}, 0.8, true);
    Tensor k = testutil::random_tensor(rng, {n, d}, 0.8, true);
    Tensor v = testutil::random_tensor(rng, {n, d}, 0.8, true);
    Tensor w = testutil::random_tensor(rng, {n, d});
    track(testutil::max_grad_rel_err(
              [&] { return sum_all(mul(w, causal_attention(q, k, v, d))); },
              {q, k, v}),
          "causal kernel");
    track(testutil::max_grad_rel_err(
              [&] { return sum_all(mul(w, swa_attention(q, k, v, d, 2))); },
              {q, k, v}),
          "windowed kernel");
  }
  {
    const int64_t n = 4, r = 2, dv = 3;
    FeatureMapConfig cfg{r, r};
    Tensor q = testutil::random_tensor(rng, {n, r}, 0.7, true);
    Tensor k = testutil::random_tensor(rng, {n, r}, 0.7, true);
    Tensor v = testutil::random_tensor(rng, {n, dv}, 0.7, true);
    Tensor w = testutil::random_tensor(rng, {n, dv});
    track(testutil::max_grad_rel_err(
              [&] { return sum_all(mul(w, linear_attention(q, k, v, cfg))); },
              {q, k, v}),
          "linear kernel");
  }
  {
    // four distinct head groups all receive gradient
    const int64_t n = 5, model_dim = 8, heads = 4, d = 2;
    AttentionParams p = make_params(rng, model_dim, heads, d, true);
    Tensor x = testutil::random_tensor(rng, {n, model_dim}, 0.8, true);
    Tensor w = testutil::random_tensor(rng, {n, model_dim});
    const std::vector<int64_t> windows{1, 2, 4, -1};
    auto loss = [&] { return sum_all(mul(w, mswa_layer(x, p, windows))); };
    track(testutil::max_grad_rel_err(loss, {x, p.wq, p.wk, p.wv, p.wo}),
          "fused layer");
    for (Tensor t : {p.wq, p.wk, p.wv, p.wo, x}) t.zero_grad();
    loss().backward();
    for (int64_t j = 0; j < heads; ++j) {
      double block = 0.0;
      for (int64_t rr = 0; rr < model_dim; ++rr)
        for (int64_t c = 0; c < d; ++c)
          block += std::abs(p.wv.grad()[rr * heads * d + j * d + c]);
      require(block > 0.0,
              "head group " + std::to_string(j) + " received no gradient");
    }
  }
  {
    // whole tiny model, sampled coordinates of every parameter kind
    ModelConfig cfg;
    cfg.layers = 3;
    cfg.heads = 2;
    cfg.model_dim = 8;
    cfg.head_dim = 4;
    cfg.base_window = 2;
    cfg.strategy = Strategy::Uniform;
    cfg.pattern = {LayerKind::Linear, LayerKind::Local, LayerKind::Full};
    cfg.feature_dim = 2;
    cfg.max_seq_len = 32;
    Model m(cfg, 5);
    const std::vector<int32_t> in = {'a', 'b', 'c', 'a', 'b'};
    const std::vector<int32_t> tg = {'b', 'c', 'a', 'b', 'c'};
    auto loss = [&] { return m.loss(in, tg); };
    Rng pick(3);
    for (const auto& param : m.parameters()) {
      Tensor t = param.tensor;
      std::vector<int64_t> idx;
      for (int i = 0; i < 4; ++i)
        idx.push_back(static_cast<int64_t>(pick.uniform_below(t.size())));
      track(testutil::max_grad_rel_err_sampled(loss, t, idx),
            param.name.c_str());
    }
  }
}

// ---------------------------------------------------------------------- 8

void criterion_decode_equivalence() {
  std::vector<ModelConfig> configs;
  for (Strategy s :
       {Strategy::Uniform, Strategy::MswaH, Strategy::MswaL, Strategy::Mswa,
        Strategy::MswaReversedLayers, Strategy::MswaArithmetic}) {
    ModelConfig cfg;
    cfg.layers = 4;
    cfg.heads = 4;
    cfg.model_dim = 32;
    cfg.head_dim = 8;
    cfg.base_window = 16;
    cfg.strategy = s;
    cfg.max_seq_len = 64;
    configs.push_back(cfg);
  }
  {
    ModelConfig cfg = configs.back();
    cfg.strategy = Strategy::Mswa;
    cfg.layers = 6;
    cfg.pattern = ModelConfig::hybrid_pattern(6);
    cfg.feature_dim = 4;
    configs.push_back(cfg);
  }

  int seed = 1000;
  for (const ModelConfig& cfg : configs) {
    Model m(cfg, seed++);
    std::vector<int32_t> tokens = prompt_bytes(8);

    DecodeState dec(m);
    std::vector<std::vector<double>> streamed;
    std::vector<double> logits;
    for (int32_t t : tokens) {
      logits = dec.step(t);
      streamed.push_back(logits);
    }
    for (int g = 0; g < 32; ++g) {
      int32_t next = 0;
      for (int c = 1; c < 256; ++c)
        if (logits[c] > logits[next]) next = c;
      tokens.push_back(next);
      logits = dec.step(next);
      streamed.push_back(logits);
    }

    const std::vector<double> all = forward_inference(m, tokens);
    const int64_t n = static_cast<int64_t>(tokens.size());
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < 256; ++c)
        worst = std::max(
            worst, testutil::rel_err(streamed[i][c], all[i * 256 + c]));
    require(worst < 1e-4, std::string("strategy ") +
                              strategy_name(cfg.strategy) +
                              (cfg.pattern.empty() ? "" : " (hybrid)") +
                              ": logits rel diff " + fmt(worst));
    // the parallel forward picks the same greedy bytes
    for (int64_t i = 7; i + 1 < n; ++i) {
      int32_t pick = 0;
      for (int c = 1; c < 256; ++c)
        if (all[i * 256 + c] > all[i * 256 + pick]) pick = c;
      require(pick == tokens[i + 1],
              "greedy argmax diverges at position " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------- 9

void criterion_memory() {
  ModelConfig cfg;
  cfg.layers = 4;
  cfg.heads = 4;
  cfg.model_dim = 16;
  cfg.head_dim = 4;
  cfg.base_window = 16;  // windows 1..64
  cfg.strategy = Strategy::Mswa;
  cfg.max_seq_len = 256;
  Model m(cfg, 2);
  DecodeState dec(m);
  std::vector<uint64_t> sizes;
  for (int32_t t : prompt_bytes(100)) {
    dec.step(t);
    sizes.push_back(dec.cache_bytes());
  }
  for (size_t i = 64; i < sizes.size(); ++i)
    require(sizes[i] == sizes[63],
            "local cache grew after saturation at position " + std::to_string(i));
  require(sizes[63] == planned_cache_bytes(m, 64),
          "saturated cache disagrees with the closed form");

  ModelConfig lin = cfg;
  lin.pattern.assign(4, LayerKind::Linear);
  Model ml(lin, 3);
  DecodeState dl(ml);
  const uint64_t constant = dl.cache_bytes();
  require(constant > 0, "linear state should occupy memory");
  for (int32_t t : prompt_bytes(30)) {
    dl.step(t);
    require(dl.cache_bytes() == constant,
            "linear-layer cache changed after a step");
  }

  ModelConfig uni = cfg;
  uni.strategy = Strategy::Uniform;
  Model mu(uni, 4);
  const uint64_t cm = planned_cache_bytes(m, 200);
  const uint64_t cu = planned_cache_bytes(mu, 200);
  require(cm * 256 == cu * 225, "saturated cache ratio != 225/256 (" +
                                     std::to_string(cm) + " vs " +
                                     std::to_string(cu) + ")");
}

// --------------------------------------------------------------------- 10

struct TrainingOutcome {
  double initial_bpc = 0.0;
  double final_bpc = 0.0;
  std::vector<double> losses;
};

TrainingOutcome train_reference(const std::vector<uint8_t>& corpus) {
  ModelConfig cfg;  // the pinned tiny architecture
  cfg.layers = 4;
  cfg.heads = 4;
  cfg.model_dim = 128;
  cfg.head_dim = 32;
  cfg.base_window = 64;
  cfg.strategy = Strategy::Mswa;
  Model m(cfg, 1234);
  TrainConfig t;  // defaults: 200 steps, batch 4, seq 128, cosine 3e-3
  Trainer tr(m, t);
  TrainingOutcome out;
  tr.run(corpus, 0, corpus.size(), [&](const StepMetrics& s) {
    out.losses.push_back(s.loss_bpc);
  });
  out.initial_bpc = out.losses.front();
  double tail = 0.0;
  for (size_t i = out.losses.size() - 10; i < out.losses.size(); ++i)
    tail += out.losses[i];
  out.final_bpc = tail / 10.0;
  return out;
}

void criterion_training(const std::vector<uint8_t>& corpus,
                        const TrainingOutcome& first) {
  require(corpus.size() >= 1000000, "corpus below 1 MB");
  require(std::abs(first.initial_bpc - 8.0) <= 0.2,
          "initial bpc " + fmt(first.initial_bpc) + " outside 8.0 +- 0.2");
  require(first.final_bpc <= first.initial_bpc - 1.0,
          "final bpc " + fmt(first.final_bpc) + " did not improve by 1.0 on " +
              fmt(first.initial_bpc));
  const TrainingOutcome second = train_reference(corpus);
  require(first.losses.size() == second.losses.size(), "loss stream lengths");
  for (size_t i = 0; i < first.losses.size(); ++i)
    require(first.losses[i] == second.losses[i],
            "loss streams diverge at step " + std::to_string(i));
}

// --------------------------------------------------------------------- 11

void criterion_comparison_harness(const std::vector<uint8_t>& corpus) {
  ModelConfig base;
  base.layers = 4;
  base.heads = 4;
  base.model_dim = 64;
  base.head_dim = 16;
  base.base_window = 128;
  base.strategy = Strategy::Uniform;
  base.max_seq_len = 512;
  ModelConfig chall = base;
  chall.strategy = Strategy::Mswa;

  TrainConfig t;
  t.steps = 30;
  t.batch_size = 2;
  t.seq_len = 64;
  t.warmup_steps = 5;
  t.lr = 2e-3;

  const std::vector<ComparisonEntry> entries{{"swa", base}, {"mswa", chall}};
  const std::string csv =
      run_budget_comparison(entries, t, 7, corpus, 0.9, 64);
  require(csv.find("label,strategy,base_window,total_windows,budget_ratio,"
                   "train_bpc,eval_ppl,eval_bpc") != std::string::npos,
          "missing header");
  require(csv.find("swa,uniform,128,2048,1,") != std::string::npos,
          "missing baseline row: " + csv);
  require(csv.find("mswa,mswa,128,1800,225/256,") != std::string::npos,
          "missing challenger row: " + csv);

  // both rows parse and carry finite numbers
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    require(fields.size() == 8, "row has " + std::to_string(fields.size()) +
                                    " fields: " + line);
    for (int fi = 5; fi < 8; ++fi) {
      const double val = std::stod(fields[fi]);
      require(std::isfinite(val) && val > 0.0, "bad metric in: " + line);
    }
  }
  require(rows == 2, "expected exactly two data rows");

  const std::string again = run_budget_comparison(entries, t, 7, corpus, 0.9, 64);
  require(csv == again, "comparison CSV is not deterministic");

  // over-budget challengers are rejected up front
  ModelConfig rich = base;
  rich.base_window = 256;
  bool rejected = false;
  try {
    run_budget_comparison({{"swa", base}, {"rich", rich}}, t, 7, corpus, 0.9, 64);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::Config;
  }
  require(rejected, "over-budget challenger was not rejected");
}

}  // namespace

int main() {
  std::vector<uint8_t> corpus = testutil::synthetic_corpus(1200000, 42);
  TrainingOutcome reference;

  int failures = 0;
  const auto run = [&](int id, const char* title,
                       const std::function<void()>& body) {
    const double t0 = now_s();
    std::string detail;
    try {
      body();
    } catch (const std::exception& e) {
      detail = e.what();
    }
    const double dt = now_s() - t0;
    if (detail.empty()) {
      std::printf("PASS criterion %2d: %s (%.1fs)\n", id, title, dt);
    } else {
      std::printf("FAIL criterion %2d: %s -- %s\n", id, title, detail.c_str());
      ++failures;
    }
    std::fflush(stdout);
  };

  run(1, "budget identities are exact for random valid shapes",
      criterion_budget_identities);
  run(2, "window matrix follows w*2^(a+b-4) for every valid base window",
      criterion_window_matrix);
  run(3, "relative-cost ladder reproduces all eight rows to 2 decimals",
      criterion_relative_cost_ladder);
  run(4, "kernels match dense masked attention and per-head assembly",
      criterion_kernel_oracles);
  run(5, "window >= n-1 degenerates to full causal attention",
      criterion_degeneration);
  run(6, "linear attention: identity, parallel/recurrent, save/resume",
      criterion_linear_attention);
  run(7, "gradients match central finite differences",
      criterion_gradients);
  run(8, "incremental decode equals the parallel forward (greedy, 32 tokens)",
      criterion_decode_equivalence);
  run(9, "cache memory saturates, linear state constant, ratio 225/256",
      criterion_memory);
  run(10, "training sanity on a 1.2 MB byte corpus (two identical runs)",
      [&] {
        reference = train_reference(corpus);
        criterion_training(corpus, reference);
      });
  run(11, "budget-matched comparison harness emits a verified CSV",
      [&] { criterion_comparison_harness(corpus); });

  if (failures == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria failed\n", failures);
  }
  return failures;
}
