#include "decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "error.hpp"

namespace mswa {

namespace {

double dot(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t t = 0; t < d; ++t) s += a[t] * b[t];
  return s;
}

void axpy(double* y, double alpha, const double* x, int64_t d) {
  for (int64_t t = 0; t < d; ++t) y[t] += alpha * x[t];
}

// Mirrors the tape rms_norm: inv = 1/sqrt(mean(x^2) + eps), out = x*inv*gain.
void rms_norm_rows(const double* x, const double* gain, int64_t rows,
                   int64_t width, double* out, double eps = 1e-6) {
  for (int64_t i = 0; i < rows; ++i) {
    const double* xi = x + i * width;
    double ms = 0.0;
    for (int64_t j = 0; j < width; ++j) ms += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ms / static_cast<double>(width) + eps);
    double* oi = out + i * width;
    for (int64_t j = 0; j < width; ++j) oi[j] = xi[j] * inv * gain[j];
  }
}

void check_token(int32_t token, int64_t vocab) {
  if (token < 0 || token >= vocab) {
    fail(ErrorCode::Vocab, "token " + std::to_string(token) +
                               " out of range [0, " + std::to_string(vocab) + ")");
  }
}

}  // namespace

void RingCache::insert(const double* kr, const double* vr) {
  std::memcpy(k.data() + next * width, kr, width * sizeof(double));
  std::memcpy(v.data() + next * width, vr, width * sizeof(double));
  next = (next + 1) % capacity;
  filled = std::min(filled + 1, capacity);
}

DecodeState::DecodeState(const Model& model) : model_(&model) {
  const ModelConfig& cfg = model.config();
  const int64_t d = cfg.head_dim;
  const int64_t h = cfg.heads;
  const int64_t f = model.feature_config().feature_len();
  const int64_t r = model.feature_config().proj_dim;

  layers_.resize(cfg.layers);
  int64_t max_cap = 1;
  for (int64_t i = 0; i < cfg.layers; ++i) {
    const LayerWeights& lw = model.layers()[i];
    LayerCache& lc = layers_[i];
    if (lw.kind == LayerKind::Linear) {
      lc.lin.resize(h);
      for (auto& st : lc.lin) st.init(f, d);
    } else {
      lc.rings.resize(h);
      for (int64_t j = 0; j < h; ++j) {
        const int64_t cap = lw.windows[j] < 0 ? cfg.max_seq_len : lw.windows[j];
        lc.rings[j].init(cap, d);
        max_cap = std::max(max_cap, cap);
      }
    }
  }

  const int64_t D = cfg.model_dim;
  const int64_t F = cfg.ffn_hidden();
  x_.resize(D);
  xn_.resize(D);
  q_.resize(h * d);
  k_.resize(h * d);
  v_.resize(h * d);
  att_.resize(h * d);
  gate_.resize(F);
  up_.resize(F);
  scores_.resize(max_cap + 1);
  feat_.resize(2 * r + 2 * f);
}

void DecodeState::reset() {
  tokens_seen_ = 0;
  for (auto& lc : layers_) {
    for (auto& ring : lc.rings) ring.reset();
    for (auto& st : lc.lin) st.reset();
  }
}

std::vector<double> DecodeState::step(int32_t token) {
  const ModelConfig& cfg = model_->config();
  if (tokens_seen_ >= cfg.max_seq_len) {
    fail(ErrorCode::State, "step: decoder is full at max_seq_len " +
                               std::to_string(cfg.max_seq_len));
  }
  check_token(token, cfg.vocab);

  const int64_t D = cfg.model_dim;
  const int64_t h = cfg.heads;
  const int64_t d = cfg.head_dim;
  const int64_t hd = h * d;
  const int64_t F = cfg.ffn_hidden();
  const FeatureMapConfig fm = model_->feature_config();
  const int64_t f = fm.feature_len();
  const int64_t r = fm.proj_dim;
  const int64_t pos = tokens_seen_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::memcpy(x_.data(), model_->embed().data() + token * D, D * sizeof(double));

  for (size_t li = 0; li < layers_.size(); ++li) {
    const LayerWeights& lw = model_->layers()[li];
    LayerCache& lc = layers_[li];

    rms_norm_rows(x_.data(), lw.attn_norm.data(), 1, D, xn_.data());
    std::fill(q_.begin(), q_.end(), 0.0);
    std::fill(k_.begin(), k_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    matmul_accumulate(xn_.data(), lw.attn.wq.data(), q_.data(), 1, D, hd);
    matmul_accumulate(xn_.data(), lw.attn.wk.data(), k_.data(), 1, D, hd);
    matmul_accumulate(xn_.data(), lw.attn.wv.data(), v_.data(), 1, D, hd);
    rotary_inplace(q_.data(), 1, hd, d, pos);
    rotary_inplace(k_.data(), 1, hd, d, pos);

    for (int64_t j = 0; j < h; ++j) {
      const double* qj = q_.data() + j * d;
      const double* kj = k_.data() + j * d;
      const double* vj = v_.data() + j * d;
      double* out = att_.data() + j * d;
      if (lw.kind == LayerKind::Linear) {
        LinearHeadState& st = lc.lin[j];
        double* qr = feat_.data();
        double* kr = qr + r;
        double* phiq = kr + r;
        double* phik = phiq + f;
        std::fill(qr, qr + 2 * r, 0.0);
        matmul_accumulate(qj, lw.wqr[j].data(), qr, 1, d, r);
        matmul_accumulate(kj, lw.wkr[j].data(), kr, 1, d, r);
        taylor2_feature_row(qr, r, fm.normalizer_dim, phiq);
        taylor2_feature_row(kr, r, fm.normalizer_dim, phik);
        for (int64_t a = 0; a < f; ++a) {
          const double w = phik[a];
          if (w != 0.0) axpy(st.S.data() + a * d, w, vj, d);
          st.z[a] += w;
        }
        std::fill(out, out + d, 0.0);
        double den = 0.0;
        for (int64_t a = 0; a < f; ++a) {
          const double w = phiq[a];
          if (w != 0.0) {
            axpy(out, w, st.S.data() + a * d, d);
            den += w * st.z[a];
          }
        }
        if (!(den > 0.0)) {
          fail(ErrorCode::Numeric,
               "linear attention: non-positive normalizer " + std::to_string(den));
        }
        const double inv = 1.0 / den;
        for (int64_t c = 0; c < d; ++c) out[c] *= inv;
      } else {
        RingCache& ring = lc.rings[j];
        const int64_t ctx = ring.filled + 1;
        double mx = -1e300;
        for (int64_t ord = 0; ord < ring.filled; ++ord) {
          const int64_t s = ring.slot(ord);
          const double sc = dot(qj, ring.k.data() + s * d, d) * inv_sqrt_d;
          scores_[ord] = sc;
          if (sc > mx) mx = sc;
        }
        const double sc_live = dot(qj, kj, d) * inv_sqrt_d;
        scores_[ring.filled] = sc_live;
        if (sc_live > mx) mx = sc_live;
        double den = 0.0;
        for (int64_t t = 0; t < ctx; ++t) {
          scores_[t] = std::exp(scores_[t] - mx);
          den += scores_[t];
        }
        const double inv_den = 1.0 / den;
        std::fill(out, out + d, 0.0);
        for (int64_t ord = 0; ord < ring.filled; ++ord) {
          const int64_t s = ring.slot(ord);
          axpy(out, scores_[ord] * inv_den, ring.v.data() + s * d, d);
        }
        axpy(out, scores_[ring.filled] * inv_den, vj, d);
        ring.insert(kj, vj);
      }
    }

    matmul_accumulate(att_.data(), lw.attn.wo.data(), x_.data(), 1, hd, D);

    rms_norm_rows(x_.data(), lw.ffn_norm.data(), 1, D, xn_.data());
    std::fill(gate_.begin(), gate_.end(), 0.0);
    std::fill(up_.begin(), up_.end(), 0.0);
    matmul_accumulate(xn_.data(), lw.w_gate.data(), gate_.data(), 1, D, F);
    matmul_accumulate(xn_.data(), lw.w_up.data(), up_.data(), 1, D, F);
    for (int64_t t = 0; t < F; ++t) {
      const double g = gate_[t];
      gate_[t] = g / (1.0 + std::exp(-g)) * up_[t];
    }
    matmul_accumulate(gate_.data(), lw.w_down.data(), x_.data(), 1, F, D);
  }

  rms_norm_rows(x_.data(), model_->final_norm().data(), 1, D, xn_.data());
  std::vector<double> logits(cfg.vocab, 0.0);
  matmul_accumulate(xn_.data(), model_->head().data(), logits.data(), 1, D,
                    cfg.vocab);
  ++tokens_seen_;
  return logits;
}

std::vector<double> DecodeState::prefill(const std::vector<int32_t>& tokens) {
  if (tokens_seen_ != 0) {
    fail(ErrorCode::State, "prefill: decoder already holds " +
                               std::to_string(tokens_seen_) +
                               " tokens (reset first)");
  }
  const std::vector<double> logits = forward_inference(*model_, tokens, this);
  const int64_t v = model_->config().vocab;
  const int64_t n = static_cast<int64_t>(tokens.size());
  return std::vector<double>(logits.begin() + (n - 1) * v, logits.end());
}

uint64_t DecodeState::cache_bytes(int64_t bytes_per_scalar) const {
  uint64_t scalars = 0;
  for (const auto& lc : layers_) {
    for (const auto& ring : lc.rings) {
      scalars += 2ull * ring.filled * ring.width;
    }
    for (const auto& st : lc.lin) {
      scalars += st.S.size() + st.z.size();
    }
  }
  return scalars * static_cast<uint64_t>(bytes_per_scalar);
}

uint64_t planned_cache_bytes(const Model& model, int64_t tokens_seen,
                             int64_t bytes_per_scalar) {
  const ModelConfig& cfg = model.config();
  const int64_t f = model.feature_config().feature_len();
  uint64_t scalars = 0;
  for (const LayerWeights& lw : model.layers()) {
    if (lw.kind == LayerKind::Linear) {
      scalars += static_cast<uint64_t>(cfg.heads) * f * (cfg.head_dim + 1);
    } else {
      for (int64_t w : lw.windows) {
        const int64_t cap = w < 0 ? cfg.max_seq_len : w;
        scalars += 2ull * std::min(tokens_seen, cap) * cfg.head_dim;
      }
    }
  }
  return scalars * static_cast<uint64_t>(bytes_per_scalar);
}

std::vector<double> forward_inference(const Model& model,
                                      const std::vector<int32_t>& tokens,
                                      DecodeState* state, KernelStats* stats) {
  const ModelConfig& cfg = model.config();
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n < 1) fail(ErrorCode::InvalidArgument, "forward: empty sequence");
  if (n > cfg.max_seq_len) {
    fail(ErrorCode::InvalidArgument, "forward: sequence length " + std::to_string(n) +
                                         " exceeds max_seq_len " +
                                         std::to_string(cfg.max_seq_len));
  }
  if (state) state->reset();

  const int64_t D = cfg.model_dim;
  const int64_t h = cfg.heads;
  const int64_t d = cfg.head_dim;
  const int64_t hd = h * d;
  const int64_t F = cfg.ffn_hidden();
  const FeatureMapConfig fm = model.feature_config();
  const int64_t f = fm.feature_len();
  const int64_t r = fm.proj_dim;

  std::vector<double> X(n * D);
  for (int64_t i = 0; i < n; ++i) {
    check_token(tokens[i], cfg.vocab);
    std::memcpy(X.data() + i * D, model.embed().data() + tokens[i] * D,
                D * sizeof(double));
  }

  std::vector<double> XN(n * D), Q(n * hd), K(n * hd), V(n * hd), ATT(n * hd);
  std::vector<double> GATE(n * F), UP(n * F);
  std::vector<double> qh(n * d), kh(n * d), QR(n * r), KR(n * r);
  std::vector<double> PHIQ(n * f), PHIK(n * f), OUTH(n * d);
  std::vector<double> S(f * d), Z(f);

  for (size_t li = 0; li < model.layers().size(); ++li) {
    const LayerWeights& lw = model.layers()[li];

    rms_norm_rows(X.data(), lw.attn_norm.data(), n, D, XN.data());
    std::fill(Q.begin(), Q.end(), 0.0);
    std::fill(K.begin(), K.end(), 0.0);
    std::fill(V.begin(), V.end(), 0.0);
    matmul_accumulate(XN.data(), lw.attn.wq.data(), Q.data(), n, D, hd);
    matmul_accumulate(XN.data(), lw.attn.wk.data(), K.data(), n, D, hd);
    matmul_accumulate(XN.data(), lw.attn.wv.data(), V.data(), n, D, hd);
    rotary_inplace(Q.data(), n, hd, d, 0);
    rotary_inplace(K.data(), n, hd, d, 0);

    if (lw.kind == LayerKind::Linear) {
      for (int64_t j = 0; j < h; ++j) {
        for (int64_t i = 0; i < n; ++i) {
          std::memcpy(qh.data() + i * d, Q.data() + i * hd + j * d, d * sizeof(double));
          std::memcpy(kh.data() + i * d, K.data() + i * hd + j * d, d * sizeof(double));
        }
        std::fill(QR.begin(), QR.end(), 0.0);
        std::fill(KR.begin(), KR.end(), 0.0);
        matmul_accumulate(qh.data(), lw.wqr[j].data(), QR.data(), n, d, r);
        matmul_accumulate(kh.data(), lw.wkr[j].data(), KR.data(), n, d, r);
        for (int64_t i = 0; i < n; ++i) {
          taylor2_feature_row(QR.data() + i * r, r, fm.normalizer_dim,
                              PHIQ.data() + i * f);
          taylor2_feature_row(KR.data() + i * r, r, fm.normalizer_dim,
                              PHIK.data() + i * f);
        }
        double* Sp = S.data();
        double* Zp = Z.data();
        if (state) {
          Sp = state->layers_[li].lin[j].S.data();
          Zp = state->layers_[li].lin[j].z.data();
        } else {
          std::fill(S.begin(), S.end(), 0.0);
          std::fill(Z.begin(), Z.end(), 0.0);
        }
        linear_scan(PHIQ.data(), PHIK.data(), f, V.data() + j * d, hd, n, d, Sp,
                    Zp, OUTH.data());
        for (int64_t i = 0; i < n; ++i) {
          std::memcpy(ATT.data() + i * hd + j * d, OUTH.data() + i * d,
                      d * sizeof(double));
        }
      }
    } else {
      int64_t h0 = 0;
      while (h0 < h) {
        int64_t h1 = h0 + 1;
        while (h1 < h && lw.windows[h1] == lw.windows[h0]) ++h1;
        attention_window_forward(Q.data() + h0 * d, hd, K.data() + h0 * d, hd,
                                 V.data() + h0 * d, hd, ATT.data() + h0 * d, hd,
                                 n, h1 - h0, d, lw.windows[h0], stats);
        h0 = h1;
      }
      if (state) {
        for (int64_t j = 0; j < h; ++j) {
          RingCache& ring = state->layers_[li].rings[j];
          for (int64_t t = std::max<int64_t>(0, n - ring.capacity); t < n; ++t) {
            ring.insert(K.data() + t * hd + j * d, V.data() + t * hd + j * d);
          }
        }
      }
    }

    matmul_accumulate(ATT.data(), lw.attn.wo.data(), X.data(), n, hd, D);

    rms_norm_rows(X.data(), lw.ffn_norm.data(), n, D, XN.data());
    std::fill(GATE.begin(), GATE.end(), 0.0);
    std::fill(UP.begin(), UP.end(), 0.0);
    matmul_accumulate(XN.data(), lw.w_gate.data(), GATE.data(), n, D, F);
    matmul_accumulate(XN.data(), lw.w_up.data(), UP.data(), n, D, F);
    for (int64_t t = 0; t < n * F; ++t) {
      const double g = GATE[t];
      GATE[t] = g / (1.0 + std::exp(-g)) * UP[t];
    }
    matmul_accumulate(GATE.data(), lw.w_down.data(), X.data(), n, F, D);
  }

  rms_norm_rows(X.data(), model.final_norm().data(), n, D, XN.data());
  std::vector<double> logits(n * cfg.vocab, 0.0);
  matmul_accumulate(XN.data(), model.head().data(), logits.data(), n, D,
                    cfg.vocab);
  if (state) state->tokens_seen_ = n;
  return logits;
}

}  // namespace mswa
