#include "attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "error.hpp"

namespace mswa {

namespace {

int64_t numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

detail::NodePtr make_out(std::vector<int64_t> shape,
                         std::initializer_list<Tensor> parents) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data.assign(numel(node->shape), 0.0);
  for (const Tensor& p : parents) {
    node->parents.push_back(p.node());
    node->requires_grad = node->requires_grad || p.requires_grad();
  }
  return node;
}

double dot(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t t = 0; t < d; ++t) s += a[t] * b[t];
  return s;
}

void axpy(double* y, double alpha, const double* x, int64_t d) {
  for (int64_t t = 0; t < d; ++t) y[t] += alpha * x[t];
}

void check_qkv(const char* op, const Tensor& q, const Tensor& k, const Tensor& v,
               int64_t head_dim) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    fail(ErrorCode::Shape, std::string(op) + ": q, k, v must be rank-2");
  }
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    fail(ErrorCode::Shape, std::string(op) + ": q, k, v shapes differ: " +
                               shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                               ", " + shape_str(v.shape()));
  }
  if (q.dim(0) < 1) {
    fail(ErrorCode::InvalidArgument, std::string(op) + ": empty sequence");
  }
  if (head_dim < 1 || q.dim(1) % head_dim != 0) {
    fail(ErrorCode::Shape, std::string(op) + ": width " + std::to_string(q.dim(1)) +
                               " is not a multiple of head_dim " +
                               std::to_string(head_dim));
  }
}

Tensor windowed_attention_node(const char* op, const Tensor& q, const Tensor& k,
                               const Tensor& v, int64_t head_dim, int64_t window,
                               KernelStats* stats) {
  check_qkv(op, q, k, v, head_dim);
  const int64_t n = q.dim(0);
  const int64_t width = q.dim(1);
  const int64_t heads = width / head_dim;

  auto node = make_out({n, width}, {q, k, v});
  attention_window_forward(q.data(), width, k.data(), width, v.data(), width,
                           node->data.data(), width, n, heads, head_dim, window,
                           stats);
  if (node->requires_grad) {
    detail::NodePtr qn = q.node(), kn = k.node(), vn = v.node();
    node->backprop = [qn, kn, vn, n, width, heads, head_dim,
                      window](detail::Node& self) {
      qn->ensure_grad();
      kn->ensure_grad();
      vn->ensure_grad();
      attention_window_backward(qn->data.data(), width, kn->data.data(), width,
                                vn->data.data(), width, self.grad.data(), width,
                                qn->grad.data(), kn->grad.data(), vn->grad.data(),
                                n, heads, head_dim, window);
    };
  }
  return Tensor(node);
}

}  // namespace

void attention_window_forward(const double* q, int64_t ldq, const double* k,
                              int64_t ldk, const double* v, int64_t ldv,
                              double* out, int64_t ldo, int64_t n, int64_t heads,
                              int64_t d, int64_t window, KernelStats* stats) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const int64_t maxctx = window < 0 ? n : std::min(n, window + 1);
  std::vector<double> sc(maxctx);
  long long pairs = 0;
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t col = h * d;
    for (int64_t i = 0; i < n; ++i) {
      const int64_t lo = window < 0 ? 0 : std::max<int64_t>(0, i - window);
      const int64_t ctx = i - lo + 1;
      const double* qi = q + i * ldq + col;
      double mx = -1e300;
      for (int64_t t = lo; t <= i; ++t) {
        const double s = dot(qi, k + t * ldk + col, d) * inv_sqrt_d;
        sc[t - lo] = s;
        if (s > mx) mx = s;
      }
      double den = 0.0;
      for (int64_t t = 0; t < ctx; ++t) {
        sc[t] = std::exp(sc[t] - mx);
        den += sc[t];
      }
      const double inv_den = 1.0 / den;
      double* oi = out + i * ldo + col;
      std::fill(oi, oi + d, 0.0);
      for (int64_t t = lo; t <= i; ++t) {
        axpy(oi, sc[t - lo] * inv_den, v + t * ldv + col, d);
      }
      pairs += ctx;
    }
  }
  if (stats) stats->attended_pairs += pairs;
}

void attention_window_backward(const double* q, int64_t ldq, const double* k,
                               int64_t ldk, const double* v, int64_t ldv,
                               const double* gout, int64_t ldo, double* gq,
                               double* gk, double* gv, int64_t n, int64_t heads,
                               int64_t d, int64_t window) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const int64_t maxctx = window < 0 ? n : std::min(n, window + 1);
  std::vector<double> alpha(maxctx), dalpha(maxctx);
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t col = h * d;
    for (int64_t i = 0; i < n; ++i) {
      const int64_t lo = window < 0 ? 0 : std::max<int64_t>(0, i - window);
      const int64_t ctx = i - lo + 1;
      const double* qi = q + i * ldq + col;
      const double* gi = gout + i * ldo + col;
      double mx = -1e300;
      for (int64_t t = lo; t <= i; ++t) {
        const double s = dot(qi, k + t * ldk + col, d) * inv_sqrt_d;
        alpha[t - lo] = s;
        if (s > mx) mx = s;
      }
      double den = 0.0;
      for (int64_t t = 0; t < ctx; ++t) {
        alpha[t] = std::exp(alpha[t] - mx);
        den += alpha[t];
      }
      const double inv_den = 1.0 / den;
      double dot_g = 0.0;
      for (int64_t t = lo; t <= i; ++t) {
        alpha[t - lo] *= inv_den;
        dalpha[t - lo] = dot(gi, v + t * ldv + col, d);
        dot_g += alpha[t - lo] * dalpha[t - lo];
      }
      double* gqi = gq + i * ldq + col;
      for (int64_t t = lo; t <= i; ++t) {
        const double a = alpha[t - lo];
        const double ds = a * (dalpha[t - lo] - dot_g) * inv_sqrt_d;
        axpy(gqi, ds, k + t * ldk + col, d);
        axpy(gk + t * ldk + col, ds, qi, d);
        axpy(gv + t * ldv + col, a, gi, d);
      }
    }
  }
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int64_t head_dim, KernelStats* stats) {
  return windowed_attention_node("causal_attention", q, k, v, head_dim, -1, stats);
}

Tensor swa_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     int64_t head_dim, int64_t window, KernelStats* stats) {
  if (window < 1) {
    fail(ErrorCode::InvalidArgument, "swa_attention: window must be >= 1 (got " +
                                         std::to_string(window) + ")");
  }
  return windowed_attention_node("swa_attention", q, k, v, head_dim, window, stats);
}

void taylor2_feature_row(const double* x, int64_t r, int64_t normalizer_dim,
                         double* phi) {
  const double s1 = std::pow(static_cast<double>(normalizer_dim), -0.25);
  const double s2 =
      1.0 / (std::sqrt(2.0) * std::sqrt(static_cast<double>(normalizer_dim)));
  phi[0] = 1.0;
  for (int64_t a = 0; a < r; ++a) phi[1 + a] = x[a] * s1;
  double* quad = phi + 1 + r;
  for (int64_t a = 0; a < r; ++a) {
    const double xa = x[a] * s2;
    for (int64_t b = 0; b < r; ++b) quad[a * r + b] = xa * x[b];
  }
}

Tensor taylor2_feature_map(const Tensor& x, const FeatureMapConfig& cfg) {
  if (x.rank() != 2) {
    fail(ErrorCode::Shape, "taylor2_feature_map: input must be rank-2, got " +
                               shape_str(x.shape()));
  }
  if (cfg.proj_dim < 1 || cfg.normalizer_dim < 1) {
    fail(ErrorCode::InvalidArgument,
         "taylor2_feature_map: proj_dim and normalizer_dim must be >= 1");
  }
  if (x.dim(1) != cfg.proj_dim) {
    fail(ErrorCode::Shape, "taylor2_feature_map: input width " +
                               std::to_string(x.dim(1)) + " != proj_dim " +
                               std::to_string(cfg.proj_dim));
  }
  const int64_t n = x.dim(0);
  const int64_t r = cfg.proj_dim;
  const int64_t f = cfg.feature_len();
  auto node = make_out({n, f}, {x});
  for (int64_t i = 0; i < n; ++i) {
    taylor2_feature_row(x.data() + i * r, r, cfg.normalizer_dim,
                        node->data.data() + i * f);
  }
  if (node->requires_grad) {
    detail::NodePtr xn = x.node();
    const double s1 = std::pow(static_cast<double>(cfg.normalizer_dim), -0.25);
    const double s2 =
        1.0 / (std::sqrt(2.0) * std::sqrt(static_cast<double>(cfg.normalizer_dim)));
    node->backprop = [xn, n, r, f, s1, s2](detail::Node& self) {
      xn->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double* xi = xn->data.data() + i * r;
        const double* g = self.grad.data() + i * f;
        const double* gq = g + 1 + r;
        double* dx = xn->grad.data() + i * r;
        for (int64_t a = 0; a < r; ++a) {
          double acc = g[1 + a] * s1;
          for (int64_t b = 0; b < r; ++b) {
            acc += s2 * xi[b] * (gq[a * r + b] + gq[b * r + a]);
          }
          dx[a] += acc;
        }
      }
    };
  }
  return Tensor(node);
}

void linear_scan(const double* phi_q, const double* phi_k, int64_t f,
                 const double* v, int64_t ldv, int64_t n, int64_t d, double* S,
                 double* z, double* out) {
  for (int64_t i = 0; i < n; ++i) {
    const double* pk = phi_k + i * f;
    const double* pq = phi_q + i * f;
    const double* vi = v + i * ldv;
    for (int64_t a = 0; a < f; ++a) {
      const double w = pk[a];
      if (w != 0.0) axpy(S + a * d, w, vi, d);
      z[a] += w;
    }
    double* oi = out + i * d;
    std::fill(oi, oi + d, 0.0);
    double den = 0.0;
    for (int64_t a = 0; a < f; ++a) {
      const double w = pq[a];
      if (w != 0.0) {
        axpy(oi, w, S + a * d, d);
        den += w * z[a];
      }
    }
    if (!(den > 0.0)) {
      fail(ErrorCode::Numeric,
           "linear attention: non-positive normalizer " + std::to_string(den));
    }
    const double inv = 1.0 / den;
    for (int64_t c = 0; c < d; ++c) oi[c] *= inv;
  }
}

Tensor linear_attention_core(const Tensor& phi_q, const Tensor& phi_k,
                             const Tensor& v) {
  if (phi_q.rank() != 2 || phi_k.rank() != 2 || v.rank() != 2) {
    fail(ErrorCode::Shape, "linear_attention_core: inputs must be rank-2");
  }
  if (phi_q.shape() != phi_k.shape()) {
    fail(ErrorCode::Shape, "linear_attention_core: feature shapes differ: " +
                               shape_str(phi_q.shape()) + " vs " +
                               shape_str(phi_k.shape()));
  }
  if (v.dim(0) != phi_q.dim(0)) {
    fail(ErrorCode::Shape, "linear_attention_core: value rows " +
                               std::to_string(v.dim(0)) + " != feature rows " +
                               std::to_string(phi_q.dim(0)));
  }
  const int64_t n = phi_q.dim(0);
  if (n < 1) {
    fail(ErrorCode::InvalidArgument, "linear_attention_core: empty sequence");
  }
  const int64_t f = phi_q.dim(1);
  const int64_t d = v.dim(1);

  auto node = make_out({n, d}, {phi_q, phi_k, v});
  {
    std::vector<double> S(f * d, 0.0), z(f, 0.0);
    linear_scan(phi_q.data(), phi_k.data(), f, v.data(), d, n, d, S.data(),
                z.data(), node->data.data());
  }
  if (node->requires_grad) {
    detail::NodePtr qn = phi_q.node(), kn = phi_k.node(), vn = v.node();
    node->backprop = [qn, kn, vn, n, f, d](detail::Node& self) {
      qn->ensure_grad();
      kn->ensure_grad();
      vn->ensure_grad();
      const double* pq = qn->data.data();
      const double* pk = kn->data.data();
      const double* vv = vn->data.data();
      const double* out = self.data.data();
      const double* gout = self.grad.data();

      // Ascending pass: rebuild prefix state, produce gradients of the
      // numerator/denominator per position and the phi_q gradient.
      std::vector<double> S(f * d, 0.0), z(f, 0.0);
      std::vector<double> dnum(n * d), dden(n);
      for (int64_t i = 0; i < n; ++i) {
        const double* pki = pk + i * f;
        const double* vi = vv + i * d;
        for (int64_t a = 0; a < f; ++a) {
          const double w = pki[a];
          if (w != 0.0) axpy(S.data() + a * d, w, vi, d);
          z[a] += w;
        }
        const double* pqi = pq + i * f;
        const double* gi = gout + i * d;
        const double* oi = out + i * d;
        const double den = dot(pqi, z.data(), f);
        const double inv = 1.0 / den;
        double* dni = dnum.data() + i * d;
        for (int64_t c = 0; c < d; ++c) dni[c] = gi[c] * inv;
        dden[i] = -dot(oi, gi, d) * inv;
        double* gq = qn->grad.data() + i * f;
        for (int64_t a = 0; a < f; ++a) {
          gq[a] += dot(S.data() + a * d, dni, d) + dden[i] * z[a];
        }
      }

      // Descending pass: suffix-accumulate phi_q-weighted gradients, which
      // give the phi_k and v gradients in one sweep.
      std::vector<double> A(f * d, 0.0), avec(f, 0.0);
      for (int64_t j = n - 1; j >= 0; --j) {
        const double* pqj = pq + j * f;
        const double* dnj = dnum.data() + j * d;
        for (int64_t a = 0; a < f; ++a) {
          const double w = pqj[a];
          if (w != 0.0) axpy(A.data() + a * d, w, dnj, d);
          avec[a] += dden[j] * w;
        }
        const double* vj = vv + j * d;
        const double* pkj = pk + j * f;
        double* gk = kn->grad.data() + j * f;
        double* gv = vn->grad.data() + j * d;
        for (int64_t a = 0; a < f; ++a) {
          gk[a] += dot(A.data() + a * d, vj, d) + avec[a];
          const double w = pkj[a];
          if (w != 0.0) axpy(gv, w, A.data() + a * d, d);
        }
      }
    };
  }
  return Tensor(node);
}

Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const FeatureMapConfig& cfg) {
  return linear_attention_core(taylor2_feature_map(q, cfg),
                               taylor2_feature_map(k, cfg), v);
}

Tensor mswa_layer(const Tensor& x, const AttentionParams& params,
                  const std::vector<int64_t>& windows, bool grouped,
                  int64_t start_pos, KernelStats* stats) {
  const int64_t h = params.heads;
  const int64_t d = params.head_dim;
  if (x.rank() != 2 || x.dim(1) != params.model_dim) {
    fail(ErrorCode::Shape, "mswa_layer: input shape " + shape_str(x.shape()) +
                               " does not match model_dim " +
                               std::to_string(params.model_dim));
  }
  if (static_cast<int64_t>(windows.size()) != h) {
    fail(ErrorCode::Plan, "mswa_layer: got " + std::to_string(windows.size()) +
                              " windows for " + std::to_string(h) + " heads");
  }
  Tensor q = rotary(matmul(x, params.wq), d, start_pos);
  Tensor k = rotary(matmul(x, params.wk), d, start_pos);
  Tensor v = matmul(x, params.wv);

  auto attend = [&](const Tensor& qg, const Tensor& kg, const Tensor& vg,
                    int64_t w) {
    return w < 0 ? causal_attention(qg, kg, vg, d, stats)
                 : swa_attention(qg, kg, vg, d, w, stats);
  };

  std::vector<Tensor> parts;
  int64_t h0 = 0;
  while (h0 < h) {
    int64_t h1 = h0 + 1;
    if (grouped) {
      while (h1 < h && windows[h1] == windows[h0]) ++h1;
    }
    if (h0 == 0 && h1 == h) {
      parts.push_back(attend(q, k, v, windows[h0]));
    } else {
      Tensor qg = slice(q, 1, h0 * d, (h1 - h0) * d);
      Tensor kg = slice(k, 1, h0 * d, (h1 - h0) * d);
      Tensor vg = slice(v, 1, h0 * d, (h1 - h0) * d);
      parts.push_back(attend(qg, kg, vg, windows[h0]));
    }
    h0 = h1;
  }
  Tensor merged = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return matmul(merged, params.wo);
}

}  // namespace mswa
