#pragma once

// Shared test helpers. The oracles here are deliberately written as plain
// loops over dense buffers, independent of the library's streaming kernels,
// so the two implementations can only agree by computing the same function.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace testutil {

// ---------------------------------------------------------------------------
// error helpers

template <class Fn>
inline std::string error_message(Fn&& fn) {
  try {
    fn();
  } catch (const mswa::Error& e) {
    return e.what();
  }
  return "";
}

template <class Fn>
inline int error_code(Fn&& fn) {
  try {
    fn();
  } catch (const mswa::Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;  // did not throw
}

inline bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// ---------------------------------------------------------------------------
// finite-difference gradient checking

inline double rel_err(double got, double want) {
  return std::abs(got - want) /
         std::max({std::abs(got), std::abs(want), 1e-3});
}

// Largest relative error between the tape gradients of make_loss() (a fresh
// scalar graph per call over the same leaf tensors) and central finite
// differences, over every coordinate of every leaf.
template <class Fn>
inline double max_grad_rel_err(Fn&& make_loss, std::vector<mswa::Tensor> leaves,
                               double step = 1e-5) {
  for (auto& t : leaves) t.zero_grad();
  make_loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves) {
    analytic.push_back(t.has_grad() ? t.grad_vec()
                                    : std::vector<double>(t.size(), 0.0));
  }
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    double* x = leaves[li].data();
    for (int64_t i = 0; i < leaves[li].size(); ++i) {
      const double keep = x[i];
      x[i] = keep + step;
      const double up = make_loss().item();
      x[i] = keep - step;
      const double down = make_loss().item();
      x[i] = keep;
      worst = std::max(worst, rel_err((up - down) / (2.0 * step),
                                      analytic[li][i]));
    }
  }
  return worst;
}

// Same check restricted to chosen coordinates of one leaf (for big tensors).
template <class Fn>
inline double max_grad_rel_err_sampled(Fn&& make_loss, mswa::Tensor leaf,
                                       const std::vector<int64_t>& indices,
                                       double step = 1e-5) {
  leaf.zero_grad();
  make_loss().backward();
  std::vector<double> analytic =
      leaf.has_grad() ? leaf.grad_vec() : std::vector<double>(leaf.size(), 0.0);
  double worst = 0.0;
  double* x = leaf.data();
  for (int64_t i : indices) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = make_loss().item();
    x[i] = keep - step;
    const double down = make_loss().item();
    x[i] = keep;
    worst =
        std::max(worst, rel_err((up - down) / (2.0 * step), analytic[i]));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// dense attention oracle (single head)

// Materializes the full n x n score matrix, applies an explicit -inf band
// mask, row-softmaxes it and multiplies by v. q/k/v/out are [n, d] row-major
// with leading dimension ld (defaults to d). window < 0 means full causal.
inline void dense_window_attention(const double* q, const double* k,
                                   const double* v, double* out, int64_t n,
                                   int64_t d, int64_t window, int64_t ld = -1) {
  if (ld < 0) ld = d;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> scores(n * n, ninf);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j <= i; ++j) {
      if (window >= 0 && i - j > window) continue;
      double s = 0.0;
      for (int64_t a = 0; a < d; ++a) s += q[i * ld + a] * k[j * ld + a];
      scores[i * n + j] = s * inv_sqrt_d;
    }
  }
  for (int64_t i = 0; i < n; ++i) {
    double m = ninf;
    for (int64_t j = 0; j < n; ++j) m = std::max(m, scores[i * n + j]);
    double z = 0.0;
    std::vector<double> p(n, 0.0);
    for (int64_t j = 0; j < n; ++j) {
      if (scores[i * n + j] == ninf) continue;  // exp would be 0
      p[j] = std::exp(scores[i * n + j] - m);
      z += p[j];
    }
    for (int64_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += (p[j] / z) * v[j * ld + a];
      out[i * ld + a] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// quadratic-form linear attention oracle

// Taylor feature map written out longhand: [1, x/d^(1/4), outer(x,x)
// flattened / (sqrt(2) sqrt(d))] where d is the normalizer dimension.
inline std::vector<double> taylor2_features_ref(const double* x, int64_t r,
                                                int64_t normalizer_dim) {
  std::vector<double> phi(1 + r + r * r);
  const double s1 = std::pow(static_cast<double>(normalizer_dim), -0.25);
  const double s2 =
      1.0 / (std::sqrt(2.0) * std::sqrt(static_cast<double>(normalizer_dim)));
  phi[0] = 1.0;
  for (int64_t a = 0; a < r; ++a) phi[1 + a] = x[a] * s1;
  for (int64_t a = 0; a < r; ++a)
    for (int64_t b = 0; b < r; ++b) phi[1 + r + a * r + b] = x[a] * x[b] * s2;
  return phi;
}

// The "parallel form": materialize every pairwise kernel weight
// phi(q_i).phi(k_j) and normalize rows, i.e. attention with the feature
// kernel instead of exp. q/k are [n, r], v is [n, d]; returns [n, d].
inline std::vector<double> parallel_linear_attention(
    const std::vector<double>& q, const std::vector<double>& k,
    const std::vector<double>& v, int64_t n, int64_t r, int64_t d,
    int64_t normalizer_dim) {
  std::vector<double> out(n * d, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    auto phi_q = taylor2_features_ref(&q[i * r], r, normalizer_dim);
    double den = 0.0;
    std::vector<double> num(d, 0.0);
    for (int64_t j = 0; j <= i; ++j) {
      auto phi_k = taylor2_features_ref(&k[j * r], r, normalizer_dim);
      double w = 0.0;
      for (std::size_t t = 0; t < phi_q.size(); ++t) w += phi_q[t] * phi_k[t];
      den += w;
      for (int64_t a = 0; a < d; ++a) num[a] += w * v[j * d + a];
    }
    for (int64_t a = 0; a < d; ++a) out[i * d + a] = num[a] / den;
  }
  return out;
}

// ---------------------------------------------------------------------------
// random tensors

inline std::vector<double> random_vec(mswa::Rng& rng, int64_t n,
                                      double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

inline mswa::Tensor random_tensor(mswa::Rng& rng, std::vector<int64_t> shape,
                                  double scale = 1.0,
                                  bool requires_grad = false) {
  int64_t n = 1;
  for (auto s : shape) n *= s;
  return mswa::Tensor::from(std::move(shape), random_vec(rng, n, scale),
                            requires_grad);
}

inline double max_abs_diff(const double* a, const double* b, int64_t n) {
  double m = 0.0;
  for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  return max_abs_diff(a.data(), b.data(), static_cast<int64_t>(a.size()));
}

inline double max_rel_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// synthetic corpus

// Deterministic word-like byte stream: a skewed draw over a small lexicon
// with spaces, sentence stops and newlines. Low entropy per byte, so a tiny
// model's loss falls quickly, while still exercising a spread of byte values.
inline std::vector<uint8_t> synthetic_corpus(std::size_t bytes,
                                             uint64_t seed = 77) {
  static const char* kWords[] = {
      "the",    "of",     "and",   "to",     "a",       "in",    "that",
      "window", "head",   "layer", "scale",  "byte",    "cache", "ring",
      "token",  "linear", "plan",  "cost",   "train",   "state", "norm",
      "gate",   "query",  "key",   "value",  "stream",  "local", "budget",
      "decode", "model",  "score", "buffer", "predict", "shift", "mix",
  };
  constexpr std::size_t kLex = sizeof(kWords) / sizeof(kWords[0]);
  mswa::Rng rng(seed);
  std::vector<uint8_t> out;
  out.reserve(bytes + 16);
  int words_on_line = 0;
  while (out.size() < bytes) {
    // min of two uniforms skews toward early (frequent) words
    const std::size_t i = std::min(rng.uniform_below(kLex), rng.uniform_below(kLex));
    for (const char* c = kWords[i]; *c; ++c) out.push_back(static_cast<uint8_t>(*c));
    ++words_on_line;
    const double u = rng.uniform();
    if (words_on_line >= 12 || u < 0.05) {
      out.push_back('.');
      out.push_back('\n');
      words_on_line = 0;
    } else if (u < 0.15) {
      out.push_back(',');
      out.push_back(' ');
    } else {
      out.push_back(' ');
    }
  }
  out.resize(bytes);
  return out;
}

// ---------------------------------------------------------------------------
// scratch directories

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    mswa::Rng rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() /
           (tag + "_" + std::to_string(rng.next_u64() % 1000000000));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace testutil
