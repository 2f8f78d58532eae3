#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace mswa {

namespace {

using detail::Node;
using detail::NodePtr;

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) fail(ErrorCode::Shape, "negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

NodePtr make_node(std::vector<int64_t> shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data.assign(shape_numel(node->shape), 0.0);
  node->requires_grad = requires_grad;
  return node;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b))
    fail(ErrorCode::Shape, std::string(op) + ": shapes differ: " +
                               shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Decompose a shape around an axis into (outer, extent, inner) so that the
// element at [o, x, i] lives at (o * extent + x) * inner + i.
struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const std::vector<int64_t>& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i < axis)
      s.outer *= shape[i];
    else if (i == axis)
      s.extent = shape[i];
    else
      s.inner *= shape[i];
  }
  return s;
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Mask Mask::band(int64_t n, int64_t window) {
  Mask m{n, n, std::vector<uint8_t>(n * n, 0)};
  for (int64_t i = 0; i < n; ++i) {
    int64_t lo = std::max<int64_t>(0, i - window);
    for (int64_t j = lo; j <= i; ++j) m.keep[i * n + j] = 1;
  }
  return m;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->data.begin(), t.node()->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    fail(ErrorCode::Shape, "from: shape " + shape_str(shape) + " wants " +
                               std::to_string(shape_numel(shape)) + " values, got " +
                               std::to_string(data.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1)
    fail(ErrorCode::Shape, "item: tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::backward() const {
  if (!node_) fail(ErrorCode::InvalidArgument, "backward: undefined tensor");
  if (size() != 1)
    fail(ErrorCode::Shape,
         "backward: loss must be a scalar, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS over grad-requiring ancestors.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.empty() || stack.back().first == node)) {
      if (next >= node->parents.size()) {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < out->size(); ++i) out->data[i] = pa[i] + pb[i];
  if (out->requires_grad) {
    auto na = a.node(), nb = b.node();
    out->parents = {na, nb};
    out->backprop = [na, nb](Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < out->size(); ++i) out->data[i] = pa[i] - pb[i];
  if (out->requires_grad) {
    auto na = a.node(), nb = b.node();
    out->parents = {na, nb};
    out->backprop = [na, nb](Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto out = make_node(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < out->size(); ++i) out->data[i] = pa[i] * pb[i];
  if (out->requires_grad) {
    auto na = a.node(), nb = b.node();
    out->parents = {na, nb};
    out->backprop = [na, nb](Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          na->grad[i] += self.grad[i] * nb->data[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          nb->grad[i] += self.grad[i] * na->data[i];
      }
    };
  }
  return Tensor(out);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  auto out = make_node(a.shape(), a.requires_grad());
  const double* pa = a.data();
  for (int64_t i = 0; i < out->size(); ++i) out->data[i] = pa[i] * c;
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na, c](Node& self) {
      na->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double c) {
  auto out = make_node(a.shape(), a.requires_grad());
  const double* pa = a.data();
  for (int64_t i = 0; i < out->size(); ++i) out->data[i] = pa[i] + c;
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na](Node& self) {
      na->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

// ---- shape ----

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
  if (shape_numel(shape) != a.size())
    fail(ErrorCode::Shape, "reshape: cannot view " + shape_str(a.shape()) +
                               " as " + shape_str(shape));
  auto out = make_node(std::move(shape), a.requires_grad());
  out->data = a.node()->data;
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na](Node& self) {
      na->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2)
    fail(ErrorCode::Shape, "transpose2d: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.dim(0), n = a.dim(1);
  auto out = make_node({n, m}, a.requires_grad());
  const double* pa = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out->data[j * m + i] = pa[i * n + j];
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na, m, n](Node& self) {
      na->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) na->grad[i * n + j] += self.grad[j * m + i];
    };
  }
  return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat: no inputs");
  const auto& first = parts.front().shape();
  if (axis < 0 || axis >= static_cast<int>(first.size()))
    fail(ErrorCode::Shape, "concat: axis " + std::to_string(axis) +
                               " out of range for " + shape_str(first));
  std::vector<int64_t> out_shape = first;
  bool needs_grad = false;
  int64_t total_extent = 0;
  for (const Tensor& p : parts) {
    auto s = p.shape();
    s[axis] = first[axis];
    if (s != first)
      fail(ErrorCode::Shape, "concat: incompatible shapes " + shape_str(first) +
                                 " vs " + shape_str(p.shape()));
    total_extent += p.dim(axis);
    needs_grad = needs_grad || p.requires_grad();
  }
  out_shape[axis] = total_extent;
  auto out = make_node(out_shape, needs_grad);

  AxisSplit os = split_axis(out_shape, axis);
  std::vector<int64_t> offsets;  // per-part offset along the axis
  int64_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    AxisSplit ps = split_axis(p.shape(), axis);
    const double* src = p.data();
    for (int64_t o = 0; o < ps.outer; ++o)
      std::memcpy(out->data.data() + (o * os.extent + off) * os.inner,
                  src + o * ps.extent * ps.inner,
                  ps.extent * ps.inner * sizeof(double));
    off += p.dim(axis);
  }

  if (needs_grad) {
    std::vector<NodePtr> ns;
    for (const Tensor& p : parts) ns.push_back(p.node());
    out->parents = ns;
    out->backprop = [ns, offsets, os, axis](Node& self) {
      for (size_t pi = 0; pi < ns.size(); ++pi) {
        if (!ns[pi]->requires_grad) continue;
        ns[pi]->ensure_grad();
        AxisSplit ps = split_axis(ns[pi]->shape, axis);
        for (int64_t o = 0; o < ps.outer; ++o) {
          const double* g = self.grad.data() + (o * os.extent + offsets[pi]) * os.inner;
          double* dst = ns[pi]->grad.data() + o * ps.extent * ps.inner;
          for (int64_t i = 0; i < ps.extent * ps.inner; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= a.rank())
    fail(ErrorCode::Shape, "slice: axis " + std::to_string(axis) +
                               " out of range for " + shape_str(a.shape()));
  if (start < 0 || len < 0 || start + len > a.dim(axis))
    fail(ErrorCode::Shape, "slice: range [" + std::to_string(start) + "," +
                               std::to_string(start + len) + ") exceeds axis " +
                               std::to_string(axis) + " of " + shape_str(a.shape()));
  std::vector<int64_t> out_shape = a.shape();
  out_shape[axis] = len;
  auto out = make_node(out_shape, a.requires_grad());
  AxisSplit as = split_axis(a.shape(), axis);
  const double* src = a.data();
  for (int64_t o = 0; o < as.outer; ++o)
    std::memcpy(out->data.data() + o * len * as.inner,
                src + (o * as.extent + start) * as.inner,
                len * as.inner * sizeof(double));
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na, as, start, len](Node& self) {
      na->ensure_grad();
      for (int64_t o = 0; o < as.outer; ++o) {
        const double* g = self.grad.data() + o * len * as.inner;
        double* dst = na->grad.data() + (o * as.extent + start) * as.inner;
        for (int64_t i = 0; i < len * as.inner; ++i) dst[i] += g[i];
      }
    };
  }
  return Tensor(out);
}

// ---- matmul ----

void matmul_accumulate(const double* a, const double* b, double* c, int64_t m,
                       int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double ap = arow[p];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
    }
  }
}

void matmul_bt_accumulate(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void matmul_at_accumulate(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double ap = arow[p];
      if (ap == 0.0) continue;
      double* crow = c + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    fail(ErrorCode::Shape, "matmul: expected rank-2 operands, got " +
                               shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.dim(1) != b.dim(0))
    fail(ErrorCode::Shape, "matmul: inner extents differ: " + shape_str(a.shape()) +
                               " x " + shape_str(b.shape()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_node({m, n}, a.requires_grad() || b.requires_grad());
  matmul_accumulate(a.data(), b.data(), out->data.data(), m, k, n);
  if (out->requires_grad) {
    auto na = a.node(), nb = b.node();
    out->parents = {na, nb};
    out->backprop = [na, nb, m, k, n](Node& self) {
      if (na->requires_grad) {
        na->ensure_grad();
        // dA += G * B^T
        matmul_bt_accumulate(self.grad.data(), nb->data.data(), na->grad.data(),
                             m, n, k);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        // dB += A^T * G
        matmul_at_accumulate(na->data.data(), self.grad.data(), nb->grad.data(),
                             m, k, n);
      }
    };
  }
  return Tensor(out);
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  auto out = make_node({}, a.requires_grad());
  double acc = 0.0;
  const double* pa = a.data();
  for (int64_t i = 0; i < a.size(); ++i) acc += pa[i];
  out->data[0] = acc;
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na](Node& self) {
      na->ensure_grad();
      const double g = self.grad[0];
      for (double& d : na->grad) d += g;
    };
  }
  return Tensor(out);
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) fail(ErrorCode::InvalidArgument, "mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// ---- softmax ----

Tensor softmax_rows(const Tensor& a, const Mask* mask) {
  if (a.rank() != 2)
    fail(ErrorCode::Shape, "softmax_rows: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.dim(0), n = a.dim(1);
  if (mask && (mask->rows != m || mask->cols != n))
    fail(ErrorCode::Shape, "softmax_rows: mask is " + std::to_string(mask->rows) +
                               "x" + std::to_string(mask->cols) + ", tensor is " +
                               shape_str(a.shape()));
  auto out = make_node({m, n}, a.requires_grad());
  const double* pa = a.data();
  for (int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (!mask || mask->at(i, j)) mx = std::max(mx, pa[i * n + j]);
    if (mx == -std::numeric_limits<double>::infinity())
      fail(ErrorCode::Numeric,
           "softmax_rows: row " + std::to_string(i) + " is fully masked");
    double denom = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (!mask || mask->at(i, j)) {
        double e = std::exp(pa[i * n + j] - mx);
        out->data[i * n + j] = e;
        denom += e;
      }
    }
    for (int64_t j = 0; j < n; ++j)
      if (!mask || mask->at(i, j)) out->data[i * n + j] /= denom;
  }
  if (out->requires_grad) {
    auto na = a.node();
    // The output probabilities are all the backward pass needs.
    std::vector<double> probs = out->data;
    out->parents = {na};
    out->backprop = [na, probs, m, n](Node& self) {
      na->ensure_grad();
      for (int64_t i = 0; i < m; ++i) {
        const double* y = probs.data() + i * n;
        const double* g = self.grad.data() + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += y[j] * g[j];
        double* dst = na->grad.data() + i * n;
        for (int64_t j = 0; j < n; ++j) dst[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor(out);
}

// ---- nonlinearities ----

Tensor silu(const Tensor& a) {
  auto out = make_node(a.shape(), a.requires_grad());
  const double* pa = a.data();
  for (int64_t i = 0; i < a.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-pa[i]));
    out->data[i] = pa[i] * s;
  }
  if (out->requires_grad) {
    auto na = a.node();
    out->parents = {na};
    out->backprop = [na](Node& self) {
      na->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        double x = na->data[i];
        double s = 1.0 / (1.0 + std::exp(-x));
        na->grad[i] += self.grad[i] * (s + x * s * (1.0 - s));
      }
    };
  }
  return Tensor(out);
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  if (x.rank() != 2)
    fail(ErrorCode::Shape, "rms_norm: expected rank 2, got " + shape_str(x.shape()));
  int64_t m = x.dim(0), n = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != n)
    fail(ErrorCode::Shape, "rms_norm: gain shape " + shape_str(gain.shape()) +
                               " does not match width of " + shape_str(x.shape()));
  auto out = make_node({m, n}, x.requires_grad() || gain.requires_grad());
  std::vector<double> inv(m);
  const double* px = x.data();
  const double* pg = gain.data();
  for (int64_t i = 0; i < m; ++i) {
    double ms = 0.0;
    for (int64_t j = 0; j < n; ++j) ms += px[i * n + j] * px[i * n + j];
    inv[i] = 1.0 / std::sqrt(ms / static_cast<double>(n) + eps);
    for (int64_t j = 0; j < n; ++j)
      out->data[i * n + j] = px[i * n + j] * inv[i] * pg[j];
  }
  if (out->requires_grad) {
    auto nx = x.node(), ng = gain.node();
    out->parents = {nx, ng};
    out->backprop = [nx, ng, inv, m, n](Node& self) {
      const double* px = nx->data.data();
      const double* pg = ng->data.data();
      if (ng->requires_grad) {
        ng->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            ng->grad[j] += self.grad[i * n + j] * px[i * n + j] * inv[i];
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        for (int64_t i = 0; i < m; ++i) {
          const double* g = self.grad.data() + i * n;
          double dot = 0.0;  // sum_j g_j * gain_j * x_j
          for (int64_t j = 0; j < n; ++j) dot += g[j] * pg[j] * px[i * n + j];
          double r = inv[i];
          double corr = r * r * r * dot / static_cast<double>(n);
          for (int64_t j = 0; j < n; ++j)
            nx->grad[i * n + j] += g[j] * pg[j] * r - px[i * n + j] * corr;
        }
      }
    };
  }
  return Tensor(out);
}

// ---- embedding & loss ----

Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids) {
  if (table.rank() != 2)
    fail(ErrorCode::Shape, "embedding: table must be rank 2, got " +
                               shape_str(table.shape()));
  int64_t vocab = table.dim(0), width = table.dim(1);
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= vocab)
      fail(ErrorCode::Vocab, "embedding: id " + std::to_string(ids[i]) +
                                 " at position " + std::to_string(i) +
                                 " outside vocabulary of " + std::to_string(vocab));
  int64_t n = static_cast<int64_t>(ids.size());
  auto out = make_node({n, width}, table.requires_grad());
  const double* pt = table.data();
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(out->data.data() + i * width, pt + ids[i] * width,
                width * sizeof(double));
  if (out->requires_grad) {
    auto nt = table.node();
    out->parents = {nt};
    out->backprop = [nt, ids, width](Node& self) {
      nt->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        const double* g = self.grad.data() + i * width;
        double* dst = nt->grad.data() + static_cast<int64_t>(ids[i]) * width;
        for (int64_t j = 0; j < width; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(out);
}

Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int32_t>& targets) {
  if (logits.rank() != 2)
    fail(ErrorCode::Shape, "cross_entropy: logits must be rank 2, got " +
                               shape_str(logits.shape()));
  int64_t n = logits.dim(0), vocab = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    fail(ErrorCode::Shape, "cross_entropy: " + std::to_string(targets.size()) +
                               " targets for " + std::to_string(n) + " rows");
  for (int32_t t : targets)
    if (t < 0 || t >= vocab)
      fail(ErrorCode::Vocab, "cross_entropy: target " + std::to_string(t) +
                                 " outside vocabulary of " + std::to_string(vocab));
  auto out = make_node({}, logits.requires_grad());
  std::vector<double> probs(n * vocab);
  const double* pl = logits.data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = pl + i * vocab;
    double mx = row[0];
    for (int64_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < vocab; ++j) {
      double e = std::exp(row[j] - mx);
      probs[i * vocab + j] = e;
      denom += e;
    }
    for (int64_t j = 0; j < vocab; ++j) probs[i * vocab + j] /= denom;
    total += mx + std::log(denom) - row[targets[i]];
  }
  out->data[0] = total / static_cast<double>(n);
  if (out->requires_grad) {
    auto nl = logits.node();
    out->parents = {nl};
    out->backprop = [nl, probs, targets, n, vocab](Node& self) {
      nl->ensure_grad();
      const double g = self.grad[0] / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i) {
        const double* p = probs.data() + i * vocab;
        double* dst = nl->grad.data() + i * vocab;
        for (int64_t j = 0; j < vocab; ++j) dst[j] += g * p[j];
        dst[targets[i]] -= g;
      }
    };
  }
  return Tensor(out);
}

// ---- rotary positions ----

void rotary_inplace(double* x, int64_t rows, int64_t width, int64_t head_dim,
                    int64_t start_pos, double base) {
  if (head_dim <= 0 || head_dim % 2 != 0 || width % head_dim != 0)
    fail(ErrorCode::Shape, "rotary: width " + std::to_string(width) +
                               " incompatible with head_dim " + std::to_string(head_dim));
  int64_t heads = width / head_dim;
  int64_t pairs = head_dim / 2;
  std::vector<double> freq(pairs);
  for (int64_t t = 0; t < pairs; ++t)
    freq[t] = std::pow(base, -2.0 * static_cast<double>(t) /
                                 static_cast<double>(head_dim));
  for (int64_t i = 0; i < rows; ++i) {
    double pos = static_cast<double>(start_pos + i);
    for (int64_t h = 0; h < heads; ++h) {
      double* row = x + i * width + h * head_dim;
      for (int64_t t = 0; t < pairs; ++t) {
        double angle = pos * freq[t];
        double c = std::cos(angle), s = std::sin(angle);
        double a = row[2 * t], b = row[2 * t + 1];
        row[2 * t] = a * c - b * s;
        row[2 * t + 1] = a * s + b * c;
      }
    }
  }
}

Tensor rotary(const Tensor& x, int64_t head_dim, int64_t start_pos, double base) {
  if (x.rank() != 2)
    fail(ErrorCode::Shape, "rotary: expected rank 2, got " + shape_str(x.shape()));
  int64_t rows = x.dim(0), width = x.dim(1);
  auto out = make_node({rows, width}, x.requires_grad());
  out->data = x.node()->data;
  rotary_inplace(out->data.data(), rows, width, head_dim, start_pos, base);
  if (out->requires_grad) {
    auto nx = x.node();
    out->parents = {nx};
    out->backprop = [nx, rows, width, head_dim, start_pos, base](Node& self) {
      nx->ensure_grad();
      // The rotation is orthogonal; its adjoint is the inverse rotation.
      std::vector<double> g = self.grad;
      int64_t heads = width / head_dim;
      int64_t pairs = head_dim / 2;
      for (int64_t i = 0; i < rows; ++i) {
        double pos = static_cast<double>(start_pos + i);
        for (int64_t h = 0; h < heads; ++h) {
          double* row = g.data() + i * width + h * head_dim;
          for (int64_t t = 0; t < pairs; ++t) {
            double angle = -pos * std::pow(base, -2.0 * static_cast<double>(t) /
                                                     static_cast<double>(head_dim));
            double c = std::cos(angle), s = std::sin(angle);
            double a = row[2 * t], b = row[2 * t + 1];
            row[2 * t] = a * c - b * s;
            row[2 * t + 1] = a * s + b * c;
          }
        }
      }
      for (int64_t i = 0; i < rows * width; ++i) nx->grad[i] += g[i];
    };
  }
  return Tensor(out);
}

}  // namespace mswa
