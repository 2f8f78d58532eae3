#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"

namespace mswa {

// Dense row-major tensor of doubles with reverse-mode gradient tracking.
//
// Tensor is a cheap value-semantic handle onto a tape node. Operations build
// the tape as they run; Tensor::backward() on a scalar walks it in reverse
// topological order and accumulates gradients into every reachable node with
// requires_grad set. Data is immutable once a tensor has been consumed by an
// op; gradients accumulate across backward calls until zero_grad().

namespace detail {

struct Node {
  std::vector<int64_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first touched by backward
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads. Null for leaves.
  std::function<void(Node&)> backprop;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

std::string shape_str(const std::vector<int64_t>& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const { return node_->shape; }
  int64_t dim(int i) const { return node_->shape.at(i); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return node_->size(); }

  const double* data() const { return node_->data.data(); }
  double* data() { return node_->data.data(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const double* grad() const { return node_->grad.data(); }
  const std::vector<double>& grad_vec() const { return node_->grad; }
  void zero_grad() {
    if (node_) node_->grad.clear();
  }

  // Reverse-mode pass from a scalar. Gradients accumulate on repeated calls.
  void backward() const;

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// A named trainable tensor. Names must be unique within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

// Boolean mask companion for softmax_rows; true = entry participates.
struct Mask {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<uint8_t> keep;

  static Mask all(int64_t rows, int64_t cols) {
    return Mask{rows, cols, std::vector<uint8_t>(rows * cols, 1)};
  }
  // Causal band: row i keeps columns [max(0, i - window), i].
  static Mask band(int64_t n, int64_t window);
  bool at(int64_t i, int64_t j) const { return keep[i * cols + j] != 0; }
};

// ---- elementwise & scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// ---- shape ----
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
Tensor transpose2d(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- nonlinearities & norms ----
Tensor softmax_rows(const Tensor& a, const Mask* mask = nullptr);
Tensor silu(const Tensor& a);
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// ---- embedding & loss ----
Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids);
Tensor cross_entropy_with_logits(const Tensor& logits,
                                 const std::vector<int32_t>& targets);

// Rotary position application over multi-head rows. x is n x (heads*head_dim);
// pair (2t, 2t+1) within each head is rotated by angle pos * base^(-2t/d)
// with pos = start_pos + row.
Tensor rotary(const Tensor& x, int64_t head_dim, int64_t start_pos,
              double base = 10000.0);

// Raw matmul kernel, C[m x n] += A[m x k] * B[k x n]; shared by ops and the
// inference path.
void matmul_accumulate(const double* a, const double* b, double* c, int64_t m,
                       int64_t k, int64_t n);
// C[m x n] += A[m x k] * B[n x k]^T
void matmul_bt_accumulate(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n);
// C[k x n] += A[m x k]^T * B[m x n]
void matmul_at_accumulate(const double* a, const double* b, double* c,
                          int64_t m, int64_t k, int64_t n);

void rotary_inplace(double* x, int64_t rows, int64_t width, int64_t head_dim,
                    int64_t start_pos, double base = 10000.0);

}  // namespace mswa
