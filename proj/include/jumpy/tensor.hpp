#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace jumpy {

// Reverse-mode autodiff over dense double tensors. Graphs are built
// dynamically; backward() walks creation order in reverse. Values must stay
// finite; NaNs are treated as training divergence by callers.

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // accumulates into parents' grads

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (static_cast<int64_t>(grad.size()) != numel()) grad.assign(numel(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor constant(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor param(std::vector<int> shape, std::vector<double> data);

  bool defined() const { return node != nullptr; }
  const std::vector<int>& shape() const { return node->shape; }
  int dim(int i) const { return node->shape[i]; }
  int64_t numel() const { return node->numel(); }
  std::vector<double>& data() { return node->value; }
  const std::vector<double>& data() const { return node->value; }
  std::vector<double>& grad() { return node->grad; }
  const std::vector<double>& grad() const { return node->grad; }
  bool requires_grad() const { return node->requires_grad; }
  double item() const { return node->value[0]; }

  std::shared_ptr<TensorNode> node;
};

// Runs reverse-mode accumulation from a scalar root. Grads of reachable
// grad-requiring nodes are zero-initialized unless already sized (parameter
// grads accumulate; call zero_grad between optimizer steps).
void backward(const Tensor& root);
void zero_grad(std::span<const Tensor> params);

// Finite-difference support: stop_gradient outputs and categorical samples
// record their base-evaluation values so repeated evaluations differentiate
// the same surrogate the analytic gradient belongs to.
struct FreezeSession {
  bool recording = true;
  std::vector<std::vector<double>> sg_values;
  size_t sg_cursor = 0;
  std::vector<int> sample_indices;
  size_t sample_cursor = 0;
  void rewind() {
    sg_cursor = 0;
    sample_cursor = 0;
  }
};

class FreezeScope {
 public:
  explicit FreezeScope(FreezeSession* s);
  ~FreezeScope();
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  FreezeSession* prev_;
};

FreezeSession* active_freeze();

// elementwise / scalar ops
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid_op(const Tensor& a);
Tensor elu_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor softplus_op(const Tensor& a);
Tensor symlog_op(const Tensor& a);
Tensor symexp_op(const Tensor& a);
Tensor clamp_min_op(const Tensor& a, double lo);
Tensor stop_gradient(const Tensor& a);

// structural ops on [rows, cols] tensors
Tensor dense(const Tensor& x, const Tensor& W, const Tensor& b);  // x[B,I] W[I,O] b[O]
Tensor matmul(const Tensor& x, const Tensor& W);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, int lo, int hi);
Tensor take_row(const Tensor& x, int row);  // [1, C]
Tensor row_select(const std::vector<double>& mask, const Tensor& a, const Tensor& b);

// reductions / groups (groups of K consecutive values, row-major)
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor softmax_groups(const Tensor& x, int K);
Tensor pick_groups(const Tensor& probs, int K, const std::vector<int>& idx);  // [groups,1]
Tensor entropy_groups(const Tensor& probs, int K);                            // [groups,1]
// per-sample KL between probability tensors: each sample owns `groups_per_sample`
// consecutive groups of K; 0*ln0 := 0
Tensor kl_per_sample(const Tensor& p, const Tensor& q, int K, int groups_per_sample);
// 0.5 * sum of squared error per row against a constant target
Tensor half_sse_rows(const Tensor& pred, const std::vector<double>& target);
Tensor bce_logits_rows(const Tensor& logits, const std::vector<double>& targets);

// fixed bilinear upsample of [B, s*s] maps to [B, d*d]
Tensor bilinear_upsample(const Tensor& x, int src_side, int dst_side);

// numeric helpers
double symlog(double x);
double symexp(double x);

}  // namespace jumpy
