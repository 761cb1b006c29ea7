#include "jumpy/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace jumpy {

namespace {

std::atomic<uint64_t> g_next_id{1};

std::shared_ptr<TensorNode> make_node(std::vector<int> shape) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

thread_local FreezeSession* g_freeze = nullptr;

// threshold below which matmuls stay single-threaded
constexpr int64_t kOmpWork = 1 << 16;

}  // namespace

FreezeScope::FreezeScope(FreezeSession* s) : prev_(g_freeze) {
  g_freeze = s;
  if (s && !s->recording) s->rewind();
}
FreezeScope::~FreezeScope() { g_freeze = prev_; }
FreezeSession* active_freeze() { return g_freeze; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->value.assign(n->numel(), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> data) {
  auto n = make_node(std::move(shape));
  if (static_cast<int64_t>(data.size()) != n->numel())
    throw std::invalid_argument("constant: data size mismatch");
  n->value = std::move(data);
  return Tensor(n);
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::param(std::vector<int> shape, std::vector<double> data) {
  Tensor t = constant(std::move(shape), std::move(data));
  t.node->requires_grad = true;
  return t;
}

void backward(const Tensor& root) {
  if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  if (!root.node->requires_grad) return;

  // collect reachable grad-requiring subgraph
  std::vector<TensorNode*> order;
  std::vector<TensorNode*> stack{root.node.get()};
  std::unordered_set<uint64_t> seen;
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad) continue;
    if (!seen.insert(n->id).second) continue;
    order.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });

  for (TensorNode* n : order) n->ensure_grad();
  root.node->grad[0] += 1.0;
  for (TensorNode* n : order)
    if (n->backprop) n->backprop(*n);
}

void zero_grad(std::span<const Tensor> params) {
  for (const auto& p : params) {
    p.node->grad.assign(p.numel(), 0.0);
  }
}

// ---- op helpers ----

namespace {

Tensor unary(const Tensor& a, std::vector<int> shape, std::function<void(const TensorNode&, TensorNode&)> fwd,
             std::function<void(TensorNode&)> bwd) {
  auto n = make_node(std::move(shape));
  n->parents = {a.node};
  n->requires_grad = a.node->requires_grad;
  fwd(*a.node, *n);
  if (n->requires_grad) n->backprop = std::move(bwd);
  return Tensor(n);
}

void add_grad(TensorNode& parent, const std::vector<double>& g) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("add: shape mismatch");
  auto n = make_node(a.shape());
  n->parents = {a.node, b.node};
  n->requires_grad = a.requires_grad() || b.requires_grad();
  n->value.resize(n->numel());
  for (int64_t i = 0; i < n->numel(); ++i) n->value[i] = a.data()[i] + b.data()[i];
  if (n->requires_grad)
    n->backprop = [](TensorNode& self) {
      add_grad(*self.parents[0], self.grad);
      add_grad(*self.parents[1], self.grad);
    };
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("sub: shape mismatch");
  auto n = make_node(a.shape());
  n->parents = {a.node, b.node};
  n->requires_grad = a.requires_grad() || b.requires_grad();
  n->value.resize(n->numel());
  for (int64_t i = 0; i < n->numel(); ++i) n->value[i] = a.data()[i] - b.data()[i];
  if (n->requires_grad)
    n->backprop = [](TensorNode& self) {
      add_grad(*self.parents[0], self.grad);
      TensorNode& p1 = *self.parents[1];
      if (p1.requires_grad) {
        p1.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p1.grad[i] -= self.grad[i];
      }
    };
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("mul: shape mismatch");
  auto n = make_node(a.shape());
  n->parents = {a.node, b.node};
  n->requires_grad = a.requires_grad() || b.requires_grad();
  n->value.resize(n->numel());
  for (int64_t i = 0; i < n->numel(); ++i) n->value[i] = a.data()[i] * b.data()[i];
  if (n->requires_grad)
    n->backprop = [](TensorNode& self) {
      TensorNode& pa = *self.parents[0];
      TensorNode& pb = *self.parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
      }
    };
  return Tensor(n);
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, a.shape(),
      [s](const TensorNode& p, TensorNode& n) {
        n.value.resize(p.value.size());
        for (size_t i = 0; i < p.value.size(); ++i) n.value[i] = p.value[i] * s;
      },
      [s](TensorNode& self) {
        TensorNode& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, a.shape(),
      [s](const TensorNode& p, TensorNode& n) {
        n.value.resize(p.value.size());
        for (size_t i = 0; i < p.value.size(); ++i) n.value[i] = p.value[i] + s;
      },
      [](TensorNode& self) { add_grad(*self.parents[0], self.grad); });
}

namespace {

Tensor pointwise(const Tensor& a, double (*f)(double), double (*df_from_xy)(double, double)) {
  auto n = make_node(a.shape());
  n->parents = {a.node};
  n->requires_grad = a.requires_grad();
  n->value.resize(n->numel());
  for (int64_t i = 0; i < n->numel(); ++i) n->value[i] = f(a.data()[i]);
  if (n->requires_grad)
    n->backprop = [df_from_xy](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        p.grad[i] += self.grad[i] * df_from_xy(p.value[i], self.value[i]);
    };
  return Tensor(n);
}

}  // namespace

Tensor tanh_op(const Tensor& a) {
  return pointwise(a, [](double x) { return std::tanh(x); },
                   [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid_op(const Tensor& a) {
  return pointwise(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                   [](double, double y) { return y * (1.0 - y); });
}

Tensor elu_op(const Tensor& a) {
  return pointwise(a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
                   [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor exp_op(const Tensor& a) {
  return pointwise(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return pointwise(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus_op(const Tensor& a) {
  return pointwise(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

double symlog(double x) { return x >= 0.0 ? std::log1p(x) : -std::log1p(-x); }
double symexp(double x) { return x >= 0.0 ? std::expm1(x) : -std::expm1(-x); }

Tensor symlog_op(const Tensor& a) {
  return pointwise(a, [](double x) { return symlog(x); },
                   [](double x, double) { return 1.0 / (1.0 + std::abs(x)); });
}

Tensor symexp_op(const Tensor& a) {
  return pointwise(a, [](double x) { return symexp(x); },
                   [](double x, double) { return std::exp(std::abs(x)); });
}

Tensor clamp_min_op(const Tensor& a, double lo) {
  auto n = make_node(a.shape());
  n->parents = {a.node};
  n->requires_grad = a.requires_grad();
  n->value.resize(n->numel());
  for (int64_t i = 0; i < n->numel(); ++i) n->value[i] = std::max(lo, a.data()[i]);
  if (n->requires_grad)
    n->backprop = [lo](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        if (p.value[i] > lo) p.grad[i] += self.grad[i];
    };
  return Tensor(n);
}

Tensor stop_gradient(const Tensor& a) {
  auto n = make_node(a.shape());
  // no parents, no grad: a pure value boundary
  if (FreezeSession* fs = active_freeze()) {
    if (fs->recording) {
      fs->sg_values.push_back(a.data());
      n->value = a.data();
    } else {
      if (fs->sg_cursor >= fs->sg_values.size())
        throw std::logic_error("freeze replay: stop_gradient count mismatch");
      n->value = fs->sg_values[fs->sg_cursor++];
    }
  } else {
    n->value = a.data();
  }
  return Tensor(n);
}

// ---- structural ops ----

Tensor dense(const Tensor& x, const Tensor& W, const Tensor& b) {
  const int B = x.dim(0), I = x.dim(1);
  if (W.dim(0) != I) throw std::invalid_argument("dense: inner dim mismatch");
  const int O = W.dim(1);
  if (b.defined() && b.numel() != O) throw std::invalid_argument("dense: bias dim mismatch");

  auto n = make_node({B, O});
  n->parents = b.defined() ? std::vector{x.node, W.node, b.node} : std::vector{x.node, W.node};
  n->requires_grad = x.requires_grad() || W.requires_grad() || (b.defined() && b.requires_grad());
  n->value.assign(static_cast<size_t>(B) * O, 0.0);

  const double* xp = x.data().data();
  const double* wp = W.data().data();
  double* yp = n->value.data();
  const bool heavy = static_cast<int64_t>(B) * I * O > kOmpWork;
#pragma omp parallel for schedule(static) if (heavy)
  for (int r = 0; r < B; ++r) {
    double* yrow = yp + static_cast<size_t>(r) * O;
    if (b.defined()) {
      const double* bp = b.data().data();
      for (int o = 0; o < O; ++o) yrow[o] = bp[o];
    }
    const double* xrow = xp + static_cast<size_t>(r) * I;
    for (int i = 0; i < I; ++i) {
      const double xv = xrow[i];
      if (xv == 0.0) continue;
      const double* wrow = wp + static_cast<size_t>(i) * O;
      for (int o = 0; o < O; ++o) yrow[o] += xv * wrow[o];
    }
  }

  if (n->requires_grad)
    n->backprop = [B, I, O, heavy](TensorNode& self) {
      TensorNode& xn = *self.parents[0];
      TensorNode& wn = *self.parents[1];
      const double* gy = self.grad.data();
      if (xn.requires_grad) {
        xn.ensure_grad();
        double* gx = xn.grad.data();
        const double* wp = wn.value.data();
#pragma omp parallel for schedule(static) if (heavy)
        for (int r = 0; r < B; ++r) {
          const double* gyrow = gy + static_cast<size_t>(r) * O;
          double* gxrow = gx + static_cast<size_t>(r) * I;
          for (int i = 0; i < I; ++i) {
            const double* wrow = wp + static_cast<size_t>(i) * O;
            double acc = 0.0;
            for (int o = 0; o < O; ++o) acc += gyrow[o] * wrow[o];
            gxrow[i] += acc;
          }
        }
      }
      if (wn.requires_grad) {
        wn.ensure_grad();
        double* gw = wn.grad.data();
        const double* xp = xn.value.data();
#pragma omp parallel for schedule(static) if (heavy)
        for (int i = 0; i < I; ++i) {
          double* gwrow = gw + static_cast<size_t>(i) * O;
          for (int r = 0; r < B; ++r) {
            const double xv = xp[static_cast<size_t>(r) * I + i];
            if (xv == 0.0) continue;
            const double* gyrow = gy + static_cast<size_t>(r) * O;
            for (int o = 0; o < O; ++o) gwrow[o] += xv * gyrow[o];
          }
        }
      }
      if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
        TensorNode& bn = *self.parents[2];
        bn.ensure_grad();
        for (int r = 0; r < B; ++r) {
          const double* gyrow = gy + static_cast<size_t>(r) * O;
          for (int o = 0; o < O; ++o) bn.grad[o] += gyrow[o];
        }
      }
    };
  return Tensor(n);
}

Tensor matmul(const Tensor& x, const Tensor& W) { return dense(x, W, Tensor()); }

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int B = parts[0].dim(0);
  int C = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.dim(0) != B) throw std::invalid_argument("concat_cols: row mismatch");
    C += p.dim(1);
    rg = rg || p.requires_grad();
  }
  auto n = make_node({B, C});
  n->requires_grad = rg;
  n->value.resize(static_cast<size_t>(B) * C);
  std::vector<int> widths;
  for (const auto& p : parts) {
    n->parents.push_back(p.node);
    widths.push_back(p.dim(1));
  }
  int off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const int w = widths[k];
    for (int r = 0; r < B; ++r)
      std::copy_n(parts[k].data().begin() + static_cast<size_t>(r) * w, w,
                  n->value.begin() + static_cast<size_t>(r) * C + off);
    off += w;
  }
  if (rg)
    n->backprop = [B, C, widths](TensorNode& self) {
      int off = 0;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        TensorNode& p = *self.parents[k];
        const int w = widths[k];
        if (p.requires_grad) {
          p.ensure_grad();
          for (int r = 0; r < B; ++r)
            for (int i = 0; i < w; ++i)
              p.grad[static_cast<size_t>(r) * w + i] += self.grad[static_cast<size_t>(r) * C + off + i];
        }
        off += w;
      }
    };
  return Tensor(n);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int C = parts[0].dim(1);
  int B = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.dim(1) != C) throw std::invalid_argument("concat_rows: col mismatch");
    B += p.dim(0);
    rg = rg || p.requires_grad();
  }
  auto n = make_node({B, C});
  n->requires_grad = rg;
  n->value.reserve(static_cast<size_t>(B) * C);
  std::vector<int> rows;
  for (const auto& p : parts) {
    n->parents.push_back(p.node);
    rows.push_back(p.dim(0));
    n->value.insert(n->value.end(), p.data().begin(), p.data().end());
  }
  if (rg)
    n->backprop = [C, rows](TensorNode& self) {
      size_t off = 0;
      for (size_t k = 0; k < self.parents.size(); ++k) {
        TensorNode& p = *self.parents[k];
        const size_t count = static_cast<size_t>(rows[k]) * C;
        if (p.requires_grad) {
          p.ensure_grad();
          for (size_t i = 0; i < count; ++i) p.grad[i] += self.grad[off + i];
        }
        off += count;
      }
    };
  return Tensor(n);
}

Tensor slice_cols(const Tensor& x, int lo, int hi) {
  const int B = x.dim(0), C = x.dim(1), W = hi - lo;
  if (lo < 0 || hi > C || W <= 0) throw std::invalid_argument("slice_cols: bad range");
  auto n = make_node({B, W});
  n->parents = {x.node};
  n->requires_grad = x.requires_grad();
  n->value.resize(static_cast<size_t>(B) * W);
  for (int r = 0; r < B; ++r)
    std::copy_n(x.data().begin() + static_cast<size_t>(r) * C + lo, W,
                n->value.begin() + static_cast<size_t>(r) * W);
  if (n->requires_grad)
    n->backprop = [B, C, W, lo](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (int r = 0; r < B; ++r)
        for (int i = 0; i < W; ++i)
          p.grad[static_cast<size_t>(r) * C + lo + i] += self.grad[static_cast<size_t>(r) * W + i];
    };
  return Tensor(n);
}

Tensor take_row(const Tensor& x, int row) {
  const int B = x.dim(0), C = x.dim(1);
  if (row < 0 || row >= B) throw std::invalid_argument("take_row: bad row");
  auto n = make_node({1, C});
  n->parents = {x.node};
  n->requires_grad = x.requires_grad();
  n->value.assign(x.data().begin() + static_cast<size_t>(row) * C,
                  x.data().begin() + static_cast<size_t>(row + 1) * C);
  if (n->requires_grad)
    n->backprop = [row, C](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (int i = 0; i < C; ++i) p.grad[static_cast<size_t>(row) * C + i] += self.grad[i];
    };
  return Tensor(n);
}

Tensor row_select(const std::vector<double>& mask, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("row_select: shape mismatch");
  const int B = a.dim(0), C = a.dim(1);
  if (static_cast<int>(mask.size()) != B) throw std::invalid_argument("row_select: mask size");
  auto n = make_node(a.shape());
  n->parents = {a.node, b.node};
  n->requires_grad = a.requires_grad() || b.requires_grad();
  n->value.resize(a.numel());
  for (int r = 0; r < B; ++r) {
    const double m = mask[r];
    for (int i = 0; i < C; ++i) {
      size_t j = static_cast<size_t>(r) * C + i;
      n->value[j] = m * a.data()[j] + (1.0 - m) * b.data()[j];
    }
  }
  if (n->requires_grad)
    n->backprop = [mask, B, C](TensorNode& self) {
      TensorNode& pa = *self.parents[0];
      TensorNode& pb = *self.parents[1];
      if (pa.requires_grad) pa.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      for (int r = 0; r < B; ++r) {
        const double m = mask[r];
        for (int i = 0; i < C; ++i) {
          size_t j = static_cast<size_t>(r) * C + i;
          if (pa.requires_grad) pa.grad[j] += m * self.grad[j];
          if (pb.requires_grad) pb.grad[j] += (1.0 - m) * self.grad[j];
        }
      }
    };
  return Tensor(n);
}

Tensor sum_all(const Tensor& x) {
  auto n = make_node({1});
  n->parents = {x.node};
  n->requires_grad = x.requires_grad();
  double s = 0.0;
  for (double v : x.data()) s += v;
  n->value = {s};
  if (n->requires_grad)
    n->backprop = [](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (auto& g : p.grad) g += self.grad[0];
    };
  return Tensor(n);
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax_groups(const Tensor& x, int K) {
  if (x.numel() % K != 0) throw std::invalid_argument("softmax_groups: bad K");
  const int64_t G = x.numel() / K;
  auto n = make_node(x.shape());
  n->parents = {x.node};
  n->requires_grad = x.requires_grad();
  n->value.resize(x.numel());
  for (int64_t g = 0; g < G; ++g) {
    const double* xs = x.data().data() + g * K;
    double* ys = n->value.data() + g * K;
    double m = xs[0];
    for (int k = 1; k < K; ++k) m = std::max(m, xs[k]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) {
      ys[k] = std::exp(xs[k] - m);
      z += ys[k];
    }
    for (int k = 0; k < K; ++k) ys[k] /= z;
  }
  if (n->requires_grad)
    n->backprop = [G, K](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (int64_t g = 0; g < G; ++g) {
        const double* y = self.value.data() + g * K;
        const double* gy = self.grad.data() + g * K;
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += y[k] * gy[k];
        double* gx = p.grad.data() + g * K;
        for (int k = 0; k < K; ++k) gx[k] += y[k] * (gy[k] - dot);
      }
    };
  return Tensor(n);
}

Tensor pick_groups(const Tensor& probs, int K, const std::vector<int>& idx) {
  if (probs.numel() % K != 0) throw std::invalid_argument("pick_groups: bad K");
  const int64_t G = probs.numel() / K;
  if (static_cast<int64_t>(idx.size()) != G) throw std::invalid_argument("pick_groups: idx size");
  auto n = make_node({static_cast<int>(G), 1});
  n->parents = {probs.node};
  n->requires_grad = probs.requires_grad();
  n->value.resize(G);
  for (int64_t g = 0; g < G; ++g) n->value[g] = probs.data()[g * K + idx[g]];
  if (n->requires_grad)
    n->backprop = [K, idx](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (size_t g = 0; g < idx.size(); ++g) p.grad[g * K + idx[g]] += self.grad[g];
    };
  return Tensor(n);
}

Tensor entropy_groups(const Tensor& probs, int K) {
  if (probs.numel() % K != 0) throw std::invalid_argument("entropy_groups: bad K");
  const int64_t G = probs.numel() / K;
  auto n = make_node({static_cast<int>(G), 1});
  n->parents = {probs.node};
  n->requires_grad = probs.requires_grad();
  n->value.assign(G, 0.0);
  for (int64_t g = 0; g < G; ++g) {
    const double* p = probs.data().data() + g * K;
    double h = 0.0;
    for (int k = 0; k < K; ++k)
      if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
    n->value[g] = h;
  }
  if (n->requires_grad)
    n->backprop = [G, K](TensorNode& self) {
      TensorNode& pn = *self.parents[0];
      if (!pn.requires_grad) return;
      pn.ensure_grad();
      for (int64_t g = 0; g < G; ++g) {
        const double* p = pn.value.data() + g * K;
        double* gp = pn.grad.data() + g * K;
        const double gy = self.grad[g];
        for (int k = 0; k < K; ++k)
          if (p[k] > 0.0) gp[k] += gy * (-(std::log(p[k]) + 1.0));
      }
    };
  return Tensor(n);
}

Tensor kl_per_sample(const Tensor& p, const Tensor& q, int K, int groups_per_sample) {
  if (!same_shape(p, q)) throw std::invalid_argument("kl_per_sample: shape mismatch");
  if (p.numel() % (static_cast<int64_t>(K) * groups_per_sample) != 0)
    throw std::invalid_argument("kl_per_sample: bad grouping");
  const int64_t G = p.numel() / K;
  const int64_t S = G / groups_per_sample;
  auto n = make_node({static_cast<int>(S), 1});
  n->parents = {p.node, q.node};
  n->requires_grad = p.requires_grad() || q.requires_grad();
  n->value.assign(S, 0.0);
  for (int64_t g = 0; g < G; ++g) {
    const double* ps = p.data().data() + g * K;
    const double* qs = q.data().data() + g * K;
    double kl = 0.0;
    for (int k = 0; k < K; ++k)
      if (ps[k] > 0.0) kl += ps[k] * (std::log(ps[k]) - std::log(qs[k]));
    n->value[g / groups_per_sample] += kl;
  }
  if (n->requires_grad)
    n->backprop = [G, K, groups_per_sample](TensorNode& self) {
      TensorNode& pn = *self.parents[0];
      TensorNode& qn = *self.parents[1];
      if (pn.requires_grad) pn.ensure_grad();
      if (qn.requires_grad) qn.ensure_grad();
      for (int64_t g = 0; g < G; ++g) {
        const double gy = self.grad[g / groups_per_sample];
        const double* ps = pn.value.data() + g * K;
        const double* qs = qn.value.data() + g * K;
        for (int k = 0; k < K; ++k) {
          if (pn.requires_grad && ps[k] > 0.0)
            pn.grad[g * K + k] += gy * (std::log(ps[k]) - std::log(qs[k]) + 1.0);
          if (qn.requires_grad) qn.grad[g * K + k] += gy * (-ps[k] / qs[k]);
        }
      }
    };
  return Tensor(n);
}

Tensor half_sse_rows(const Tensor& pred, const std::vector<double>& target) {
  const int B = pred.dim(0), C = pred.dim(1);
  if (static_cast<int64_t>(target.size()) != pred.numel())
    throw std::invalid_argument("half_sse_rows: target size mismatch");
  auto n = make_node({B, 1});
  n->parents = {pred.node};
  n->requires_grad = pred.requires_grad();
  n->value.assign(B, 0.0);
  for (int r = 0; r < B; ++r) {
    double acc = 0.0;
    for (int i = 0; i < C; ++i) {
      double d = pred.data()[static_cast<size_t>(r) * C + i] - target[static_cast<size_t>(r) * C + i];
      acc += d * d;
    }
    n->value[r] = 0.5 * acc;
  }
  if (n->requires_grad) {
    auto tgt = target;
    n->backprop = [B, C, tgt = std::move(tgt)](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (int r = 0; r < B; ++r) {
        const double gy = self.grad[r];
        for (int i = 0; i < C; ++i) {
          size_t j = static_cast<size_t>(r) * C + i;
          p.grad[j] += gy * (p.value[j] - tgt[j]);
        }
      }
    };
  }
  return Tensor(n);
}

Tensor bce_logits_rows(const Tensor& logits, const std::vector<double>& targets) {
  const int B = logits.dim(0);
  if (logits.dim(1) != 1) throw std::invalid_argument("bce_logits_rows: expect [B,1]");
  if (static_cast<int>(targets.size()) != B) throw std::invalid_argument("bce_logits_rows: target size");
  auto n = make_node({B, 1});
  n->parents = {logits.node};
  n->requires_grad = logits.requires_grad();
  n->value.resize(B);
  for (int r = 0; r < B; ++r) {
    double l = logits.data()[r], t = targets[r];
    // stable: max(l,0) - l*t + log(1+exp(-|l|))
    n->value[r] = std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
  }
  if (n->requires_grad) {
    auto tgt = targets;
    n->backprop = [tgt = std::move(tgt)](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (size_t r = 0; r < tgt.size(); ++r) {
        double sig = 1.0 / (1.0 + std::exp(-p.value[r]));
        p.grad[r] += self.grad[r] * (sig - tgt[r]);
      }
    };
  }
  return Tensor(n);
}

Tensor bilinear_upsample(const Tensor& x, int src_side, int dst_side) {
  const int B = x.dim(0);
  if (x.dim(1) != src_side * src_side) throw std::invalid_argument("bilinear_upsample: bad input");
  const int D = dst_side * dst_side;

  // precompute the 4-tap stencil per destination pixel
  struct Tap {
    int i00, i01, i10, i11;
    double w00, w01, w10, w11;
  };
  std::vector<Tap> taps(static_cast<size_t>(D));
  const double step = static_cast<double>(src_side) / dst_side;
  auto clampi = [&](int v) { return std::clamp(v, 0, src_side - 1); };
  for (int y = 0; y < dst_side; ++y) {
    double sy = (y + 0.5) * step - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    double fy = sy - y0;
    for (int xpix = 0; xpix < dst_side; ++xpix) {
      double sx = (xpix + 0.5) * step - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      double fx = sx - x0;
      Tap t;
      t.i00 = clampi(y0) * src_side + clampi(x0);
      t.i01 = clampi(y0) * src_side + clampi(x0 + 1);
      t.i10 = clampi(y0 + 1) * src_side + clampi(x0);
      t.i11 = clampi(y0 + 1) * src_side + clampi(x0 + 1);
      t.w00 = (1 - fx) * (1 - fy);
      t.w01 = fx * (1 - fy);
      t.w10 = (1 - fx) * fy;
      t.w11 = fx * fy;
      taps[static_cast<size_t>(y) * dst_side + xpix] = t;
    }
  }

  auto n = make_node({B, D});
  n->parents = {x.node};
  n->requires_grad = x.requires_grad();
  n->value.resize(static_cast<size_t>(B) * D);
  const int S = src_side * src_side;
  for (int r = 0; r < B; ++r) {
    const double* src = x.data().data() + static_cast<size_t>(r) * S;
    double* dst = n->value.data() + static_cast<size_t>(r) * D;
    for (int j = 0; j < D; ++j) {
      const Tap& t = taps[j];
      dst[j] = t.w00 * src[t.i00] + t.w01 * src[t.i01] + t.w10 * src[t.i10] + t.w11 * src[t.i11];
    }
  }
  if (n->requires_grad)
    n->backprop = [B, D, S, taps = std::move(taps)](TensorNode& self) {
      TensorNode& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (int r = 0; r < B; ++r) {
        const double* gy = self.grad.data() + static_cast<size_t>(r) * D;
        double* gx = p.grad.data() + static_cast<size_t>(r) * S;
        for (int j = 0; j < D; ++j) {
          const Tap& t = taps[j];
          gx[t.i00] += t.w00 * gy[j];
          gx[t.i01] += t.w01 * gy[j];
          gx[t.i10] += t.w10 * gy[j];
          gx[t.i11] += t.w11 * gy[j];
        }
      }
    };
  return Tensor(n);
}

}  // namespace jumpy
