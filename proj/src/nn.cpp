#include "jumpy/nn.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace jumpy {

static std::vector<double> glorot(int in, int out, Rng& rng) {
  double lim = std::sqrt(6.0 / (in + out));
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * lim;
  return w;
}

Linear::Linear(int in, int out, Rng& rng) {
  W = Tensor::param({in, out}, glorot(in, out, rng));
  b = Tensor::param({1, out}, std::vector<double>(out, 0.0));
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + "/W", W);
  out.emplace_back(prefix + "/b", b);
}

Mlp::Mlp(const std::vector<int>& dims, Rng& rng) {
  for (size_t i = 0; i + 1 < dims.size(); ++i) layers.emplace_back(dims[i], dims[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = tanh_op(h);
  }
  return h;
}

void Mlp::collect(NamedParams& out, const std::string& prefix) const {
  for (size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "/l" + std::to_string(i));
}

GruCell::GruCell(int in, int hidden_, Rng& rng)
    : xg(in, 2 * hidden_, rng), hg(hidden_, 2 * hidden_, rng), xc(in, hidden_, rng),
      hc(hidden_, hidden_, rng), hidden(hidden_) {}

Tensor GruCell::operator()(const Tensor& h, const Tensor& x) const {
  Tensor gates = sigmoid_op(add(xg(x), hg(h)));
  Tensor r = slice_cols(gates, 0, hidden);
  Tensor u = slice_cols(gates, hidden, 2 * hidden);
  Tensor cand = tanh_op(add(xc(x), hc(mul(r, h))));
  Tensor one_minus_u = add_scalar(scale(u, -1.0), 1.0);
  return add(mul(u, h), mul(one_minus_u, cand));  // h' = u*h + (1-u)*cand
}

void GruCell::collect(NamedParams& out, const std::string& prefix) const {
  xg.collect(out, prefix + "/xg");
  hg.collect(out, prefix + "/hg");
  xc.collect(out, prefix + "/xc");
  hc.collect(out, prefix + "/hc");
}

Tensor CategoricalDist::probs() const {
  Tensor p = softmax_groups(logits, K);
  if (unimix > 0.0) p = add_scalar(scale(p, 1.0 - unimix), unimix / K);
  return p;
}

std::vector<int> sample_indices(const CategoricalDist& dist, Rng& rng) {
  Tensor p = dist.probs();
  const int64_t G = dist.groups();
  std::vector<int> idx(static_cast<size_t>(G));

  FreezeSession* fs = active_freeze();
  if (fs && !fs->recording) {
    for (auto& i : idx) {
      if (fs->sample_cursor >= fs->sample_indices.size())
        throw std::logic_error("freeze replay: sample count mismatch");
      i = fs->sample_indices[fs->sample_cursor++];
    }
    return idx;
  }
  for (int64_t g = 0; g < G; ++g)
    idx[g] = rng.categorical(std::span<const double>(p.data().data() + g * dist.K, dist.K));
  if (fs && fs->recording)
    for (int i : idx) fs->sample_indices.push_back(i);
  return idx;
}

Tensor sample_straight_through(const CategoricalDist& dist, Rng& rng) {
  std::vector<int> idx = sample_indices(dist, rng);
  Tensor p = dist.probs();
  std::vector<double> onehot(p.numel(), 0.0);
  for (size_t g = 0; g < idx.size(); ++g) onehot[g * dist.K + idx[g]] = 1.0;
  Tensor oh = Tensor::constant(p.shape(), std::move(onehot));
  return add(oh, sub(p, stop_gradient(p)));
}

Tensor greedy_onehot(const CategoricalDist& dist) {
  Tensor p = dist.probs();
  const int64_t G = dist.groups();
  std::vector<double> onehot(p.numel(), 0.0);
  for (int64_t g = 0; g < G; ++g) {
    const double* row = p.data().data() + g * dist.K;
    int best = 0;
    for (int k = 1; k < dist.K; ++k)
      if (row[k] > row[best]) best = k;
    onehot[g * dist.K + best] = 1.0;
  }
  return Tensor::constant(p.shape(), std::move(onehot));
}

Tensor kl_categorical(const CategoricalDist& p, const CategoricalDist& q) {
  if (p.K != q.K) throw std::invalid_argument("kl_categorical: class count mismatch");
  Tensor kl = kl_per_sample(p.probs(), q.probs(), p.K, static_cast<int>(p.groups()));
  return sum_all(kl);
}

Adam::Adam(std::vector<Tensor> params_, double lr_, double clip_norm_)
    : lr(lr_), clip_norm(clip_norm_), params(std::move(params_)) {
  m.resize(params.size());
  v.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    m[i].assign(params[i].numel(), 0.0);
    v[i].assign(params[i].numel(), 0.0);
  }
}

void Adam::zero_grad() { jumpy::zero_grad(params); }

void Adam::update_one(std::vector<double>& value, const std::vector<double>& grad,
                      std::vector<double>& m, std::vector<double>& v, long long t, double lr,
                      double beta1, double beta2, double eps, double scale) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < value.size(); ++i) {
    double g = grad[i] * scale;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void Adam::step() {
  double norm2 = 0.0;
  for (auto& p : params) {
    if (p.grad().empty()) p.node->ensure_grad();
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in adam step");
      norm2 += g * g;
    }
  }
  double scale = 1.0;
  double norm = std::sqrt(norm2);
  if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;

  t += 1;
  for (size_t i = 0; i < params.size(); ++i)
    update_one(params[i].data(), params[i].grad(), m[i], v[i], t, lr, beta1, beta2, eps, scale);
}

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params, double eps,
                  int max_coords_per_param, uint64_t subsample_seed) {
  FreezeSession fs;

  Tensor loss;
  {
    FreezeScope scope(&fs);
    loss = f();
  }
  zero_grad(params);
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.grad().empty()) p.node->ensure_grad();
    analytic.push_back(p.grad());
  }

  fs.recording = false;
  Rng pick(subsample_seed);
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    const int64_t n = p.numel();
    std::vector<int64_t> coords;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      for (int i = 0; i < max_coords_per_param; ++i)
        coords.push_back(pick.uniform_int(static_cast<int>(n)));
    } else {
      coords.resize(n);
      for (int64_t i = 0; i < n; ++i) coords[i] = i;
    }
    for (int64_t c : coords) {
      const double orig = p.data()[c];
      double lp, lm;
      p.data()[c] = orig + eps;
      {
        FreezeScope scope(&fs);
        lp = f().item();
      }
      p.data()[c] = orig - eps;
      {
        FreezeScope scope(&fs);
        lm = f().item();
      }
      p.data()[c] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[pi][c];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---- checkpoint io ----

namespace {

void put_u32(FILE* f, uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
uint32_t get_u32(FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw std::runtime_error("checkpoint: truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams& sections,
                     const std::map<std::string, std::vector<double>>& extras) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::fwrite("LSNN", 1, 4, f);
  unsigned char version = 1;
  std::fwrite(&version, 1, 1, f);
  put_u32(f, static_cast<uint32_t>(sections.size() + extras.size()));

  auto write_section = [&](const std::string& name, const std::vector<int>& shape,
                           const std::vector<double>& data) {
    uint16_t len = static_cast<uint16_t>(name.size());
    std::fwrite(&len, sizeof(len), 1, f);
    std::fwrite(name.data(), 1, len, f);
    unsigned char rank = static_cast<unsigned char>(shape.size());
    std::fwrite(&rank, 1, 1, f);
    for (int d : shape) put_u32(f, static_cast<uint32_t>(d));
    std::vector<float> buf(data.begin(), data.end());
    std::fwrite(buf.data(), sizeof(float), buf.size(), f);
  };

  for (const auto& [name, t] : sections) write_section(name, t.shape(), t.data());
  for (const auto& [name, d] : extras)
    write_section(name, {static_cast<int>(d.size())}, d);
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::string(magic, 4) != "LSNN") {
    std::fclose(f);
    throw std::runtime_error("checkpoint: bad magic");
  }
  unsigned char version = 0;
  if (std::fread(&version, 1, 1, f) != 1 || version != 1) {
    std::fclose(f);
    throw std::runtime_error("checkpoint: unsupported version");
  }
  Checkpoint ck;
  uint32_t count = get_u32(f);
  for (uint32_t s = 0; s < count; ++s) {
    uint16_t len = 0;
    if (std::fread(&len, sizeof(len), 1, f) != 1) throw std::runtime_error("checkpoint: truncated");
    std::string name(len, '\0');
    if (std::fread(name.data(), 1, len, f) != len) throw std::runtime_error("checkpoint: truncated");
    unsigned char rank = 0;
    if (std::fread(&rank, 1, 1, f) != 1) throw std::runtime_error("checkpoint: truncated");
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(get_u32(f));
      numel *= shape[i];
    }
    std::vector<float> buf(static_cast<size_t>(numel));
    if (std::fread(buf.data(), sizeof(float), buf.size(), f) != buf.size())
      throw std::runtime_error("checkpoint: truncated");
    ck.sections[name] = {shape, std::vector<double>(buf.begin(), buf.end())};
  }
  std::fclose(f);
  return ck;
}

void restore_params(const Checkpoint& ck, const NamedParams& sections) {
  for (const auto& [name, t] : sections) {
    auto it = ck.sections.find(name);
    if (it == ck.sections.end()) throw std::runtime_error("checkpoint: missing section " + name);
    if (static_cast<int64_t>(it->second.second.size()) != t.numel())
      throw std::runtime_error("checkpoint: size mismatch for " + name);
    t.node->value = it->second.second;
  }
}

}  // namespace jumpy
