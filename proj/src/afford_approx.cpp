#include "jumpy/afford_approx.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace jumpy {

ApproxModel::ApproxModel(int n_tasks_, uint64_t seed) : n_tasks(n_tasks_) {
  Rng rng(seed);
  std::vector<double> emb(static_cast<size_t>(n_tasks_) * kEmbDim);
  for (auto& v : emb) v = 0.1 * (2.0 * rng.uniform() - 1.0);
  task_emb = Tensor::param({n_tasks_, kEmbDim}, std::move(emb));
  net = Mlp({kObsDs * kObsDs * 3 + kEmbDim, kHidden, kHidden, kMapDs * kMapDs}, rng);
}

NamedParams ApproxModel::named_params() const {
  NamedParams np;
  np.emplace_back("approx/task_emb", task_emb);
  net.collect(np, "approx/net");
  return np;
}

std::vector<Tensor> ApproxModel::param_list() const {
  std::vector<Tensor> out;
  for (auto& [n, t] : named_params()) out.push_back(t);
  return out;
}

int64_t ApproxModel::param_count() const {
  int64_t n = 0;
  for (auto& t : param_list()) n += t.numel();
  return n;
}

Tensor ApproxModel::forward(const Tensor& obs_batch, const std::vector<int>& task_ids,
                            int out_side) const {
  const int B = obs_batch.dim(0);
  if (static_cast<int>(task_ids.size()) != B) throw std::invalid_argument("forward: task id count");
  std::vector<Tensor> embs;
  embs.reserve(B);
  for (int b = 0; b < B; ++b) {
    if (task_ids[b] < 0 || task_ids[b] >= n_tasks) throw std::invalid_argument("forward: bad task id");
    embs.push_back(take_row(task_emb, task_ids[b]));
  }
  Tensor emb = B == 1 ? embs[0] : concat_rows(embs);
  Tensor logits = net(concat_cols(std::vector<Tensor>{obs_batch, emb}));
  Tensor coarse = softplus_op(logits);
  if (out_side == kMapDs) return coarse;
  return bilinear_upsample(coarse, kMapDs, out_side);
}

AffordanceMap ApproxModel::predict(const Image& obs, int task_id) const {
  std::vector<double> ds = downsample_flat(obs, kObsDs);
  Tensor in = Tensor::constant({1, static_cast<int>(ds.size())}, ds);
  Tensor out = forward(in, {task_id}, obs.w);
  AffordanceMap map(obs.w, obs.h);
  map.v = out.data();
  return map;
}

AffordanceMap predict_map(const ApproxModel& model, const Image& obs, const Instruction&) {
  return model.predict(obs, 0);
}

std::vector<AnnotatedSample> annotate_dataset(const WorldConfig& cfg, const Instruction& instr, int n,
                                              uint64_t seed) {
  if (n < 1) throw std::invalid_argument("annotate_dataset: n must be >= 1");
  std::vector<AnnotatedSample> out;
  out.reserve(n);
  Rng rng(seed);
  uint64_t episode = 0;
  auto [state, obs] = reset(cfg, hash_mix(seed, episode));
  while (static_cast<int>(out.size()) < n) {
    AnnotatedSample s;
    s.obs = obs;
    s.instruction = instr;
    s.task_id = 0;
    s.map = compute_affordance_map(obs, instr);
    out.push_back(std::move(s));
    if (static_cast<int>(out.size()) >= n) break;
    auto [s2, res] = step(state, static_cast<Action>(rng.uniform_int(kNumActions)));
    state = s2;
    obs = res.obs;
    if (res.cont == 0) {
      episode += 1;
      auto [ns, no] = reset(cfg, hash_mix(seed, episode));
      state = ns;
      obs = no;
    }
  }
  return out;
}

TrainApproxResult train_approximator(const std::vector<AnnotatedSample>& data, int epochs, double lr,
                                     uint64_t seed) {
  if (data.size() < 8) throw std::invalid_argument("train_approximator: need at least 8 samples");
  std::vector<size_t> train_idx, hold_idx;
  for (size_t i = 0; i < data.size(); ++i)
    (i % 10 == 9 ? hold_idx : train_idx).push_back(i);

  TrainApproxResult res;
  res.model = ApproxModel(1, seed);
  Adam opt(res.model.param_list(), lr);
  Rng rng(hash_mix(seed, 1));

  const int out_side = data[0].obs.w;
  auto sample_loss = [&](const AnnotatedSample& s) {
    std::vector<double> ds = downsample_flat(s.obs, ApproxModel::kObsDs);
    Tensor in = Tensor::constant({1, static_cast<int>(ds.size())}, ds);
    Tensor pred = res.model.forward(in, {s.task_id}, out_side);
    Tensor per_row = half_sse_rows(pred, s.map.v);
    // plain mean squared error over pixels
    return scale(per_row, 2.0 / static_cast<double>(s.map.v.size()));
  };

  for (int e = 0; e < epochs; ++e) {
    std::vector<size_t> order = train_idx;
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
    double epoch_loss = 0.0;
    for (size_t i : order) {
      opt.zero_grad();
      Tensor loss = sample_loss(data[i]);
      if (!std::isfinite(loss.item()))
        throw DivergenceError("approximator diverged at epoch " + std::to_string(e));
      backward(loss);
      opt.step();
      epoch_loss += loss.item();
    }
    res.train_curve.push_back(epoch_loss / static_cast<double>(train_idx.size()));
  }

  res.train_loss = approx_mse(res.model, data, train_idx);
  res.holdout_loss = approx_mse(res.model, data, hold_idx);
  return res;
}

double approx_mse(const ApproxModel& model, const std::vector<AnnotatedSample>& data,
                  const std::vector<size_t>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  long count = 0;
  for (size_t i : idx) {
    AffordanceMap pred = model.predict(data[i].obs, data[i].task_id);
    for (size_t j = 0; j < pred.v.size(); ++j) {
      double d = pred.v[j] - data[i].map.v[j];
      total += d * d;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---- serialization ----

void ApproxModel::save(const std::string& path) const {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("approx save: cannot open " + path);
  std::fwrite("LSIA", 1, 4, f);
  unsigned char version = 1;
  std::fwrite(&version, 1, 1, f);
  std::vector<float> flat;
  for (const auto& t : param_list())
    for (double v : t.data()) flat.push_back(static_cast<float>(v));
  uint32_t count = static_cast<uint32_t>(flat.size());
  std::fwrite(&count, sizeof(count), 1, f);
  std::fwrite(flat.data(), sizeof(float), flat.size(), f);
  std::fclose(f);
}

ApproxModel ApproxModel::load(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("approx load: cannot open " + path);
  char magic[4];
  unsigned char version;
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "LSIA", 4) != 0 ||
      std::fread(&version, 1, 1, f) != 1 || version != 1) {
    std::fclose(f);
    throw std::runtime_error("approx load: bad header");
  }
  uint32_t count = 0;
  if (std::fread(&count, sizeof(count), 1, f) != 1) {
    std::fclose(f);
    throw std::runtime_error("approx load: truncated");
  }
  std::vector<float> flat(count);
  if (std::fread(flat.data(), sizeof(float), count, f) != count) {
    std::fclose(f);
    throw std::runtime_error("approx load: truncated data");
  }
  std::fclose(f);

  // derive n_tasks from the parameter count: total = n_tasks*emb + net
  ApproxModel probe(1, 0);
  int64_t net_params = probe.param_count() - ApproxModel::kEmbDim;
  int64_t emb_total = static_cast<int64_t>(count) - net_params;
  if (emb_total <= 0 || emb_total % ApproxModel::kEmbDim != 0)
    throw std::runtime_error("approx load: inconsistent parameter count");
  ApproxModel model(static_cast<int>(emb_total / ApproxModel::kEmbDim), 0);

  size_t cursor = 0;
  for (auto& t : model.param_list()) {
    for (auto& v : t.data()) v = static_cast<double>(flat[cursor++]);
  }
  if (cursor != flat.size()) throw std::runtime_error("approx load: size mismatch");
  return model;
}

void save_dataset(const std::string& path, const std::vector<AnnotatedSample>& data) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("dataset save: cannot open " + path);
  std::fwrite("LSDS", 1, 4, f);
  unsigned char version = 1;
  std::fwrite(&version, 1, 1, f);
  uint32_t n = static_cast<uint32_t>(data.size());
  std::fwrite(&n, sizeof(n), 1, f);
  for (const auto& s : data) {
    uint32_t dims[3] = {static_cast<uint32_t>(s.obs.w), static_cast<uint32_t>(s.obs.h),
                        static_cast<uint32_t>(s.task_id)};
    std::fwrite(dims, sizeof(uint32_t), 3, f);
    std::vector<float> ob(s.obs.px.begin(), s.obs.px.end());
    std::vector<float> mp(s.map.v.begin(), s.map.v.end());
    std::fwrite(ob.data(), sizeof(float), ob.size(), f);
    std::fwrite(mp.data(), sizeof(float), mp.size(), f);
  }
  std::fclose(f);
}

std::vector<AnnotatedSample> load_dataset(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("dataset load: cannot open " + path);
  char magic[4];
  unsigned char version;
  uint32_t n = 0;
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "LSDS", 4) != 0 ||
      std::fread(&version, 1, 1, f) != 1 || version != 1 || std::fread(&n, sizeof(n), 1, f) != 1) {
    std::fclose(f);
    throw std::runtime_error("dataset load: bad header");
  }
  std::vector<AnnotatedSample> out(n);
  for (auto& s : out) {
    uint32_t dims[3];
    if (std::fread(dims, sizeof(uint32_t), 3, f) != 3) {
      std::fclose(f);
      throw std::runtime_error("dataset load: truncated");
    }
    s.obs = Image(static_cast<int>(dims[0]), static_cast<int>(dims[1]), 3);
    s.task_id = static_cast<int>(dims[2]);
    s.map = AffordanceMap(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    std::vector<float> ob(s.obs.px.size());
    std::vector<float> mp(s.map.v.size());
    if (std::fread(ob.data(), sizeof(float), ob.size(), f) != ob.size() ||
        std::fread(mp.data(), sizeof(float), mp.size(), f) != mp.size()) {
      std::fclose(f);
      throw std::runtime_error("dataset load: truncated data");
    }
    std::copy(ob.begin(), ob.end(), s.obs.px.begin());
    std::copy(mp.begin(), mp.end(), s.map.v.begin());
  }
  std::fclose(f);
  return out;
}

}  // namespace jumpy
