#include "jumpy/replay.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace jumpy {

void ReplayBuffer::begin_episode() {
  if (!episodes_.empty() && episodes_.back().open)
    throw std::logic_error("begin_episode: previous episode still open");
  episodes_.push_back(Episode{});
}

void ReplayBuffer::record_step(const ShortTuple& short_tuple,
                               const std::function<LongTuple()>& make_candidate) {
  if (episodes_.empty() || !episodes_.back().open)
    throw std::logic_error("record_step: no open episode");
  Episode& ep = episodes_.back();
  ep.steps.push_back(short_tuple);
  total_steps_ += 1;
  if (short_tuple.jump > 0.5) {
    jump_steps_ += 1;
    if (make_candidate) {
      LongTuple lt = make_candidate();
      lt.anchor_index = static_cast<int>(ep.steps.size()) - 1;
      ep.pending.push_back(std::move(lt));
    } else {
      discarded_ += 1;  // long branch disabled; conservation still holds
    }
  }
  evict();
}

std::vector<LongTuple> ReplayBuffer::finalize_pending(double r_intr_new, double gamma) {
  std::vector<LongTuple> done;
  if (episodes_.empty() || !episodes_.back().open) return done;
  Episode& ep = episodes_.back();
  const int now = static_cast<int>(ep.steps.size()) - 1;
  for (auto it = ep.pending.begin(); it != ep.pending.end();) {
    if (it->anchor_index < now && r_intr_new >= it->r_intr_sim) {
      LongTuple lt = *it;
      lt.delta = static_cast<double>(now - lt.anchor_index);
      double g = 0.0, disc = 1.0;
      for (int i = lt.anchor_index + 1; i <= now; ++i) {
        g += disc * ep.steps[static_cast<size_t>(i)].reward;
        disc *= gamma;
      }
      lt.G = g;
      lt.finalized = true;
      ep.longs.push_back(lt);
      done.push_back(std::move(lt));
      finalized_ += 1;
      it = ep.pending.erase(it);
    } else {
      ++it;
    }
  }
  return done;
}

void ReplayBuffer::end_episode() {
  if (episodes_.empty() || !episodes_.back().open)
    throw std::logic_error("end_episode: no open episode");
  Episode& ep = episodes_.back();
  discarded_ += static_cast<long long>(ep.pending.size());
  ep.pending.clear();
  ep.open = false;
  evict();
}

void ReplayBuffer::evict() {
  while (static_cast<long long>(episodes_.size()) > 1 && total_steps_ > capacity_ &&
         !episodes_.front().open) {
    total_steps_ -= static_cast<long long>(episodes_.front().steps.size());
    episodes_.pop_front();
  }
}

long long ReplayBuffer::pending_count() const {
  long long n = 0;
  for (const auto& ep : episodes_) n += static_cast<long long>(ep.pending.size());
  return n;
}

std::optional<SeqBatch> ReplayBuffer::sample_batch(int B, int T, Rng& rng) const {
  // candidate segment starts: (episode, start); short episodes contribute a
  // single truncated segment
  std::vector<std::pair<int, int>> cands;
  for (size_t e = 0; e < episodes_.size(); ++e) {
    const int len = static_cast<int>(episodes_[e].steps.size());
    if (len == 0) continue;
    if (len >= T)
      for (int s = 0; s + T <= len; ++s) cands.emplace_back(static_cast<int>(e), s);
    else
      cands.emplace_back(static_cast<int>(e), 0);
  }
  if (total_steps_ < static_cast<long long>(B) * T || cands.empty()) return std::nullopt;

  const size_t obs_dim = episodes_.front().steps.front().obs_ds.size();
  const size_t map_dim = episodes_.front().steps.front().map_ds.size();

  SeqBatch batch;
  batch.B = B;
  batch.T = T;
  batch.obs.assign(static_cast<size_t>(B) * T * obs_dim, 0.0);
  batch.map.assign(static_cast<size_t>(B) * T * map_dim, 0.0);
  batch.action.assign(static_cast<size_t>(B) * T, 0);
  batch.reward.assign(static_cast<size_t>(B) * T, 0.0);
  batch.cont.assign(static_cast<size_t>(B) * T, 1.0);
  batch.jump.assign(static_cast<size_t>(B) * T, 0.0);
  batch.valid.assign(static_cast<size_t>(B) * T, 0);

  for (int b = 0; b < B; ++b) {
    auto [e, start] = cands[rng.uniform_int(static_cast<int>(cands.size()))];
    const Episode& ep = episodes_[static_cast<size_t>(e)];
    const int len = static_cast<int>(ep.steps.size());
    const int seg = std::min(T, len - start);
    for (int t = 0; t < seg; ++t) {
      const ShortTuple& st = ep.steps[static_cast<size_t>(start + t)];
      size_t i = static_cast<size_t>(b) * T + t;
      std::copy(st.obs_ds.begin(), st.obs_ds.end(), batch.obs.begin() + i * obs_dim);
      std::copy(st.map_ds.begin(), st.map_ds.end(), batch.map.begin() + i * map_dim);
      batch.action[i] = st.action;
      batch.reward[i] = st.reward;
      batch.cont[i] = st.cont;
      batch.jump[i] = st.jump;
      batch.valid[i] = 1;
    }
    for (const LongTuple& lt : ep.longs) {
      if (!lt.finalized) continue;
      const int off = lt.anchor_index - start;
      if (off < 0 || off >= seg) continue;
      SeqBatch::LongItem item;
      item.row = b;
      item.offset = off;
      item.obs.assign(lt.obs_ds.begin(), lt.obs_ds.end());
      item.map.assign(lt.map_ds.begin(), lt.map_ds.end());
      item.reward = lt.reward;
      item.cont = lt.cont;
      item.jump = lt.jump;
      item.delta = lt.delta;
      item.G = lt.G;
      batch.longs.push_back(std::move(item));
    }
  }
  return batch;
}

std::vector<float> downsample_f32(const Image& img, int side) {
  std::vector<double> d = downsample_flat(img, side);
  return std::vector<float>(d.begin(), d.end());
}

std::vector<float> downsample_map_f32(const AffordanceMap& map, int side) {
  Image tmp(map.w, map.h, 1);
  tmp.px = map.v;
  Image small = resize(tmp, side, side);
  return std::vector<float>(small.px.begin(), small.px.end());
}

LongTuple make_long_candidate(const Image& obs, const AffordanceMap& map, const LatentState& anchor,
                              const WorldModel& wm, const ActorCritic& ac,
                              const std::function<AffordanceMap(const Image&)>& afford_fn,
                              const Instruction& instr, const GaussianMatrix& gauss, double alpha,
                              Rng& rng) {
  const WmDims& d = wm.dims;
  auto windows = window_grid(map.w, map.h);
  const WindowRect& win = windows[static_cast<size_t>(best_window_by_map_mean(map))];
  Image sim = crop_resize(obs,
                          Rect{static_cast<double>(win.x), static_cast<double>(win.y),
                               static_cast<double>(win.w), static_cast<double>(win.h)},
                          obs.w, obs.h);
  AffordanceMap sim_map = afford_fn(sim);

  LongTuple lt;
  lt.obs_ds = downsample_f32(sim, d.obs_ds);
  lt.map_ds = downsample_map_f32(sim_map, d.obs_ds);
  lt.r_intr_sim = intrinsic_reward(sim_map, gauss);

  Clip still;
  for (int k = 0; k < Clip::kFrames; ++k) still.frames.push_back(sim);
  double r_clip = score_clip(still, instr);
  lt.reward = composite_reward(0.0, r_clip, lt.r_intr_sim, alpha);
  lt.cont = 1.0;

  // post-jump latent from the frozen model; action and flag from the heads
  Tensor h_pre = Tensor::constant({1, d.h}, anchor.h);
  Tensor z_pre = Tensor::constant({1, d.z_flat()}, anchor.z);
  Tensor h_jump = wm.long_transition(h_pre, z_pre);
  std::vector<double> obs_dsd(lt.obs_ds.begin(), lt.obs_ds.end());
  std::vector<double> map_dsd(lt.map_ds.begin(), lt.map_ds.end());
  CategoricalDist post = wm.encode(h_jump, Tensor::constant({1, d.obs_dim()}, obs_dsd),
                                   Tensor::constant({1, d.map_dim()}, map_dsd));
  std::vector<int> idx = sample_indices(post, rng);
  std::vector<double> z_jump(static_cast<size_t>(d.z_flat()), 0.0);
  for (int g = 0; g < d.z_rows; ++g) z_jump[static_cast<size_t>(g) * d.z_cols + idx[g]] = 1.0;
  Tensor zj = Tensor::constant({1, d.z_flat()}, z_jump);

  auto heads = wm.predict_heads(h_jump, zj);
  lt.jump = heads.j_logit.data()[0] > 0.0 ? 1.0 : 0.0;  // sigmoid(x) > 0.5

  LatentState post_state{h_jump.data(), z_jump};
  lt.action = ac.act_sample(post_state, rng);
  return lt;
}

// ---- episode log ----

namespace {
constexpr char kLogMagic[4] = {'L', 'S', 'R', 'B'};
}

EpisodeLogWriter::EpisodeLogWriter(const std::string& path) {
  f_ = std::fopen(path.c_str(), "wb");
  if (!f_) throw std::runtime_error("episode log: cannot open " + path);
  std::fwrite(kLogMagic, 1, 4, f_);
  unsigned char version = 1;
  std::fwrite(&version, 1, 1, f_);
}

EpisodeLogWriter::~EpisodeLogWriter() {
  if (f_) std::fclose(f_);
}

static void write_record(FILE* f, const LogRecord& r) {
  unsigned char type = static_cast<unsigned char>(r.type);
  std::fwrite(&type, 1, 1, f);
  double vals[7] = {r.reward, r.r_env, r.r_clip, r.r_intr, r.p_jump, r.delta, r.G};
  int32_t ints[2] = {r.action, r.jump};
  std::fwrite(vals, sizeof(double), 7, f);
  std::fwrite(ints, sizeof(int32_t), 2, f);
}

void EpisodeLogWriter::step(const ShortTuple& t) {
  write_record(f_, LogRecord{1, t.reward, t.r_env, t.r_clip, t.r_intr, t.p_jump, t.delta, t.G,
                             t.action, t.jump > 0.5 ? 1 : 0});
}

void EpisodeLogWriter::long_finalized(const LongTuple& t) {
  write_record(f_, LogRecord{2, t.reward, 0.0, 0.0, t.r_intr_sim, 0.0, t.delta, t.G, t.action,
                             t.jump > 0.5 ? 1 : 0});
}

void EpisodeLogWriter::episode_end() { write_record(f_, LogRecord{3, 0, 0, 0, 0, 0, 0, 0, 0, 0}); }

std::vector<LogRecord> read_episode_log(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("episode log: cannot open " + path);
  char magic[4];
  unsigned char version;
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kLogMagic, 4) != 0 ||
      std::fread(&version, 1, 1, f) != 1 || version != 1) {
    std::fclose(f);
    throw std::runtime_error("episode log: bad header");
  }
  std::vector<LogRecord> out;
  while (true) {
    unsigned char type;
    if (std::fread(&type, 1, 1, f) != 1) break;
    LogRecord r;
    r.type = type;
    double vals[7];
    int32_t ints[2];
    if (std::fread(vals, sizeof(double), 7, f) != 7 || std::fread(ints, sizeof(int32_t), 2, f) != 2)
      break;
    r.reward = vals[0];
    r.r_env = vals[1];
    r.r_clip = vals[2];
    r.r_intr = vals[3];
    r.p_jump = vals[4];
    r.delta = vals[5];
    r.G = vals[6];
    r.action = ints[0];
    r.jump = ints[1];
    out.push_back(r);
  }
  std::fclose(f);
  return out;
}

}  // namespace jumpy
