#include "jumpy/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace jumpy {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  env.validate();
  hp.validate();
  if (train_ratio < 1) throw std::invalid_argument("train_ratio must be >= 1");
  if (total_env_steps < warmup_steps) throw std::invalid_argument("total_env_steps must cover warmup");
  if (batch_b < 1 || batch_t < 1) throw std::invalid_argument("bad batch shape");
  if (imag_starts < 1) throw std::invalid_argument("imag_starts must be >= 1");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (sigma_x <= 0.0 || sigma_y <= 0.0) throw std::invalid_argument("sigmas must be > 0");
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
  RunConfig cfg;
  cfg.apply_kv(kv);
  cfg.validate();
  return cfg;
}

void RunConfig::apply_kv(const KvConfig& kv) {
  env = WorldConfig::from_kv(kv, "env.");
  hp.L = kv.get_int("hp.horizon", hp.L);
  hp.gamma = kv.get_double("hp.gamma", hp.gamma);
  hp.lambda = kv.get_double("hp.lambda", hp.lambda);
  hp.jump_exec_prob = kv.get_double("hp.jump_exec_prob", hp.jump_exec_prob);
  weights.dyn = kv.get_double("loss.beta_dyn", weights.dyn);
  weights.rep = kv.get_double("loss.beta_rep", weights.rep);
  weights.pred = kv.get_double("loss.beta_pred", weights.pred);
  weights.long_ = kv.get_double("loss.beta_long", weights.long_);
  dims.h = kv.get_int("wm.h", dims.h);
  dims.z_rows = kv.get_int("wm.z_rows", dims.z_rows);
  dims.z_cols = kv.get_int("wm.z_cols", dims.z_cols);
  dims.hidden = kv.get_int("wm.hidden", dims.hidden);
  dims.unimix = kv.get_double("wm.unimix", dims.unimix);
  alpha = kv.get_double("alpha", alpha);
  sigma_x = kv.get_double("sigma_x", sigma_x);
  sigma_y = kv.get_double("sigma_y", sigma_y);
  train_ratio = kv.get_int("train_ratio", train_ratio);
  total_env_steps = kv.get_i64("total_env_steps", total_env_steps);
  warmup_steps = kv.get_i64("warmup_steps", warmup_steps);
  replay_capacity = kv.get_i64("replay_capacity", replay_capacity);
  seed = static_cast<uint64_t>(kv.get_i64("seed", static_cast<long long>(seed)));
  use_long_term = kv.get_bool("use_long_term", use_long_term);
  use_intrinsic = kv.get_bool("use_intrinsic", use_intrinsic);
  std::string imag = kv.get_str("imagination", imagination == ImaginationMode::series ? "series" : "parallel");
  if (imag == "series")
    imagination = ImaginationMode::series;
  else if (imag == "parallel")
    imagination = ImaginationMode::parallel;
  else
    throw std::invalid_argument("imagination must be series|parallel");
  std::string src = kv.get_str("afford_source", afford == AffordSource::oracle ? "oracle" : "approx");
  if (src == "oracle")
    afford = AffordSource::oracle;
  else if (src == "approx")
    afford = AffordSource::approx;
  else
    throw std::invalid_argument("afford_source must be oracle|approx");
  afford_model_path = kv.get_str("afford_model_path", afford_model_path);
  parallel_depth_cap = kv.get_int("parallel_depth_cap", parallel_depth_cap);
  batch_b = kv.get_int("batch_b", batch_b);
  batch_t = kv.get_int("batch_t", batch_t);
  imag_starts = kv.get_int("imag_starts", imag_starts);
  wm_lr = kv.get_double("wm_lr", wm_lr);
  ac_lr = kv.get_double("ac_lr", ac_lr);
  grad_clip = kv.get_double("grad_clip", grad_clip);
  entropy_coef = kv.get_double("entropy_coef", entropy_coef);
  checkpoint_every = kv.get_i64("checkpoint_every", checkpoint_every);
  out_dir = kv.get_str("out_dir", out_dir);
  write_episode_log = kv.get_bool("write_episode_log", write_episode_log);
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "env.world_size=" << env.world_size << "\n";
  os << "env.view_radius=" << env.view_radius << "\n";
  os << "env.obs_size=" << env.obs_size << "\n";
  os << "env.target_class=" << env.target_class << "\n";
  os << "env.n_targets=" << env.n_targets << "\n";
  os << "env.max_steps=" << env.max_steps << "\n";
  os << "env.seed=" << env.seed << "\n";
  os << "hp.horizon=" << hp.L << "\n";
  os << "hp.gamma=" << hp.gamma << "\n";
  os << "hp.lambda=" << hp.lambda << "\n";
  os << "hp.jump_exec_prob=" << hp.jump_exec_prob << "\n";
  os << "loss.beta_dyn=" << weights.dyn << "\n";
  os << "loss.beta_rep=" << weights.rep << "\n";
  os << "loss.beta_pred=" << weights.pred << "\n";
  os << "loss.beta_long=" << weights.long_ << "\n";
  os << "wm.h=" << dims.h << "\n";
  os << "wm.z_rows=" << dims.z_rows << "\n";
  os << "wm.z_cols=" << dims.z_cols << "\n";
  os << "wm.hidden=" << dims.hidden << "\n";
  os << "wm.unimix=" << dims.unimix << "\n";
  os << "alpha=" << alpha << "\n";
  os << "sigma_x=" << sigma_x << "\n";
  os << "sigma_y=" << sigma_y << "\n";
  os << "train_ratio=" << train_ratio << "\n";
  os << "total_env_steps=" << total_env_steps << "\n";
  os << "warmup_steps=" << warmup_steps << "\n";
  os << "replay_capacity=" << replay_capacity << "\n";
  os << "seed=" << seed << "\n";
  os << "use_long_term=" << (use_long_term ? 1 : 0) << "\n";
  os << "use_intrinsic=" << (use_intrinsic ? 1 : 0) << "\n";
  os << "imagination=" << (imagination == ImaginationMode::series ? "series" : "parallel") << "\n";
  os << "afford_source=" << (afford == AffordSource::oracle ? "oracle" : "approx") << "\n";
  os << "parallel_depth_cap=" << parallel_depth_cap << "\n";
  os << "batch_b=" << batch_b << "\n";
  os << "batch_t=" << batch_t << "\n";
  os << "imag_starts=" << imag_starts << "\n";
  os << "wm_lr=" << wm_lr << "\n";
  os << "ac_lr=" << ac_lr << "\n";
  os << "grad_clip=" << grad_clip << "\n";
  os << "entropy_coef=" << entropy_coef << "\n";
  os << "checkpoint_every=" << checkpoint_every << "\n";
  os << "out_dir=" << out_dir << "\n";
  return os.str();
}

namespace {

constexpr const char* kMetricsHeader =
    "kind,env_step,episode,episode_return,success,episode_length,mean_p_jump,p_thresh,"
    "wm_total,wm_dyn,wm_rep,wm_dec,wm_pred,wm_ldyn,wm_lenc,wm_ldec,wm_lpred,wm_lint,long_count,"
    "critic_loss,actor_loss,jump_frequency,mean_delta,mean_jumps_per_jumping\n";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

struct AgentLatent {
  std::vector<double> h, z;
  int prev_action = -1;  // -1 encodes the zero action vector at episode start
};

LatentState to_latent(const AgentLatent& a) { return LatentState{a.h, a.z}; }

void latent_reset(AgentLatent& lat, const WmDims& d) {
  lat.h.assign(static_cast<size_t>(d.h), 0.0);
  lat.z.assign(static_cast<size_t>(d.z_flat()), 0.0);
  lat.prev_action = -1;
}

void latent_step(const WorldModel& wm, AgentLatent& lat, const std::vector<float>& obs_ds,
                 const std::vector<float>& map_ds, Rng& rng) {
  const WmDims& d = wm.dims;
  std::vector<double> a_onehot(static_cast<size_t>(d.action_dim), 0.0);
  if (lat.prev_action >= 0) a_onehot[static_cast<size_t>(lat.prev_action)] = 1.0;
  Tensor h = wm.short_transition(Tensor::constant({1, d.h}, lat.h),
                                 Tensor::constant({1, d.z_flat()}, lat.z),
                                 Tensor::constant({1, d.action_dim}, a_onehot));
  CategoricalDist post =
      wm.encode(h, Tensor::constant({1, d.obs_dim()}, std::vector<double>(obs_ds.begin(), obs_ds.end())),
                Tensor::constant({1, d.map_dim()}, std::vector<double>(map_ds.begin(), map_ds.end())));
  std::vector<int> idx = sample_indices(post, rng);
  lat.h = h.data();
  lat.z.assign(static_cast<size_t>(d.z_flat()), 0.0);
  for (int g = 0; g < d.z_rows; ++g) lat.z[static_cast<size_t>(g) * d.z_cols + idx[g]] = 1.0;
}

std::function<AffordanceMap(const Image&)> make_afford_fn(const RunConfig& cfg,
                                                          const Instruction& instr,
                                                          std::shared_ptr<ApproxModel>& approx_out) {
  if (cfg.afford == AffordSource::approx) {
    if (cfg.afford_model_path.empty())
      throw std::invalid_argument("afford_source=approx requires afford_model_path");
    approx_out = std::make_shared<ApproxModel>(ApproxModel::load(cfg.afford_model_path));
    auto model = approx_out;
    return [model, instr](const Image& obs) { return predict_map(*model, obs, instr); };
  }
  return [instr](const Image& obs) { return compute_affordance_map(obs, instr); };
}

NamedParams checkpoint_sections(const WorldModel& wm, const ActorCritic& ac) {
  NamedParams np = wm.named_params();
  for (auto& [n, t] : ac.actor_params()) np.emplace_back(n, t);
  for (auto& [n, t] : ac.critic_params()) np.emplace_back(n, t);
  return np;
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(cfg.out_dir + "/config_echo.txt");
    echo << cfg.echo();
  }

  Instruction instr{"navigate", cfg.env.target_class};
  GaussianMatrix gauss = gaussian_matrix(cfg.env.obs_size, cfg.env.obs_size, cfg.sigma_x, cfg.sigma_y);
  std::shared_ptr<ApproxModel> approx;
  auto afford_fn = make_afford_fn(cfg, instr, approx);
  const double alpha_eff = cfg.use_intrinsic ? cfg.alpha : 0.0;

  WorldModel wm(cfg.dims, hash_mix(cfg.seed, 0x10));
  ActorCritic ac(cfg.dims.state_dim(), cfg.dims.hidden, kNumActions, hash_mix(cfg.seed, 0x11));
  ac.entropy_coef = cfg.entropy_coef;
  Adam wm_opt(wm.param_list(), cfg.wm_lr, cfg.grad_clip);
  std::vector<Tensor> actor_ps, critic_ps;
  for (auto& [n, t] : ac.actor_params()) actor_ps.push_back(t);
  for (auto& [n, t] : ac.critic_params()) critic_ps.push_back(t);
  Adam actor_opt(actor_ps, cfg.ac_lr, cfg.grad_clip);
  Adam critic_opt(critic_ps, cfg.ac_lr, cfg.grad_clip);

  ReplayBuffer buffer(cfg.replay_capacity);
  ThresholdTracker tracker;

  Rng rng_collect(hash_mix(cfg.seed, 0x20));
  Rng rng_candidate(hash_mix(cfg.seed, 0x21));
  Rng rng_train(hash_mix(cfg.seed, 0x22));
  Rng rng_imag(hash_mix(cfg.seed, 0x23));

  std::ofstream metrics(cfg.out_dir + "/metrics.csv");
  metrics << kMetricsHeader;

  std::unique_ptr<EpisodeLogWriter> ep_log;
  if (cfg.write_episode_log) ep_log = std::make_unique<EpisodeLogWriter>(cfg.out_dir + "/episodes.lsrb");

  TrainResult result;
  long long env_steps = 0;
  long long replay_debt = 0;
  long long next_checkpoint = cfg.checkpoint_every;
  int episode_idx = 0;
  const int batch_steps = cfg.batch_b * cfg.batch_t;

  // success bookkeeping for quartile windows
  struct EpRow {
    long long end_step;
    int success;
  };
  std::vector<EpRow> ep_rows;
  std::vector<double> wm_losses;
  std::vector<double> jumps_per_jumping;

  auto run_update = [&]() {
    auto maybe = buffer.sample_batch(cfg.batch_b, cfg.batch_t, rng_train);
    if (!maybe) return;
    SeqBatch& batch = *maybe;
    ShortUnroll unroll;
    auto [loss, bd] = total_loss(wm, batch, cfg.weights, rng_train, &unroll);
    if (!std::isfinite(bd.total))
      throw DivergenceError("world-model loss non-finite at env step " + std::to_string(env_steps));
    wm_opt.zero_grad();
    backward(loss);
    wm_opt.step();

    // imagination starts: valid posterior latents, sampled uniformly
    std::vector<std::pair<int, int>> valid;
    for (int b = 0; b < batch.B; ++b)
      for (int t = 0; t < batch.T; ++t)
        if (batch.valid[static_cast<size_t>(b) * batch.T + t]) valid.emplace_back(b, t);
    std::vector<LatentState> starts;
    for (int i = 0; i < cfg.imag_starts && !valid.empty(); ++i) {
      auto [b, t] = valid[rng_imag.uniform_int(static_cast<int>(valid.size()))];
      LatentState s;
      const int H = cfg.dims.h, Z = cfg.dims.z_flat();
      s.h.assign(unroll.h[t].data().begin() + static_cast<size_t>(b) * H,
                 unroll.h[t].data().begin() + static_cast<size_t>(b + 1) * H);
      s.z.assign(unroll.z[t].data().begin() + static_cast<size_t>(b) * Z,
                 unroll.z[t].data().begin() + static_cast<size_t>(b + 1) * Z);
      starts.push_back(std::move(s));
    }
    if (starts.empty()) return;

    std::vector<Trajectory> trajs =
        cfg.imagination == ImaginationMode::series
            ? imagine_series(wm, ac, starts, cfg.hp, cfg.use_long_term, rng_imag)
            : imagine_parallel(wm, ac, starts, cfg.hp, cfg.use_long_term, cfg.parallel_depth_cap,
                               rng_imag);
    std::vector<std::vector<double>> returns;
    returns.reserve(trajs.size());
    for (const auto& tr : trajs) returns.push_back(lambda_returns(tr, cfg.hp, ac));

    Tensor aloss = actor_loss(ac, trajs, returns);
    actor_opt.zero_grad();
    backward(aloss);
    actor_opt.step();

    Tensor closs = critic_loss(ac, trajs, returns);
    critic_opt.zero_grad();
    backward(closs);
    critic_opt.step();

    ImagStats st = imag_stats(trajs);
    wm_losses.push_back(bd.total);
    if (st.jump_frequency > 0.0) jumps_per_jumping.push_back(st.mean_jumps_per_jumping);

    metrics << "update," << env_steps << ",,,,,,," << fmt(bd.total) << "," << fmt(bd.dyn) << ","
            << fmt(bd.enc) << "," << fmt(bd.dec) << "," << fmt(bd.pred) << "," << fmt(bd.ldyn) << ","
            << fmt(bd.lenc) << "," << fmt(bd.ldec) << "," << fmt(bd.lpred) << "," << fmt(bd.lint)
            << "," << bd.long_count << "," << fmt(closs.item()) << "," << fmt(aloss.item()) << ","
            << fmt(st.jump_frequency) << "," << fmt(st.mean_delta) << ","
            << fmt(st.mean_jumps_per_jumping) << "\n";
    metrics.flush();
  };

  while (env_steps < cfg.total_env_steps) {
    uint64_t episode_seed = hash_mix(cfg.seed, static_cast<uint64_t>(episode_idx));
    auto [state, obs] = reset(cfg.env, episode_seed);
    AgentLatent lat;
    latent_reset(lat, cfg.dims);
    buffer.begin_episode();

    std::deque<double> frame_scores;
    double r_env_arrival = 0.0;
    int cont_flag = 1;
    double episode_return = 0.0;
    double p_jump_sum = 0.0;
    int episode_steps = 0;  // env.step calls
    int recorded = 0;
    bool success = false;

    while (true) {
      AffordanceMap map = afford_fn(obs);
      double r_intr = intrinsic_reward(map, gauss);
      frame_scores.push_back(frame_targetness(obs, instr));
      if (frame_scores.size() > Clip::kFrames) frame_scores.pop_front();
      double r_clip = clip_reward_from_scores(frame_scores);
      JumpStats js = jump_stats(map);
      tracker.update(js.p_jump);
      int j_flag = tracker.jump_flag(js.p_jump) ? 1 : 0;

      std::vector<float> obs_ds = downsample_f32(obs, cfg.dims.obs_ds);
      std::vector<float> map_ds = downsample_map_f32(map, cfg.dims.obs_ds);
      latent_step(wm, lat, obs_ds, map_ds, rng_collect);

      double r = composite_reward(r_env_arrival, r_clip, r_intr, alpha_eff);
      int action = static_cast<int>(Action::NoOp);
      if (cont_flag == 1) {
        action = env_steps < cfg.warmup_steps ? rng_collect.uniform_int(kNumActions)
                                              : ac.act_sample(to_latent(lat), rng_collect);
      }

      ShortTuple st;
      st.obs_ds = obs_ds;
      st.map_ds = map_ds;
      st.action = action;
      st.reward = r;
      st.cont = cont_flag;
      st.jump = j_flag;
      st.delta = 1.0;
      st.G = r;
      st.r_env = r_env_arrival;
      st.r_clip = r_clip;
      st.r_intr = r_intr;
      st.p_jump = js.p_jump;

      std::function<LongTuple()> factory;
      if (j_flag && cfg.use_long_term && cont_flag == 1) {
        factory = [&]() {
          return make_long_candidate(obs, map, to_latent(lat), wm, ac, afford_fn, instr, gauss,
                                     alpha_eff, rng_candidate);
        };
      }
      buffer.record_step(st, factory);
      if (ep_log) ep_log->step(st);
      std::vector<LongTuple> finalized = buffer.finalize_pending(r_intr, cfg.hp.gamma);
      if (ep_log)
        for (const auto& lt : finalized) ep_log->long_finalized(lt);

      episode_return += r;
      p_jump_sum += js.p_jump;
      recorded += 1;
      if (r_env_arrival > 0.5) success = true;

      if (cont_flag == 0) break;
      if (env_steps >= cfg.total_env_steps) break;

      auto [next_state, res] = step(state, static_cast<Action>(action));
      state = next_state;
      obs = res.obs;
      r_env_arrival = res.r_env;
      cont_flag = res.cont;
      lat.prev_action = action;
      env_steps += 1;
      episode_steps += 1;

      replay_debt += cfg.train_ratio;
      if (env_steps >= cfg.warmup_steps) {
        while (replay_debt >= batch_steps) {
          run_update();
          replay_debt -= batch_steps;
        }
      }
      if (env_steps >= next_checkpoint) {
        save_checkpoint(cfg.out_dir + "/checkpoint_" + std::to_string(env_steps) + ".lsnn",
                        checkpoint_sections(wm, ac),
                        {{"tracker/state",
                          {static_cast<double>(tracker.count()), tracker.mean(), tracker.m2()}},
                         {"ac/return_scale", {ac.return_scale}}});
        next_checkpoint += cfg.checkpoint_every;
      }
    }

    buffer.end_episode();
    if (ep_log) ep_log->episode_end();
    episode_idx += 1;
    ep_rows.push_back(EpRow{env_steps, success ? 1 : 0});
    double p_thresh = tracker.threshold().value_or(0.0);
    metrics << "episode," << env_steps << "," << episode_idx << "," << fmt(episode_return) << ","
            << (success ? 1 : 0) << "," << episode_steps << "," << fmt(p_jump_sum / recorded) << ","
            << fmt(p_thresh) << ",,,,,,,,,,,,,,,," << "\n";
    metrics.flush();
    if (env_steps >= cfg.total_env_steps) break;
  }

  result.checkpoint_path = cfg.out_dir + "/checkpoint_final.lsnn";
  save_checkpoint(result.checkpoint_path, checkpoint_sections(wm, ac),
                  {{"tracker/state",
                    {static_cast<double>(tracker.count()), tracker.mean(), tracker.m2()}},
                   {"ac/return_scale", {ac.return_scale}}});
  result.metrics_path = cfg.out_dir + "/metrics.csv";
  result.env_steps = env_steps;
  result.episodes = episode_idx;

  auto window_rate = [&](double lo_frac, double hi_frac) {
    long long lo = static_cast<long long>(lo_frac * cfg.total_env_steps);
    long long hi = static_cast<long long>(hi_frac * cfg.total_env_steps);
    int n = 0, s = 0;
    for (const auto& row : ep_rows)
      if (row.end_step > lo && row.end_step <= hi) {
        ++n;
        s += row.success;
      }
    return n > 0 ? static_cast<double>(s) / n : 0.0;
  };
  result.early_success_rate = window_rate(0.0, 0.25);
  result.final_success_rate = window_rate(0.75, 1.0);

  auto mean_window = [](const std::vector<double>& xs, bool first) {
    if (xs.empty()) return 0.0;
    size_t q = std::max<size_t>(1, xs.size() / 4);
    double s = 0.0;
    if (first) {
      for (size_t i = 0; i < q; ++i) s += xs[i];
    } else {
      for (size_t i = xs.size() - q; i < xs.size(); ++i) s += xs[i];
    }
    return s / static_cast<double>(q);
  };
  result.wm_loss_first_quartile = mean_window(wm_losses, true);
  result.wm_loss_last_quartile = mean_window(wm_losses, false);
  result.mean_jumps_per_jumping = mean_window(jumps_per_jumping, false);

  std::ofstream summary(cfg.out_dir + "/summary.json");
  summary << "{\n"
          << "  \"env_steps\": " << result.env_steps << ",\n"
          << "  \"episodes\": " << result.episodes << ",\n"
          << "  \"early_success_rate\": " << fmt(result.early_success_rate) << ",\n"
          << "  \"final_success_rate\": " << fmt(result.final_success_rate) << ",\n"
          << "  \"wm_loss_first_quartile\": " << fmt(result.wm_loss_first_quartile) << ",\n"
          << "  \"wm_loss_last_quartile\": " << fmt(result.wm_loss_last_quartile) << ",\n"
          << "  \"mean_jumps_per_jumping\": " << fmt(result.mean_jumps_per_jumping) << ",\n"
          << "  \"checkpoint\": \"" << result.checkpoint_path << "\"\n"
          << "}\n";
  return result;
}

EvalResult evaluate(const std::string& checkpoint_path, const RunConfig& cfg, int n_episodes,
                    uint64_t eval_seed) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  Instruction instr{"navigate", cfg.env.target_class};
  GaussianMatrix gauss = gaussian_matrix(cfg.env.obs_size, cfg.env.obs_size, cfg.sigma_x, cfg.sigma_y);
  std::shared_ptr<ApproxModel> approx;
  auto afford_fn = make_afford_fn(cfg, instr, approx);

  WorldModel wm(cfg.dims, 0);
  ActorCritic ac(cfg.dims.state_dim(), cfg.dims.hidden, kNumActions, 0);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  restore_params(ck, checkpoint_sections(wm, ac));

  EvalResult res;
  res.report_path = cfg.out_dir + "/eval_report.csv";
  std::ofstream report(res.report_path);
  report << "episode,success,steps\n";

  Rng rng_latent(hash_mix(eval_seed, 0xE0));
  int successes = 0;
  long long success_steps = 0;
  for (int e = 0; e < n_episodes; ++e) {
    // disjoint stream tag from training episode seeds
    uint64_t episode_seed = hash_mix(0xEA15EEDULL ^ eval_seed, static_cast<uint64_t>(e));
    auto [state, obs] = reset(cfg.env, episode_seed);
    AgentLatent lat;
    latent_reset(lat, cfg.dims);
    int steps = 0;
    bool success = false;
    while (true) {
      AffordanceMap map = afford_fn(obs);
      std::vector<float> obs_ds = downsample_f32(obs, cfg.dims.obs_ds);
      std::vector<float> map_ds = downsample_map_f32(map, cfg.dims.obs_ds);
      latent_step(wm, lat, obs_ds, map_ds, rng_latent);
      int action = ac.act_greedy(to_latent(lat));
      auto [next_state, r] = step(state, static_cast<Action>(action));
      state = next_state;
      obs = r.obs;
      steps += 1;
      lat.prev_action = action;
      if (r.r_env > 0.5) success = true;
      if (r.cont == 0) break;
    }
    report << e << "," << (success ? 1 : 0) << "," << steps << "\n";
    if (success) {
      ++successes;
      success_steps += steps;
    }
  }
  res.episodes = n_episodes;
  res.success_rate = n_episodes > 0 ? static_cast<double>(successes) / n_episodes : 0.0;
  res.mean_steps_to_success = successes > 0 ? static_cast<double>(success_steps) / successes : 0.0;
  return res;
}

AblateResult ablate(const RunConfig& base, int n_seeds) {
  AblateResult out;
  fs::create_directories(base.out_dir);
  struct Arm {
    const char* name;
    bool long_term, intrinsic;
    ImaginationMode mode;
  };
  const Arm arms[] = {
      {"full", true, true, ImaginationMode::series},
      {"no_long_term", false, true, ImaginationMode::series},
      {"no_intrinsic", true, false, ImaginationMode::series},
      {"parallel", true, true, ImaginationMode::parallel},
  };

  std::ofstream summary(base.out_dir + "/ablate_summary.csv");
  summary << "arm,seed,final_success_rate,early_success_rate,episodes,mean_jumps_per_jumping\n";

  for (const Arm& arm : arms) {
    for (int k = 0; k < n_seeds; ++k) {
      RunConfig cfg = base;
      cfg.seed = base.seed + static_cast<uint64_t>(k);
      cfg.env.seed = base.env.seed + static_cast<uint64_t>(k);
      cfg.use_long_term = arm.long_term;
      cfg.use_intrinsic = arm.intrinsic;
      cfg.imagination = arm.mode;
      cfg.out_dir = base.out_dir + "/" + arm.name + "_seed" + std::to_string(k);
      TrainResult r = train(cfg);
      summary << arm.name << "," << cfg.seed << "," << fmt(r.final_success_rate) << ","
              << fmt(r.early_success_rate) << "," << r.episodes << ","
              << fmt(r.mean_jumps_per_jumping) << "\n";
      summary.flush();
      out.arms.push_back(AblateArmResult{arm.name, cfg.seed, std::move(r)});
    }
  }
  out.summary_path = base.out_dir + "/ablate_summary.csv";
  return out;
}

void inspect(const RunConfig& cfg, uint64_t episode_seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Instruction instr{"navigate", cfg.env.target_class};
  auto [state, obs] = reset(cfg.env, episode_seed);
  // walk a few steps so the view is not always the spawn cell
  Rng rng(episode_seed);
  for (int i = 0; i < 8; ++i) {
    auto [s2, r] = step(state, static_cast<Action>(rng.uniform_int(3)));
    state = s2;
    obs = r.obs;
    if (r.cont == 0) break;
  }
  AffordanceMap map = compute_affordance_map(obs, instr);
  write_ppm(obs, out_dir + "/observation.ppm");
  write_pgm(map.v, map.w, map.h, out_dir + "/affordance.pgm");
  write_map_bin(map.v, static_cast<uint32_t>(map.w), static_cast<uint32_t>(map.h),
                out_dir + "/affordance.bin");

  // side-by-side: observation | normalized map
  Image side(obs.w * 2, obs.h, 3);
  double vmax = 1e-12;
  for (double v : map.v) vmax = std::max(vmax, v);
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x) {
      for (int c = 0; c < 3; ++c) side.at(x, y, c) = obs.at(x, y, c);
      double g = map.at(x, y) / vmax;
      side.at(obs.w + x, y, 0) = g;
      side.at(obs.w + x, y, 1) = g;
      side.at(obs.w + x, y, 2) = g;
    }
  write_ppm(side, out_dir + "/side_by_side.ppm");
}

}  // namespace jumpy
