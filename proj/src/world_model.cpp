#include "jumpy/world_model.hpp"

#include <cmath>
#include <stdexcept>

namespace jumpy {

WorldModel::WorldModel(const WmDims& d, uint64_t seed) : dims(d) {
  Rng rng(seed);
  short_gru = GruCell(d.z_flat() + d.action_dim, d.h, rng);
  long_gru = GruCell(d.z_flat(), d.h, rng);
  encoder = Mlp({d.h + d.obs_dim() + d.map_dim(), d.hidden, d.z_flat()}, rng);
  prior = Mlp({d.h, d.hidden, d.z_flat()}, rng);
  decoder = Mlp({d.state_dim(), d.hidden, d.obs_dim() + d.map_dim()}, rng);
  rc_head = Mlp({d.state_dim(), d.hidden, 2}, rng);
  jump_head = Mlp({d.state_dim(), d.hidden, 1}, rng);
  interval_head = Mlp({2 * d.state_dim(), d.hidden, 2}, rng);
}

NamedParams WorldModel::named_params() const {
  NamedParams np;
  short_gru.collect(np, "wm/short_gru");
  long_gru.collect(np, "wm/long_gru");
  encoder.collect(np, "wm/encoder");
  prior.collect(np, "wm/prior");
  decoder.collect(np, "wm/decoder");
  rc_head.collect(np, "wm/rc_head");
  jump_head.collect(np, "wm/jump_head");
  interval_head.collect(np, "wm/interval_head");
  return np;
}

std::vector<Tensor> WorldModel::param_list() const {
  std::vector<Tensor> out;
  for (auto& [n, t] : named_params()) out.push_back(t);
  return out;
}

NamedParams WorldModel::encoder_params() const {
  NamedParams np;
  encoder.collect(np, "wm/encoder");
  return np;
}

NamedParams WorldModel::prior_params() const {
  NamedParams np;
  prior.collect(np, "wm/prior");
  return np;
}

Tensor WorldModel::short_transition(const Tensor& h, const Tensor& z, const Tensor& action_onehot) const {
  return short_gru(h, concat_cols(std::vector<Tensor>{z, action_onehot}));
}

Tensor WorldModel::long_transition(const Tensor& h, const Tensor& z) const { return long_gru(h, z); }

CategoricalDist WorldModel::encode(const Tensor& h, const Tensor& obs_ds, const Tensor& map_ds) const {
  Tensor logits = encoder(concat_cols(std::vector<Tensor>{h, obs_ds, map_ds}));
  return CategoricalDist{logits, dims.z_cols, dims.unimix};
}

CategoricalDist WorldModel::dynamics_prior(const Tensor& h) const {
  return CategoricalDist{prior(h), dims.z_cols, dims.unimix};
}

WorldModel::HeadsOut WorldModel::predict_heads(const Tensor& h, const Tensor& z) const {
  Tensor s = concat_cols(std::vector<Tensor>{h, z});
  Tensor rc = rc_head(s);
  return HeadsOut{slice_cols(rc, 0, 1), slice_cols(rc, 1, 2), jump_head(s)};
}

std::pair<Tensor, Tensor> WorldModel::decode(const Tensor& h, const Tensor& z) const {
  Tensor out = decoder(concat_cols(std::vector<Tensor>{h, z}));
  return {slice_cols(out, 0, dims.obs_dim()), slice_cols(out, dims.obs_dim(), dims.obs_dim() + dims.map_dim())};
}

std::pair<Tensor, Tensor> WorldModel::interval_raw(const Tensor& h_pre, const Tensor& z_pre,
                                                   const Tensor& h_jump, const Tensor& z_jump) const {
  Tensor out = interval_head(concat_cols(std::vector<Tensor>{h_pre, z_pre, h_jump, z_jump}));
  return {slice_cols(out, 0, 1), slice_cols(out, 1, 2)};
}

long WorldModel::interval_steps(double delta_raw) {
  return std::max(1L, std::lround(symexp(delta_raw)));
}

namespace {

std::vector<double> slice_step(const std::vector<double>& flat, int b_rows, int t, int T, int width) {
  // gather column t of a [B][T][width] array into [B*width]
  std::vector<double> out(static_cast<size_t>(b_rows) * width);
  for (int b = 0; b < b_rows; ++b)
    std::copy_n(flat.begin() + ((static_cast<size_t>(b) * T + t) * width), width,
                out.begin() + static_cast<size_t>(b) * width);
  return out;
}

}  // namespace

ShortUnroll loss_short(const WorldModel& wm, const SeqBatch& batch, const LossWeights& w, Rng& rng) {
  const WmDims& d = wm.dims;
  const int B = batch.B, T = batch.T;
  ShortUnroll out;

  Tensor h = Tensor::constant({B, d.h}, std::vector<double>(static_cast<size_t>(B) * d.h, 0.0));
  Tensor z = Tensor::constant({B, d.z_flat()}, std::vector<double>(static_cast<size_t>(B) * d.z_flat(), 0.0));
  std::vector<double> prev_action(static_cast<size_t>(B) * d.action_dim, 0.0);

  Tensor acc_dyn, acc_enc, acc_dec, acc_pred;
  bool first = true;

  for (int t = 0; t < T; ++t) {
    Tensor a_prev = Tensor::constant({B, d.action_dim}, prev_action);
    h = wm.short_transition(h, z, a_prev);

    Tensor obs_t = Tensor::constant({B, d.obs_dim()}, slice_step(batch.obs, B, t, T, d.obs_dim()));
    Tensor map_t = Tensor::constant({B, d.map_dim()}, slice_step(batch.map, B, t, T, d.map_dim()));
    CategoricalDist post = wm.encode(h, obs_t, map_t);
    CategoricalDist pri = wm.dynamics_prior(h);

    Tensor post_p = post.probs();
    Tensor pri_p = pri.probs();
    Tensor kl_dyn = kl_per_sample(stop_gradient(post_p), pri_p, d.z_cols, d.z_rows);
    Tensor kl_enc = kl_per_sample(post_p, stop_gradient(pri_p), d.z_cols, d.z_rows);
    Tensor term_dyn = clamp_min_op(kl_dyn, 1.0);
    Tensor term_enc = clamp_min_op(kl_enc, 1.0);

    z = sample_straight_through(post, rng);

    auto [obs_rec, map_rec] = wm.decode(h, z);
    Tensor dec = add(half_sse_rows(obs_rec, obs_t.data()), half_sse_rows(map_rec, map_t.data()));

    auto heads = wm.predict_heads(h, z);
    std::vector<double> r_sym(B), c_t(B), j_t(B), mask(B);
    for (int b = 0; b < B; ++b) {
      size_t i = static_cast<size_t>(b) * T + t;
      r_sym[b] = symlog(batch.reward[i]);
      c_t[b] = batch.cont[i];
      j_t[b] = batch.jump[i];
      mask[b] = batch.valid[i] ? 1.0 : 0.0;
    }
    Tensor pred = add(add(half_sse_rows(heads.r_raw, r_sym), bce_logits_rows(heads.c_logit, c_t)),
                      bce_logits_rows(heads.j_logit, j_t));

    Tensor mask_t = Tensor::constant({B, 1}, mask);
    Tensor sd = sum_all(mul(mask_t, term_dyn));
    Tensor se = sum_all(mul(mask_t, term_enc));
    Tensor sc = sum_all(mul(mask_t, dec));
    Tensor sp = sum_all(mul(mask_t, pred));
    if (first) {
      acc_dyn = sd;
      acc_enc = se;
      acc_dec = sc;
      acc_pred = sp;
      first = false;
    } else {
      acc_dyn = add(acc_dyn, sd);
      acc_enc = add(acc_enc, se);
      acc_dec = add(acc_dec, sc);
      acc_pred = add(acc_pred, sp);
    }

    for (int b = 0; b < B; ++b) {
      if (!batch.valid[static_cast<size_t>(b) * T + t]) continue;
      out.bd.kl_dyn_raw.push_back(kl_dyn.data()[b]);
      out.bd.kl_dyn_term.push_back(term_dyn.data()[b]);
      out.bd.kl_enc_raw.push_back(kl_enc.data()[b]);
      out.bd.kl_enc_term.push_back(term_enc.data()[b]);
    }

    out.h.push_back(h);
    out.z.push_back(z);
    for (int b = 0; b < B; ++b) {
      size_t i = static_cast<size_t>(b) * T + t;
      int a = batch.action[i];
      for (int k = 0; k < d.action_dim; ++k)
        prev_action[static_cast<size_t>(b) * d.action_dim + k] = (k == a) ? 1.0 : 0.0;
    }
  }

  const double inv_b = 1.0 / B;
  out.bd.dyn = acc_dyn.item() * inv_b;
  out.bd.enc = acc_enc.item() * inv_b;
  out.bd.dec = acc_dec.item() * inv_b;
  out.bd.pred = acc_pred.item() * inv_b;
  Tensor weighted = add(add(scale(acc_dyn, w.dyn * inv_b), scale(acc_enc, w.rep * inv_b)),
                        scale(add(acc_dec, acc_pred), w.pred * inv_b));
  out.loss = weighted;
  out.bd.total = weighted.item();
  return out;
}

std::pair<Tensor, WmLossBreakdown> loss_long(const WorldModel& wm, std::span<const LongPair> pairs,
                                             const LossWeights& w, int batch_rows, Rng& rng) {
  const WmDims& d = wm.dims;
  WmLossBreakdown bd;
  bd.long_count = static_cast<int>(pairs.size());
  Tensor acc_dyn, acc_enc, acc_dec, acc_pred, acc_int;
  bool first = true;

  for (const LongPair& pr : pairs) {
    const auto& it = *pr.item;
    Tensor hj = wm.long_transition(pr.h_pre, pr.z_pre);
    Tensor obs_c = Tensor::constant({1, d.obs_dim()}, it.obs);
    Tensor map_c = Tensor::constant({1, d.map_dim()}, it.map);
    CategoricalDist post = wm.encode(hj, obs_c, map_c);
    CategoricalDist pri = wm.dynamics_prior(hj);

    Tensor post_p = post.probs();
    Tensor pri_p = pri.probs();
    Tensor term_dyn = clamp_min_op(kl_per_sample(stop_gradient(post_p), pri_p, d.z_cols, d.z_rows), 1.0);
    Tensor term_enc = clamp_min_op(kl_per_sample(post_p, stop_gradient(pri_p), d.z_cols, d.z_rows), 1.0);

    Tensor zj = sample_straight_through(post, rng);
    auto [obs_rec, map_rec] = wm.decode(hj, zj);
    Tensor dec = add(half_sse_rows(obs_rec, it.obs), half_sse_rows(map_rec, it.map));

    auto heads = wm.predict_heads(hj, zj);
    Tensor pred = add(add(half_sse_rows(heads.r_raw, {symlog(it.reward)}),
                          bce_logits_rows(heads.c_logit, {it.cont})),
                      bce_logits_rows(heads.j_logit, {it.jump}));

    auto [draw, graw] = wm.interval_raw(pr.h_pre, pr.z_pre, hj, zj);
    Tensor intv = add(half_sse_rows(draw, {symlog(it.delta)}), half_sse_rows(graw, {symlog(it.G)}));

    if (first) {
      acc_dyn = term_dyn;
      acc_enc = term_enc;
      acc_dec = dec;
      acc_pred = pred;
      acc_int = intv;
      first = false;
    } else {
      acc_dyn = add(acc_dyn, term_dyn);
      acc_enc = add(acc_enc, term_enc);
      acc_dec = add(acc_dec, dec);
      acc_pred = add(acc_pred, pred);
      acc_int = add(acc_int, intv);
    }
  }

  if (first) {
    Tensor zero = Tensor::scalar(0.0);
    return {zero, bd};
  }
  const double inv_b = 1.0 / batch_rows;
  bd.ldyn = sum_all(acc_dyn).item() * inv_b;
  bd.lenc = sum_all(acc_enc).item() * inv_b;
  bd.ldec = sum_all(acc_dec).item() * inv_b;
  bd.lpred = sum_all(acc_pred).item() * inv_b;
  bd.lint = sum_all(acc_int).item() * inv_b;
  Tensor weighted =
      add(add(scale(sum_all(acc_dyn), w.dyn * inv_b), scale(sum_all(acc_enc), w.rep * inv_b)),
          scale(add(sum_all(acc_dec), add(sum_all(acc_pred), sum_all(acc_int))), w.pred * inv_b));
  bd.total = weighted.item();
  return {weighted, bd};
}

std::pair<Tensor, WmLossBreakdown> total_loss(const WorldModel& wm, const SeqBatch& batch,
                                              const LossWeights& w, Rng& rng, ShortUnroll* unroll_out) {
  ShortUnroll su = loss_short(wm, batch, w, rng);

  std::vector<LongPair> pairs;
  pairs.reserve(batch.longs.size());
  for (const auto& it : batch.longs) {
    if (it.offset < 0 || it.offset >= batch.T) throw std::invalid_argument("total_loss: bad long offset");
    pairs.push_back(LongPair{take_row(su.h[it.offset], it.row), take_row(su.z[it.offset], it.row), &it});
  }
  auto [long_t, long_bd] = loss_long(wm, pairs, w, batch.B, rng);

  WmLossBreakdown bd = su.bd;
  bd.ldyn = long_bd.ldyn;
  bd.lenc = long_bd.lenc;
  bd.ldec = long_bd.ldec;
  bd.lpred = long_bd.lpred;
  bd.lint = long_bd.lint;
  bd.long_count = long_bd.long_count;

  Tensor total = pairs.empty() ? su.loss : add(su.loss, scale(long_t, w.long_));
  bd.total = total.item();
  if (unroll_out) *unroll_out = su;
  return {total, bd};
}

}  // namespace jumpy
