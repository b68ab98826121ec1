#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "tjepa/conditioning.hpp"
#include "tjepa/params.hpp"
#include "tjepa/tape.hpp"

namespace tjepa {

// Masked-token transformer forecasting future latent tokens from past ones.
struct PredictorConfig {
  int d_backbone = 32;  // D
  int d_p = 16;
  int blocks = 4;
  int heads = 4;
  int t_past = 4;
  int t_fut = 4;
  int patches = 16;  // P
  int n_mask_tokens = 2;
  double rope_base = 10000.0;
  CondMode mode = CondMode::None;

  int window_tokens() const { return (t_past + t_fut) * patches; }
  void validate() const {
    if (d_p % heads != 0) throw ConfigError("predictor: heads must divide d_p");
    if (d_p % 2 != 0 || (d_p / heads) % 2 != 0) {
      throw ConfigError("predictor: rotary encoding needs an even head dim");
    }
    if (t_past < 1 || t_fut < 1 || patches < 1 || blocks < 1 || n_mask_tokens < 1) {
      throw ConfigError("predictor: all extents must be positive");
    }
  }
};

template <typename T>
void init_predictor_params(ParamSet<T>& ps, const PredictorConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int D = cfg.d_backbone, P = cfg.d_p;
  auto mat = [&](const std::string& n, int in, int out) { ps.add(n, xavier_init<T>(seed, n, in, out)); };
  auto vec0 = [&](const std::string& n, int d) { ps.add(n, Arr<T>::zeros(Shape{d})); };
  auto vec1 = [&](const std::string& n, int d) { ps.add(n, Arr<T>::full(Shape{d}, T(1))); };

  mat("predictor.in_proj.w", D, P);
  vec0("predictor.in_proj.b", P);
  ps.add("predictor.mask_tokens",
         normal_init<T>(seed, "predictor.mask_tokens", Shape{cfg.n_mask_tokens, P}, T(0.02)));
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string pre = "predictor.blocks." + std::to_string(i) + ".";
    vec1(pre + "ln1.g", P);
    vec0(pre + "ln1.b", P);
    vec1(pre + "ln2.g", P);
    vec0(pre + "ln2.b", P);
    mat(pre + "attn.wq", P, P);
    vec0(pre + "attn.bq", P);
    mat(pre + "attn.wk", P, P);
    vec0(pre + "attn.bk", P);
    mat(pre + "attn.wv", P, P);
    vec0(pre + "attn.bv", P);
    mat(pre + "attn.wo", P, P);
    vec0(pre + "attn.bo", P);
    mat(pre + "ffn.w1", P, 4 * P);
    vec0(pre + "ffn.b1", 4 * P);
    mat(pre + "ffn.w2", 4 * P, P);
    vec0(pre + "ffn.b2", P);
    if (cfg.mode == CondMode::CrossAttention) {
      vec1(pre + "xattn.ln.g", P);
      vec0(pre + "xattn.ln.b", P);
      mat(pre + "xattn.wq", P, P);
      vec0(pre + "xattn.bq", P);
      mat(pre + "xattn.wk", P, P);
      vec0(pre + "xattn.bk", P);
      mat(pre + "xattn.wv", P, P);
      vec0(pre + "xattn.bv", P);
      // zero output projection: the sublayer starts as an exact no-op
      ps.add(pre + "xattn.wo", Arr<T>::zeros(Shape{P, P}));
      vec0(pre + "xattn.bo", P);
    }
  }
  mat("predictor.out_proj.w", P, D);
  vec0("predictor.out_proj.b", D);
}

// gamma (*) z + beta, broadcasting over z's channel (last) axis. gamma/beta
// may be [D] or [B, D] against z [..., D] / [B, S, D].
template <typename T>
int film_modulate(Tape<T>& t, int z, int gamma, int beta) {
  const Shape& zs = t.value(z).shape;
  const Shape& gs = t.value(gamma).shape;
  const Shape& bs = t.value(beta).shape;
  const int D = zs.back();
  if (gs.back() != D || bs.back() != D) {
    throw ShapeError("film channel mismatch: z " + shape_str(zs) + ", gamma " + shape_str(gs) +
                     ", beta " + shape_str(bs));
  }
  int g = gamma, b = beta;
  if (gs.size() == 2 && zs.size() == 3) {
    if (gs[0] != zs[0]) {
      throw ShapeError("film batch mismatch: z " + shape_str(zs) + ", gamma " + shape_str(gs));
    }
    g = t.broadcast_to(t.reshape(gamma, Shape{zs[0], 1, D}), zs);
    b = t.broadcast_to(t.reshape(beta, Shape{zs[0], 1, D}), zs);
  } else if (gs != bs || (gs.size() != 1 && gs != zs)) {
    throw ShapeError("film parameter shapes unsupported: gamma " + shape_str(gs) + ", beta " +
                     shape_str(bs) + " against z " + shape_str(zs));
  }
  return t.add(t.mul(z, g), b);
}

namespace detail {

template <typename T>
int pred_ln(Tape<T>& t, const Bound<T>& p, const std::string& pre, int x, const CondIds* signal,
            int block_idx) {
  const int y = t.layer_norm(x);
  if (signal && signal->mode == CondMode::AdaLN) {
    const auto& [gamma, beta] = signal->gamma_beta[static_cast<size_t>(block_idx)];
    return film_modulate(t, y, gamma, beta);
  }
  return t.add(t.mul(y, p(pre + ".g")), p(pre + ".b"));
}

template <typename T>
int multihead_attention(Tape<T>& t, const Bound<T>& p, const std::string& pre, int q_src,
                        int kv_src, int heads, const std::vector<int>* q_pos,
                        const std::vector<int>* k_pos, double rope_base) {
  const Shape& qs = t.value(q_src).shape;
  const Shape& ks = t.value(kv_src).shape;
  const int B = qs[0], Sq = qs[1], D = qs[2], Sk = ks[1], dh = D / heads;
  auto heads_split = [&](int x, int S) {
    return t.transpose(t.reshape(x, Shape{B, S, heads, dh}), {0, 2, 1, 3});
  };
  int q = heads_split(t.affine(q_src, p(pre + ".wq"), p(pre + ".bq")), Sq);
  int k = heads_split(t.affine(kv_src, p(pre + ".wk"), p(pre + ".bk")), Sk);
  const int v = heads_split(t.affine(kv_src, p(pre + ".wv"), p(pre + ".bv")), Sk);
  if (q_pos) q = t.rope(q, *q_pos, rope_base);
  if (k_pos) k = t.rope(k, *k_pos, rope_base);
  const int att = scaled_dot_attention(t, q, k, v);
  const int merged = t.reshape(t.transpose(att, {0, 2, 1, 3}), Shape{B, Sq, D});
  return t.affine(merged, p(pre + ".wo"), p(pre + ".bo"));
}

}  // namespace detail

// One pre-norm transformer block with the selected conditioning operator.
template <typename T>
int predictor_block(Tape<T>& t, const Bound<T>& p, const PredictorConfig& cfg, int block_idx,
                    int z, const CondIds* signal, const std::vector<int>& positions) {
  const std::string pre = "predictor.blocks." + std::to_string(block_idx) + ".";
  if (signal && signal->mode == CondMode::Film) {
    const auto& [gamma, beta] = signal->gamma_beta[static_cast<size_t>(block_idx)];
    z = film_modulate(t, z, gamma, beta);
  }
  const int n1 = detail::pred_ln(t, p, pre + "ln1", z, signal, block_idx);
  int h = t.add(z, detail::multihead_attention(t, p, pre + "attn", n1, n1, cfg.heads, &positions,
                                               &positions, cfg.rope_base));
  if (signal && signal->mode == CondMode::CrossAttention) {
    const int nc = t.add(t.mul(t.layer_norm(h), p(pre + "xattn.ln.g")), p(pre + "xattn.ln.b"));
    h = t.add(h, detail::multihead_attention(t, p, pre + "xattn", nc, signal->context, cfg.heads,
                                             nullptr, nullptr, cfg.rope_base));
  }
  const int n2 = detail::pred_ln(t, p, pre + "ln2", h, signal, block_idx);
  const int f1 = t.gelu(t.affine(n2, p(pre + "ffn.w1"), p(pre + "ffn.b1")));
  return t.add(h, t.affine(f1, p(pre + "ffn.w2"), p(pre + "ffn.b2")));
}

// Core forecast: past tokens plus positioned mask tokens through the block
// stack; future positions projected back to the backbone dimension.
// past: [B, T_p, P, D] -> [B, T_f, P, D].
template <typename T>
int predict_future(Tape<T>& t, const Bound<T>& p, const PredictorConfig& cfg, int past,
                   const CondIds* signal = nullptr) {
  const Shape& ps = t.value(past).shape;
  if (ps.size() != 4 || ps[1] != cfg.t_past || ps[2] != cfg.patches || ps[3] != cfg.d_backbone) {
    throw ShapeError("predict_future: past " + shape_str(ps) + " does not match config [B," +
                     std::to_string(cfg.t_past) + "," + std::to_string(cfg.patches) + "," +
                     std::to_string(cfg.d_backbone) + "]");
  }
  if (signal && signal->mode != cfg.mode) {
    throw ConfigError(std::string("conditioning mode mismatch: model is ") +
                      cond_mode_name(cfg.mode) + ", signal is " + cond_mode_name(signal->mode));
  }
  if (signal && signal->mode != CondMode::None && signal->mode != CondMode::CrossAttention &&
      static_cast<int>(signal->gamma_beta.size()) != cfg.blocks) {
    throw ShapeError("conditioning signal has " + std::to_string(signal->gamma_beta.size()) +
                     " block entries, predictor has " + std::to_string(cfg.blocks));
  }
  const int B = ps[0], P = cfg.patches;
  const int s_past = cfg.t_past * P, s_fut = cfg.t_fut * P, S = s_past + s_fut;

  const int x = t.affine(t.reshape(past, Shape{B, s_past, cfg.d_backbone}), p("predictor.in_proj.w"),
                         p("predictor.in_proj.b"));
  const int masks = t.broadcast_to(
      t.reshape(t.tile_rows_mod(p("predictor.mask_tokens"), s_fut), Shape{1, s_fut, cfg.d_p}),
      Shape{B, s_fut, cfg.d_p});
  int z = t.concat(1, {x, masks});

  std::vector<int> positions(static_cast<size_t>(S));
  std::iota(positions.begin(), positions.end(), 0);  // flattened (frame, patch) index

  for (int b = 0; b < cfg.blocks; ++b) z = predictor_block(t, p, cfg, b, z, signal, positions);

  const int fut = t.slice(z, 1, s_past, s_fut);
  const int out = t.affine(fut, p("predictor.out_proj.w"), p("predictor.out_proj.b"));
  return t.reshape(out, Shape{B, cfg.t_fut, P, cfg.d_backbone});
}

template <typename T>
int guided_predict(Tape<T>& t, const Bound<T>& p, const PredictorConfig& cfg, int past,
                   const CondIds& signal) {
  return predict_future(t, p, cfg, past, &signal);
}

// Recursive forecast by pure replacement: each step's prediction becomes the
// next step's past. Requires t_past == t_fut and horizon a multiple of t_fut.
// Returns [B, H, P, D]; the same conditioning signal is reused every step.
template <typename T>
int rollout(Tape<T>& t, const Bound<T>& p, const PredictorConfig& cfg, int initial_past,
            const CondIds* signal, int horizon) {
  if (horizon <= 0 || horizon % cfg.t_fut != 0) {
    throw ConfigError("rollout horizon " + std::to_string(horizon) + " is not a positive multiple of t_fut " +
                      std::to_string(cfg.t_fut));
  }
  if (cfg.t_past != cfg.t_fut) {
    throw ConfigError("rollout requires t_past == t_fut, got " + std::to_string(cfg.t_past) + "/" +
                      std::to_string(cfg.t_fut));
  }
  const int steps = horizon / cfg.t_fut;
  std::vector<int> outs;
  int past = initial_past;
  for (int k = 0; k < steps; ++k) {
    const int fut = predict_future(t, p, cfg, past, signal);
    outs.push_back(fut);
    past = fut;
  }
  return outs.size() == 1 ? outs[0] : t.concat(1, outs);
}

// Temporal concatenation [past | future]; both [B, T, P, D].
template <typename T>
int assemble_full_sequence(Tape<T>& t, int past, int future) {
  const Shape& a = t.value(past).shape;
  const Shape& b = t.value(future).shape;
  if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    throw ShapeError("assemble_full_sequence: incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
  }
  return t.concat(1, {past, future});
}

}  // namespace tjepa
