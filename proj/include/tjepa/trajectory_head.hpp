#pragma once

#include <string>

#include "tjepa/params.hpp"
#include "tjepa/tape.hpp"

namespace tjepa {

// Attention pooling over patches, one mixer block across frames, stride-2
// temporal average pooling, then a linear map to J*3 per output frame.
struct HeadConfig {
  int d = 32;         // token dim at the head input
  int window = 8;     // fixed input frame count T
  int joints = 2;     // J
  int downsample = 2;
  int time_hidden = 32;
  int chan_hidden = 64;

  int t_out() const { return window / downsample; }
  void validate() const {
    if (window < 2 || window % downsample != 0) {
      throw ShapeError("head: window " + std::to_string(window) + " not divisible by downsample " +
                       std::to_string(downsample));
    }
    if (joints < 1 || d < 1) throw ConfigError("head: bad dims");
  }
};

template <typename T>
void init_head_params(ParamSet<T>& ps, const HeadConfig& cfg, uint64_t seed) {
  cfg.validate();
  auto mat = [&](const std::string& n, int in, int out) { ps.add(n, xavier_init<T>(seed, n, in, out)); };
  ps.add("head.pool_query", normal_init<T>(seed, "head.pool_query", Shape{cfg.d, 1}, T(0.2)));
  ps.add("head.ln1.g", Arr<T>::full(Shape{cfg.d}, T(1)));
  ps.add("head.ln1.b", Arr<T>::zeros(Shape{cfg.d}));
  mat("head.time.w1", cfg.window, cfg.time_hidden);
  ps.add("head.time.b1", Arr<T>::zeros(Shape{cfg.time_hidden}));
  mat("head.time.w2", cfg.time_hidden, cfg.window);
  ps.add("head.time.b2", Arr<T>::zeros(Shape{cfg.window}));
  ps.add("head.ln2.g", Arr<T>::full(Shape{cfg.d}, T(1)));
  ps.add("head.ln2.b", Arr<T>::zeros(Shape{cfg.d}));
  mat("head.chan.w1", cfg.d, cfg.chan_hidden);
  ps.add("head.chan.b1", Arr<T>::zeros(Shape{cfg.chan_hidden}));
  mat("head.chan.w2", cfg.chan_hidden, cfg.d);
  ps.add("head.chan.b2", Arr<T>::zeros(Shape{cfg.d}));
  mat("head.out.w", cfg.d, cfg.joints * 3);
  ps.add("head.out.b", Arr<T>::zeros(Shape{cfg.joints * 3}));
}

// tokens: [B, T, P, D] -> trajectories [B, T/downsample, J, 3].
template <typename T>
int predict_trajectory(Tape<T>& t, const Bound<T>& p, const HeadConfig& cfg, int tokens) {
  const Shape& s = t.value(tokens).shape;
  if (s.size() != 4 || s[3] != cfg.d) {
    throw ShapeError("predict_trajectory: tokens " + shape_str(s) + " need rank 4 with D=" +
                     std::to_string(cfg.d));
  }
  if (s[1] != cfg.window) {
    throw ShapeError("predict_trajectory: " + std::to_string(s[1]) + " frames, head expects " +
                     std::to_string(cfg.window));
  }
  if (s[1] % cfg.downsample != 0) {
    throw ShapeError("predict_trajectory: frame count " + std::to_string(s[1]) +
                     " not divisible by " + std::to_string(cfg.downsample));
  }
  const int B = s[0], Tw = s[1], P = s[2], D = s[3];

  // attention pooling with a learnable query, per frame over the P tokens
  const int flat = t.reshape(tokens, Shape{B * Tw, P, D});
  const int scores = t.matmul(flat, p("head.pool_query"));        // [B*T, P, 1]
  const int attn = t.softmax(scores, 1);
  const int pooled3 = t.matmul(t.transpose(attn, {0, 2, 1}), flat);  // [B*T, 1, D]
  int u = t.reshape(pooled3, Shape{B, Tw, D});

  // time mixing (across frames, per channel)
  {
    const int n = t.add(t.mul(t.layer_norm(u), p("head.ln1.g")), p("head.ln1.b"));
    const int tr = t.transpose(n, {0, 2, 1});  // [B, D, T]
    const int h = t.gelu(t.affine(tr, p("head.time.w1"), p("head.time.b1")));
    const int back = t.transpose(t.affine(h, p("head.time.w2"), p("head.time.b2")), {0, 2, 1});
    u = t.add(u, back);
  }
  // channel mixing
  {
    const int n = t.add(t.mul(t.layer_norm(u), p("head.ln2.g")), p("head.ln2.b"));
    const int h = t.gelu(t.affine(n, p("head.chan.w1"), p("head.chan.b1")));
    u = t.add(u, t.affine(h, p("head.chan.w2"), p("head.chan.b2")));
  }

  // stride-2 temporal average pooling, then the output projection
  const int ds = t.mean_pool(t.reshape(u, Shape{B, Tw / cfg.downsample, cfg.downsample, D}), 2);
  const int out = t.affine(ds, p("head.out.w"), p("head.out.b"));
  return t.reshape(out, Shape{B, Tw / cfg.downsample, cfg.joints, 3});
}

}  // namespace tjepa
