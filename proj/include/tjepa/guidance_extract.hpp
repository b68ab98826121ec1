#pragma once

#include <string>
#include <vector>

#include "tjepa/conditioning.hpp"
#include "tjepa/guidance.hpp"
#include "tjepa/params.hpp"

namespace tjepa {

// Shapes of the guidance sources as the adapters consume them (after any
// layer-subset selection).
struct GuidanceArchConfig {
  int d_c = 16;
  int l_enc = 12;
  int l_ar = 5;
  int l_tok = 6;
  std::vector<int> layer_ids = {0, 2, 4, 6};
  int d_p = 16;
  int adapter_hidden = 32;
  int n_blocks = 4;

  int concat_dim() const { return (2 + static_cast<int>(layer_ids.size())) * d_p; }
};

// Output heads start at zero so a fresh signal is the exact identity
// (gamma == 1, beta == 0) and a guided model reduces to the unguided one.
template <typename T>
void init_guidance_params(ParamSet<T>& ps, const GuidanceArchConfig& cfg, uint64_t seed,
                          CondMode mode) {
  auto mat = [&](const std::string& n, int in, int out) { ps.add(n, xavier_init<T>(seed, n, in, out)); };
  mat("guidance.proj.enc.w", cfg.d_c, cfg.d_p);
  ps.add("guidance.proj.enc.b", Arr<T>::zeros(Shape{cfg.d_p}));
  mat("guidance.proj.ar.w", cfg.d_c, cfg.d_p);
  ps.add("guidance.proj.ar.b", Arr<T>::zeros(Shape{cfg.d_p}));
  for (int id : cfg.layer_ids) {
    const std::string pre = "guidance.proj.layer" + std::to_string(id);
    mat(pre + ".w", cfg.d_c, cfg.d_p);
    ps.add(pre + ".b", Arr<T>::zeros(Shape{cfg.d_p}));
  }
  if (mode == CondMode::Film || mode == CondMode::AdaLN) {
    for (int i = 0; i < cfg.n_blocks; ++i) {
      const std::string pre = "guidance.adapter.block" + std::to_string(i);
      mat(pre + ".w1", cfg.concat_dim(), cfg.adapter_hidden);
      ps.add(pre + ".b1", Arr<T>::zeros(Shape{cfg.adapter_hidden}));
      ps.add(pre + ".w2", Arr<T>::zeros(Shape{cfg.adapter_hidden, 2 * cfg.d_p}));
      ps.add(pre + ".b2", Arr<T>::zeros(Shape{2 * cfg.d_p}));
    }
  }
}

// A batch of filtered bundles stacked for one forward pass.
template <typename T>
struct BundleBatch {
  Arr<T> enc;  // [B, L_enc, D_c]
  Arr<T> ar;   // [B, L_ar, D_c]
  std::vector<std::pair<int, Arr<T>>> layers;  // each [B, L_tok, D_c]
};

template <typename T = float>
BundleBatch<T> stack_bundles(const std::vector<const GuidanceBundle*>& bs) {
  if (bs.empty()) throw ConfigError("stack_bundles: empty batch");
  const int B = static_cast<int>(bs.size());
  const GuidanceBundle& b0 = *bs[0];
  BundleBatch<T> out;
  auto stack2 = [&](auto getter, const Shape& s2) {
    Arr<T> r(Shape{B, s2[0], s2[1]});
    for (int b = 0; b < B; ++b) {
      const ArrF& src = getter(*bs[static_cast<size_t>(b)]);
      if (src.shape != s2) throw ShapeError("stack_bundles: inconsistent bundle shapes");
      for (int64_t i = 0; i < src.n(); ++i)
        r.data[static_cast<size_t>(b) * src.n() + i] = static_cast<T>(src[i]);
    }
    return r;
  };
  out.enc = stack2([](const GuidanceBundle& g) -> const ArrF& { return g.encoder_tokens; },
                   b0.encoder_tokens.shape);
  out.ar = stack2([](const GuidanceBundle& g) -> const ArrF& { return g.ar_tokens; },
                  b0.ar_tokens.shape);
  for (size_t li = 0; li < b0.layer_states.size(); ++li) {
    const int id = b0.layer_states[li].first;
    out.layers.emplace_back(
        id, stack2([li](const GuidanceBundle& g) -> const ArrF& { return g.layer_states[li].second; },
                   b0.layer_states[li].second.shape));
  }
  return out;
}

// Projection -> pooling -> concatenation -> per-block adapters. For
// cross-attention the pooling step is skipped and the projected tokens form
// the context.
template <typename T>
CondIds extract_guidance(Tape<T>& t, const Bound<T>& p, const GuidanceArchConfig& cfg,
                         CondMode mode, const BundleBatch<T>& batch) {
  if (mode == CondMode::None) return CondIds{};
  if (batch.enc.shape[2] != cfg.d_c || batch.enc.shape[1] != cfg.l_enc ||
      batch.ar.shape[1] != cfg.l_ar || batch.ar.shape[2] != cfg.d_c) {
    throw ShapeError("extract_guidance: bundle dims " + shape_str(batch.enc.shape) + "/" +
                     shape_str(batch.ar.shape) + " do not match adapter config");
  }
  if (batch.layers.size() != cfg.layer_ids.size()) {
    throw ShapeError("extract_guidance: bundle has " + std::to_string(batch.layers.size()) +
                     " layer states, adapters expect " + std::to_string(cfg.layer_ids.size()));
  }
  for (size_t i = 0; i < batch.layers.size(); ++i) {
    if (batch.layers[i].first != cfg.layer_ids[i]) {
      throw ShapeError("extract_guidance: layer id mismatch at position " + std::to_string(i));
    }
    if (batch.layers[i].second.shape[1] != cfg.l_tok || batch.layers[i].second.shape[2] != cfg.d_c) {
      throw ShapeError("extract_guidance: layer state shape " +
                       shape_str(batch.layers[i].second.shape) + " mismatch");
    }
  }

  std::vector<int> projected;
  projected.push_back(t.affine(t.constant(batch.enc), p("guidance.proj.enc.w"),
                               p("guidance.proj.enc.b")));
  projected.push_back(t.affine(t.constant(batch.ar), p("guidance.proj.ar.w"),
                               p("guidance.proj.ar.b")));
  for (const auto& [id, arr] : batch.layers) {
    const std::string pre = "guidance.proj.layer" + std::to_string(id);
    projected.push_back(t.affine(t.constant(arr), p(pre + ".w"), p(pre + ".b")));
  }

  CondIds out;
  out.mode = mode;
  if (mode == CondMode::CrossAttention) {
    out.context = t.concat(1, projected);
    return out;
  }

  std::vector<int> pooled;
  pooled.reserve(projected.size());
  for (int id : projected) pooled.push_back(t.mean_pool(id, 1));  // [B, D_p]
  const int u = t.concat(1, pooled);                              // [B, concat_dim]
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const std::string pre = "guidance.adapter.block" + std::to_string(i);
    const int h = t.gelu(t.affine(u, p(pre + ".w1"), p(pre + ".b1")));
    const int gb = t.affine(h, p(pre + ".w2"), p(pre + ".b2"));  // [B, 2*D_p]
    const int dgamma = t.slice(gb, 1, 0, cfg.d_p);
    const int beta = t.slice(gb, 1, cfg.d_p, cfg.d_p);
    out.gamma_beta.emplace_back(t.shift(dgamma, T(1)), beta);
  }
  return out;
}

}  // namespace tjepa
