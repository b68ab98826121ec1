#include "tjepa/guidance.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "tjepa/codec.hpp"
#include "tjepa/errors.hpp"

namespace tjepa {

namespace {

void check_bundle_dims(const std::vector<GuidanceBundle>& bundles) {
  if (bundles.empty()) throw ConfigError("write_cache: no bundles");
  const GuidanceBundle& b0 = bundles[0];
  if (b0.encoder_tokens.rank() != 2 || b0.ar_tokens.rank() != 2) {
    throw ShapeError("bundle token matrices must be rank 2");
  }
  const int d_c = b0.encoder_tokens.shape[1];
  for (const GuidanceBundle& b : bundles) {
    if (b.encoder_tokens.shape != b0.encoder_tokens.shape ||
        b.ar_tokens.shape != b0.ar_tokens.shape ||
        b.layer_states.size() != b0.layer_states.size()) {
      throw ConfigError("write_cache: bundles have inconsistent shapes");
    }
    if (b.ar_tokens.shape[1] != d_c) throw ConfigError("write_cache: D_c differs across sections");
    for (size_t i = 0; i < b.layer_states.size(); ++i) {
      if (b.layer_states[i].first != b0.layer_states[i].first ||
          b.layer_states[i].second.shape != b0.layer_states[i].second.shape ||
          b.layer_states[i].second.shape[1] != d_c) {
        throw ConfigError("write_cache: layer states inconsistent across bundles");
      }
    }
  }
  for (size_t i = 1; i < b0.layer_states.size(); ++i) {
    if (b0.layer_states[i].first <= b0.layer_states[i - 1].first) {
      throw ConfigError("write_cache: layer ids must be strictly increasing");
    }
  }
}

}  // namespace

std::vector<uint8_t> encode_cache(const std::vector<GuidanceBundle>& bundles) {
  check_bundle_dims(bundles);
  const GuidanceBundle& b0 = bundles[0];
  const int d_c = b0.encoder_tokens.shape[1];
  const int l_enc = b0.encoder_tokens.shape[0];
  const int l_ar = b0.ar_tokens.shape[0];
  const int n_layers = static_cast<int>(b0.layer_states.size());
  const int l_tok = n_layers > 0 ? b0.layer_states[0].second.shape[0] : 0;

  BinWriter w;
  w.bytes(kCacheMagic, 4);
  w.u32(kCacheVersion);
  w.u32(static_cast<uint32_t>(bundles.size()));
  w.u32(static_cast<uint32_t>(d_c));
  w.u32(static_cast<uint32_t>(l_enc));
  w.u32(static_cast<uint32_t>(l_ar));
  w.u32(static_cast<uint32_t>(n_layers));
  for (const auto& [id, arr] : b0.layer_states) w.u32(static_cast<uint32_t>(id));
  w.u32(static_cast<uint32_t>(l_tok));
  for (const GuidanceBundle& b : bundles) {
    w.u64(b.clip_id);
    w.u32(static_cast<uint32_t>(b.prompt_text.size()));
    w.str(b.prompt_text);
    w.f32s(b.encoder_tokens.data.data(), b.encoder_tokens.data.size());
    w.f32s(b.ar_tokens.data.data(), b.ar_tokens.data.size());
    for (const auto& [id, arr] : b.layer_states) w.f32s(arr.data.data(), arr.data.size());
  }
  w.finish_with_crc();
  return w.buffer();
}

void write_cache(const std::vector<GuidanceBundle>& bundles, const std::string& path) {
  const std::vector<uint8_t> buf = encode_cache(bundles);
  BinWriter w;
  w.bytes(buf.data(), buf.size());
  w.write_file(path);
}

CacheContents decode_cache(const uint8_t* data, size_t len) {
  BinReader r(data, len);
  r.section("magic");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCacheMagic, 4) != 0) {
    throw CacheMagicError("bad cache magic, expected TJPC");
  }
  r.section("version");
  const uint32_t version = r.u32();
  if (version != kCacheVersion) {
    throw CacheVersionError("unsupported cache version " + std::to_string(version));
  }
  r.section("header");
  CacheContents out;
  CacheHeader& h = out.header;
  h.version = version;
  const uint32_t n_clips = r.u32();
  const uint32_t d_c = r.u32();
  const uint32_t l_enc = r.u32();
  const uint32_t l_ar = r.u32();
  const uint32_t n_layers = r.u32();
  // Structural sanity before any allocation: the declared payload must fit.
  r.require(static_cast<uint64_t>(n_layers) * 4 + 4);
  h.layer_ids.resize(n_layers);
  for (uint32_t i = 0; i < n_layers; ++i) h.layer_ids[i] = static_cast<int>(r.u32());
  for (uint32_t i = 1; i < n_layers; ++i) {
    if (h.layer_ids[i] <= h.layer_ids[i - 1]) {
      throw CacheTruncationError("corrupt header: layer ids not strictly increasing");
    }
  }
  const uint32_t l_tok = r.u32();
  h.n_clips = static_cast<int>(n_clips);
  h.d_c = static_cast<int>(d_c);
  h.l_enc = static_cast<int>(l_enc);
  h.l_ar = static_cast<int>(l_ar);
  h.l_tok = static_cast<int>(l_tok);
  if (d_c == 0 || l_enc == 0 || l_ar == 0) {
    throw CacheTruncationError("corrupt header: zero section dimension");
  }

  const uint64_t per_clip_f32 =
      (static_cast<uint64_t>(l_enc) + l_ar + static_cast<uint64_t>(n_layers) * l_tok) * d_c;
  // 8 bytes id + 4 bytes prompt length minimum per clip, plus token payload.
  r.require(static_cast<uint64_t>(n_clips) * (12 + per_clip_f32 * 4));

  out.bundles.reserve(n_clips);
  for (uint32_t ci = 0; ci < n_clips; ++ci) {
    GuidanceBundle b;
    r.section("clip " + std::to_string(ci) + " id");
    b.clip_id = r.u64();
    r.section("clip " + std::to_string(ci) + " prompt");
    const uint32_t plen = r.u32();
    b.prompt_text = r.str(plen);
    r.section("clip " + std::to_string(ci) + " encoder_tokens");
    b.encoder_tokens = ArrF(Shape{static_cast<int>(l_enc), static_cast<int>(d_c)});
    r.f32s(b.encoder_tokens.data.data(), b.encoder_tokens.data.size());
    r.section("clip " + std::to_string(ci) + " ar_tokens");
    b.ar_tokens = ArrF(Shape{static_cast<int>(l_ar), static_cast<int>(d_c)});
    r.f32s(b.ar_tokens.data.data(), b.ar_tokens.data.size());
    for (uint32_t li = 0; li < n_layers; ++li) {
      r.section("clip " + std::to_string(ci) + " layer_state " +
                std::to_string(h.layer_ids[li]));
      ArrF st(Shape{static_cast<int>(l_tok), static_cast<int>(d_c)});
      r.f32s(st.data.data(), st.data.size());
      b.layer_states.emplace_back(h.layer_ids[li], std::move(st));
    }
    out.bundles.push_back(std::move(b));
  }

  r.section("checksum");
  const size_t body_len = r.offset();
  const uint32_t stored = r.u32();
  const uint32_t actual = crc32(data, body_len);
  if (stored != actual) {
    std::ostringstream os;
    os << "cache checksum mismatch: stored 0x" << std::hex << stored << ", computed 0x" << actual;
    throw CacheChecksumError(os.str());
  }
  return out;
}

CacheContents read_cache(const std::string& path) {
  const std::vector<uint8_t> buf = read_file_bytes(path);
  return decode_cache(buf.data(), buf.size());
}

// ---- filtering ----

std::vector<int> select_layers(const std::vector<int>& ids, const GuidanceConfig& config) {
  if (ids.empty()) return {};
  switch (config.layer_subset) {
    case LayerSubset::All:
      return ids;
    case LayerSubset::Last:
      return {ids.back()};
    case LayerSubset::Mid:
      return {ids[ids.size() / 2]};
    case LayerSubset::Custom: {
      std::vector<int> out;
      for (int want : config.custom_layers) {
        if (std::find(ids.begin(), ids.end(), want) == ids.end()) {
          throw ConfigError("layer " + std::to_string(want) + " not present in bundle");
        }
        out.push_back(want);
      }
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      return out;
    }
  }
  return ids;
}

GuidanceBundle filter_tokens(const GuidanceBundle& bundle, const GuidanceConfig& config) {
  GuidanceBundle out;
  out.clip_id = bundle.clip_id;
  out.prompt_text = bundle.prompt_text;

  out.encoder_tokens = config.use_encoder_tokens
                           ? bundle.encoder_tokens
                           : ArrF::zeros(bundle.encoder_tokens.shape);
  const bool ar_on = config.use_ar_tokens && !config.drop_deepstack;
  out.ar_tokens = ar_on ? bundle.ar_tokens : ArrF::zeros(bundle.ar_tokens.shape);

  std::vector<int> ids;
  ids.reserve(bundle.layer_states.size());
  for (const auto& [id, arr] : bundle.layer_states) ids.push_back(id);
  const std::vector<int> keep = select_layers(ids, config);
  for (const auto& [id, arr] : bundle.layer_states) {
    if (std::find(keep.begin(), keep.end(), id) != keep.end()) {
      out.layer_states.emplace_back(id, arr);
    }
  }

  if (!config.use_encoder_tokens && !ar_on && out.layer_states.empty()) {
    throw ConfigError("guidance filter leaves no effective token source");
  }
  return out;
}

// ---- synthetic generation ----

std::vector<float> spatial_features(const Clip& clip) {
  return {static_cast<float>(clip.regime.a_pre_x), static_cast<float>(clip.regime.a_pre_y),
          static_cast<float>(clip.regime.spring_k), static_cast<float>(clip.regime.damping),
          1.0f};
}

std::vector<float> event_features(const Clip& clip, int n_frames, int regimes) {
  std::vector<float> u(static_cast<size_t>(regimes) + 2, 0.f);
  if (clip.regime.post_regime_id >= 0 && clip.regime.post_regime_id < regimes) {
    u[static_cast<size_t>(clip.regime.post_regime_id)] = 1.f;
  }
  u[static_cast<size_t>(regimes)] = static_cast<float>(clip.regime.t_s) / static_cast<float>(n_frames);
  u[static_cast<size_t>(regimes) + 1] = 1.f;
  return u;
}

BundleMaps bundle_maps(const BundleGenConfig& cfg) {
  const int n_spatial = 5;
  const int n_event = cfg.regimes + 2;
  BundleMaps maps;
  {
    std::mt19937_64 rng = seeded_rng(cfg.thinker_seed, "bundle-map-enc");
    maps.enc = ArrF::randn(Shape{cfg.l_enc * cfg.d_c, n_spatial}, rng, 0.7f);
  }
  {
    std::mt19937_64 rng = seeded_rng(cfg.thinker_seed, "bundle-map-ar");
    maps.ar = ArrF::randn(Shape{cfg.l_ar * cfg.d_c, n_event}, rng, 0.7f);
  }
  for (int id : cfg.layer_ids) {
    std::mt19937_64 rng = seeded_rng(cfg.thinker_seed, "bundle-map-layer-" + std::to_string(id));
    maps.layers.push_back(ArrF::randn(Shape{cfg.l_tok * cfg.d_c, n_spatial + n_event}, rng, 0.7f));
  }
  return maps;
}

namespace {
ArrF embed(const ArrF& map, const std::vector<float>& u, int rows, int d_c, float noise,
           std::mt19937_64& noise_rng) {
  ArrF out(Shape{rows, d_c});
  std::normal_distribution<float> nd(0.f, 1.f);
  const int nf = map.shape[1];
  for (int64_t i = 0; i < out.n(); ++i) {
    float acc = 0.f;
    for (int j = 0; j < nf; ++j) acc += map.data[static_cast<size_t>(i) * nf + j] * u[static_cast<size_t>(j)];
    out[i] = acc + (noise > 0 ? noise * nd(noise_rng) : 0.f);
  }
  return out;
}
}  // namespace

GuidanceBundle generate_synthetic_bundle(const Clip& clip, int n_frames,
                                         const BundleGenConfig& cfg) {
  for (size_t i = 1; i < cfg.layer_ids.size(); ++i) {
    if (cfg.layer_ids[i] <= cfg.layer_ids[i - 1]) {
      throw ConfigError("bundle layer ids must be strictly increasing");
    }
  }
  const BundleMaps maps = bundle_maps(cfg);
  const std::vector<float> u_s = spatial_features(clip);
  const std::vector<float> u_e = event_features(clip, n_frames, cfg.regimes);
  std::vector<float> u_full = u_s;
  u_full.insert(u_full.end(), u_e.begin(), u_e.end());

  GuidanceBundle b;
  b.clip_id = clip.clip_id;
  {
    std::ostringstream os;
    os << "summarize motion and upcoming events; clip " << clip.clip_id;
    b.prompt_text = os.str();
  }
  std::mt19937_64 noise_rng =
      seeded_rng(cfg.thinker_seed ^ (clip.clip_id * 0x9e3779b97f4a7c15ull), "bundle-noise");
  b.encoder_tokens = embed(maps.enc, u_s, cfg.l_enc, cfg.d_c, cfg.noise, noise_rng);
  b.ar_tokens = embed(maps.ar, u_e, cfg.l_ar, cfg.d_c, cfg.noise, noise_rng);
  const int n_layers = static_cast<int>(cfg.layer_ids.size());
  for (int li = 0; li < n_layers; ++li) {
    const float frac = n_layers > 1 ? static_cast<float>(li) / (n_layers - 1) : 1.f;
    const float sigma = cfg.layer_noise_hi + frac * (cfg.layer_noise_lo - cfg.layer_noise_hi);
    b.layer_states.emplace_back(
        cfg.layer_ids[static_cast<size_t>(li)],
        embed(maps.layers[static_cast<size_t>(li)], u_full, cfg.l_tok, cfg.d_c, sigma, noise_rng));
  }
  return b;
}

}  // namespace tjepa
