#include "tjepa/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tjepa/errors.hpp"

namespace tjepa {

void WorldConfig::validate() const {
  if (joints < 1) throw ConfigError("world: joints must be >= 1, got " + std::to_string(joints));
  if (n_frames < 2) throw ConfigError("world: need at least 2 frames, got " + std::to_string(n_frames));
  if (grid < 2) throw ConfigError("world: grid too small");
  if (channels < 1) throw ConfigError("world: channels must be >= 1");
  if (regimes < 1) throw ConfigError("world: need at least 1 regime");
  if (dt <= 0 || frame_substeps < 1) throw ConfigError("world: bad integrator settings");
  if (ts_min < 2 || ts_max > n_frames || ts_min > ts_max) {
    throw ConfigError("world: switch range [" + std::to_string(ts_min) + ", " +
                      std::to_string(ts_max) + "] outside (1, " + std::to_string(n_frames) + "]");
  }
  if (k_min <= 0 || k_max < k_min || c_min < 0 || c_max < c_min) {
    throw ConfigError("world: bad dynamics parameter ranges");
  }
}

std::array<double, 2> post_attractor(const WorldConfig& cfg, int regime_id) {
  if (regime_id < 0 || regime_id >= cfg.regimes) {
    throw ConfigError("regime id " + std::to_string(regime_id) + " outside [0, " +
                      std::to_string(cfg.regimes) + ")");
  }
  const double lo = 0.18, hi = 0.82, mid = 0.5;
  static const double table[8][2] = {{lo, lo}, {hi, hi}, {lo, hi}, {hi, lo},
                                     {mid, lo}, {mid, hi}, {lo, mid}, {hi, mid}};
  return {table[regime_id % 8][0], table[regime_id % 8][1]};
}

double depth_at(const WorldConfig& cfg, int frame_1based) {
  const double phase = M_PI * (frame_1based - 1) / std::max(1, cfg.n_frames - 1);
  return cfg.z_base + cfg.z_amp * std::cos(phase);
}

Clip generate_clip(const WorldConfig& cfg, uint64_t seed, uint64_t clip_id) {
  cfg.validate();
  const int N = cfg.n_frames, G = cfg.grid, C = cfg.channels, J = cfg.joints;

  Clip clip;
  clip.clip_id = clip_id;
  clip.seed = seed;

  std::mt19937_64 rng = seeded_rng(seed, "clip-dynamics");
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  RegimeDescriptor& reg = clip.regime;
  reg.post_regime_id = static_cast<int>(rng() % static_cast<uint64_t>(cfg.regimes));
  reg.t_s = cfg.ts_min + static_cast<int>(rng() % static_cast<uint64_t>(cfg.ts_max - cfg.ts_min + 1));
  reg.a_pre_x = cfg.attractor_lo + u01(rng) * (cfg.attractor_hi - cfg.attractor_lo);
  reg.a_pre_y = cfg.attractor_lo + u01(rng) * (cfg.attractor_hi - cfg.attractor_lo);
  switch (cfg.family) {
    case DynamicsFamily::SpringDamper:
      reg.spring_k = cfg.k_min + u01(rng) * (cfg.k_max - cfg.k_min);
      reg.damping = cfg.c_min + u01(rng) * (cfg.c_max - cfg.c_min);
      break;
    case DynamicsFamily::Spring:
      reg.spring_k = cfg.spring_k;
      reg.damping = 0.0;
      break;
    case DynamicsFamily::Static:
      reg.spring_k = 0.0;
      reg.damping = 0.0;
      break;
  }

  std::vector<double> px(static_cast<size_t>(J)), py(static_cast<size_t>(J));
  std::vector<double> vx(static_cast<size_t>(J)), vy(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    px[static_cast<size_t>(j)] = cfg.init_lo + u01(rng) * (cfg.init_hi - cfg.init_lo);
    py[static_cast<size_t>(j)] = cfg.init_lo + u01(rng) * (cfg.init_hi - cfg.init_lo);
    const double vs = cfg.family == DynamicsFamily::Static ? 0.0 : cfg.v0_scale;
    vx[static_cast<size_t>(j)] = (2.0 * u01(rng) - 1.0) * vs;
    vy[static_cast<size_t>(j)] = (2.0 * u01(rng) - 1.0) * vs;
  }

  const std::array<double, 2> a_post = post_attractor(cfg, reg.post_regime_id);

  clip.trajectory = ArrF(Shape{N, J, 3});
  auto record_frame = [&](int t) {  // t is 1-based
    for (int j = 0; j < J; ++j) {
      clip.trajectory.at3(t - 1, j, 0) = static_cast<float>(px[static_cast<size_t>(j)]);
      clip.trajectory.at3(t - 1, j, 1) = static_cast<float>(py[static_cast<size_t>(j)]);
      clip.trajectory.at3(t - 1, j, 2) = static_cast<float>(depth_at(cfg, t));
    }
  };

  record_frame(1);
  for (int t = 2; t <= N; ++t) {
    const bool post = t >= reg.t_s;
    const double ax = post ? a_post[0] : reg.a_pre_x;
    const double ay = post ? a_post[1] : reg.a_pre_y;
    for (int j = 0; j < J; ++j) {
      double& x = px[static_cast<size_t>(j)];
      double& y = py[static_cast<size_t>(j)];
      double& ux = vx[static_cast<size_t>(j)];
      double& uy = vy[static_cast<size_t>(j)];
      for (int s = 0; s < cfg.frame_substeps; ++s) {
        // semi-implicit Euler: velocity first, then position
        ux += cfg.dt * (-reg.spring_k * (x - ax) - reg.damping * ux);
        uy += cfg.dt * (-reg.spring_k * (y - ay) - reg.damping * uy);
        x += cfg.dt * ux;
        y += cfg.dt * uy;
        if (x < 0.02) { x = 0.02; ux = std::max(0.0, ux); }
        if (x > 0.98) { x = 0.98; ux = std::min(0.0, ux); }
        if (y < 0.02) { y = 0.02; uy = std::max(0.0, uy); }
        if (y > 0.98) { y = 0.98; uy = std::min(0.0, uy); }
      }
    }
    record_frame(t);
  }

  // Render: Gaussian blobs, brightness scaled by depth so the frames carry a
  // readable clock; optional pixel noise.
  clip.frames = ArrF(Shape{N, C, G, G});
  std::mt19937_64 noise_rng = seeded_rng(seed, "clip-noise");
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sigma_u = cfg.blob_sigma_px / G;
  for (int t = 1; t <= N; ++t) {
    const double z = depth_at(cfg, t);
    const double amp = 0.4 + 0.6 * (z - (cfg.z_base - cfg.z_amp)) / (2.0 * cfg.z_amp);
    for (int gy = 0; gy < G; ++gy) {
      for (int gx = 0; gx < G; ++gx) {
        const double ux = (gx + 0.5) / G, uy = (gy + 0.5) / G;
        double val = 0.0;
        for (int j = 0; j < J; ++j) {
          const double dx = ux - clip.trajectory.at3(t - 1, j, 0);
          const double dy = uy - clip.trajectory.at3(t - 1, j, 1);
          val += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_u * sigma_u));
        }
        if (cfg.frame_noise > 0) val += cfg.frame_noise * nd(noise_rng);
        val = std::clamp(val, 0.0, 1.0);
        for (int c = 0; c < C; ++c) clip.frames.at4(t - 1, c, gy, gx) = static_cast<float>(val);
      }
    }
  }
  return clip;
}

// ---- teacher encoder ----

namespace {

// y = x*W + b over the last axis of a row list.
void affine_rows(const float* x, int rows, int in, const ArrF& w, const ArrF& b, float* out) {
  const int out_d = w.shape[1];
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < out_d; ++j) {
      float acc = b[j];
      for (int i = 0; i < in; ++i) acc += x[r * in + i] * w.data[static_cast<size_t>(i) * out_d + j];
      out[r * out_d + j] = acc;
    }
  }
}

void layer_norm_rows(const float* x, int rows, int d, float* out) {
  for (int r = 0; r < rows; ++r) {
    float mean = 0.f;
    for (int i = 0; i < d; ++i) mean += x[r * d + i];
    mean /= static_cast<float>(d);
    float var = 0.f;
    for (int i = 0; i < d; ++i) {
      const float c = x[r * d + i] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.f / std::sqrt(var + 1e-5f);
    for (int i = 0; i < d; ++i) out[r * d + i] = (x[r * d + i] - mean) * inv;
  }
}

ArrF init_mat(std::mt19937_64& rng, int in, int out) {
  const float a = std::sqrt(6.f / static_cast<float>(in + out));
  ArrF w(Shape{in, out});
  std::uniform_real_distribution<float> ud(-a, a);
  for (auto& v : w.data) v = ud(rng);
  return w;
}

}  // namespace

TeacherEncoder TeacherEncoder::make(const TeacherConfig& cfg, int channels, int grid) {
  if (grid % cfg.patch != 0) {
    throw ShapeError("teacher: grid " + std::to_string(grid) + " not divisible by patch " +
                     std::to_string(cfg.patch));
  }
  if (cfg.d_latent % cfg.heads != 0) throw ConfigError("teacher: heads must divide d_latent");

  TeacherEncoder enc;
  enc.cfg = cfg;
  enc.channels = channels;
  enc.grid = grid;
  const int side = grid / cfg.patch;
  enc.patches = side * side;
  const int pdim = channels * cfg.patch * cfg.patch;
  const int D = cfg.d_latent;

  std::mt19937_64 rng = seeded_rng(cfg.seed, "teacher");
  enc.patch_w = init_mat(rng, pdim, D);
  enc.patch_b = ArrF::randn(Shape{D}, rng, 0.05f);
  enc.pos = ArrF::randn(Shape{enc.patches, D}, rng, 0.5f);
  for (int bi = 0; bi < cfg.blocks; ++bi) {
    Block b;
    b.wq = init_mat(rng, D, D);
    b.bq = ArrF::zeros(Shape{D});
    b.wk = init_mat(rng, D, D);
    b.bk = ArrF::zeros(Shape{D});
    b.wv = init_mat(rng, D, D);
    b.bv = ArrF::zeros(Shape{D});
    b.wo = init_mat(rng, D, D);
    b.bo = ArrF::zeros(Shape{D});
    b.w1 = init_mat(rng, D, 2 * D);
    b.b1 = ArrF::zeros(Shape{2 * D});
    b.w2 = init_mat(rng, 2 * D, D);
    b.b2 = ArrF::zeros(Shape{D});
    enc.block_params.push_back(std::move(b));
  }
  return enc;
}

ArrF TeacherEncoder::encode(const ArrF& frames) const {
  if (frames.rank() != 4 || frames.shape[1] != channels || frames.shape[2] != grid ||
      frames.shape[3] != grid) {
    throw ShapeError("teacher encode expects [F," + std::to_string(channels) + "," +
                     std::to_string(grid) + "," + std::to_string(grid) + "], got " +
                     shape_str(frames.shape));
  }
  const int F = frames.shape[0], G = grid, ps = cfg.patch, side = G / ps;
  const int P = patches, D = cfg.d_latent, H = cfg.heads, dh = D / H;
  const int pdim = channels * ps * ps;

  ArrF out(Shape{F, P, D});
  std::vector<float> patch_buf(static_cast<size_t>(P) * pdim);
  std::vector<float> tok(static_cast<size_t>(P) * D), nrm(tok.size()), q(tok.size()),
      k(tok.size()), v(tok.size()), attn_out(tok.size()), h1(static_cast<size_t>(P) * 2 * D),
      h2(tok.size());
  std::vector<float> scores(static_cast<size_t>(P) * P);

  for (int f = 0; f < F; ++f) {
    // extract patches (row-major within each patch, channels outermost)
    for (int pyi = 0; pyi < side; ++pyi)
      for (int pxi = 0; pxi < side; ++pxi) {
        const int p = pyi * side + pxi;
        int w = 0;
        for (int c = 0; c < channels; ++c)
          for (int yy = 0; yy < ps; ++yy)
            for (int xx = 0; xx < ps; ++xx)
              patch_buf[static_cast<size_t>(p) * pdim + w++] =
                  frames.at4(f, c, pyi * ps + yy, pxi * ps + xx);
      }
    affine_rows(patch_buf.data(), P, pdim, patch_w, patch_b, tok.data());
    for (int p = 0; p < P; ++p)
      for (int d = 0; d < D; ++d) tok[static_cast<size_t>(p) * D + d] += pos.at2(p, d);

    for (const Block& blk : block_params) {
      layer_norm_rows(tok.data(), P, D, nrm.data());
      affine_rows(nrm.data(), P, D, blk.wq, blk.bq, q.data());
      affine_rows(nrm.data(), P, D, blk.wk, blk.bk, k.data());
      affine_rows(nrm.data(), P, D, blk.wv, blk.bv, v.data());
      // multi-head attention over the P patch tokens
      std::fill(attn_out.begin(), attn_out.end(), 0.f);
      const float inv_sqrt = 1.f / std::sqrt(static_cast<float>(dh));
      for (int hh = 0; hh < H; ++hh) {
        const int off = hh * dh;
        for (int i = 0; i < P; ++i) {
          float mx = -1e30f;
          for (int j = 0; j < P; ++j) {
            float s = 0.f;
            for (int d = 0; d < dh; ++d)
              s += q[static_cast<size_t>(i) * D + off + d] * k[static_cast<size_t>(j) * D + off + d];
            s *= inv_sqrt;
            scores[static_cast<size_t>(i) * P + j] = s;
            mx = std::max(mx, s);
          }
          float sum = 0.f;
          for (int j = 0; j < P; ++j) {
            const float e = std::exp(scores[static_cast<size_t>(i) * P + j] - mx);
            scores[static_cast<size_t>(i) * P + j] = e;
            sum += e;
          }
          for (int j = 0; j < P; ++j) {
            const float wgt = scores[static_cast<size_t>(i) * P + j] / sum;
            for (int d = 0; d < dh; ++d)
              attn_out[static_cast<size_t>(i) * D + off + d] += wgt * v[static_cast<size_t>(j) * D + off + d];
          }
        }
      }
      affine_rows(attn_out.data(), P, D, blk.wo, blk.bo, h2.data());
      for (size_t i = 0; i < tok.size(); ++i) tok[i] += h2[i];

      layer_norm_rows(tok.data(), P, D, nrm.data());
      affine_rows(nrm.data(), P, D, blk.w1, blk.b1, h1.data());
      for (auto& x : h1) {
        const double xv = static_cast<double>(x);
        x = static_cast<float>(0.5 * xv * (1.0 + std::erf(xv * 0.7071067811865475)));
      }
      affine_rows(h1.data(), P, 2 * D, blk.w2, blk.b2, h2.data());
      for (size_t i = 0; i < tok.size(); ++i) tok[i] += h2[i];
    }

    layer_norm_rows(tok.data(), P, D, nrm.data());
    for (int p = 0; p < P; ++p)
      for (int d = 0; d < D; ++d) out.at3(f, p, d) = nrm[static_cast<size_t>(p) * D + d];
  }
  return out;
}

}  // namespace tjepa
