#pragma once

#include <array>
#include <cstdint>

#include "tjepa/array.hpp"

namespace tjepa {

enum class DynamicsFamily { SpringDamper, Spring, Static };

// A 2D box of point masses pulled by a spring toward a per-clip attractor,
// with a one-shot attractor switch late in the clip. Depth (z) follows a
// deterministic slow oscillation shared by all joints, rendered as blob
// brightness, so absolute clip time stays readable from the frames.
struct WorldConfig {
  int n_frames = 40;   // N
  int grid = 8;        // G, square frame
  int channels = 1;
  int joints = 2;      // J
  int regimes = 4;     // size of the post-switch attractor table
  DynamicsFamily family = DynamicsFamily::SpringDamper;

  double dt = 0.05;         // integrator step
  int frame_substeps = 12;  // integrator steps per rendered frame

  double spring_k = 0.09;  // fixed k for the undamped Spring family
  double k_min = 0.05, k_max = 0.12;  // per-clip spring constant range
  double c_min = 0.05, c_max = 0.35;  // per-clip damping range
  double v0_scale = 0.12;             // initial speed scale
  double init_lo = 0.25, init_hi = 0.75;
  double attractor_lo = 0.30, attractor_hi = 0.70;

  int ts_min = 31, ts_max = 38;  // 1-based switch frame range

  double blob_sigma_px = 0.9;
  double frame_noise = 0.02;
  double z_base = 0.5, z_amp = 0.3;

  void validate() const;
};

struct RegimeDescriptor {
  int post_regime_id = 0;  // selects the post-switch attractor
  int t_s = 0;             // 1-based frame at which the switch takes effect
  double a_pre_x = 0.5, a_pre_y = 0.5;
  double spring_k = 0.0;
  double damping = 0.0;
};

struct Clip {
  uint64_t clip_id = 0;
  uint64_t seed = 0;
  ArrF frames;      // [N, C, G, G], values in [0, 1]
  ArrF trajectory;  // [N, J, 3], meters
  RegimeDescriptor regime;
};

// Fixed table of post-switch attractors (corners first, then edge midpoints).
std::array<double, 2> post_attractor(const WorldConfig& cfg, int regime_id);

// Deterministic given (config, seed). clip_id only labels the clip.
Clip generate_clip(const WorldConfig& cfg, uint64_t seed, uint64_t clip_id);

// Depth clock: monotone over the clip, shared by all joints.
double depth_at(const WorldConfig& cfg, int frame_1based);

// ---- frozen teacher encoder ----

struct TeacherConfig {
  int d_latent = 32;  // D
  int blocks = 2;
  int heads = 4;
  int patch = 4;
  uint64_t seed = 7;
};

// Patch embedding plus a small attention stack, parameters fixed by seed.
// Frames are encoded independently into per-frame spatial tokens.
struct TeacherEncoder {
  TeacherConfig cfg;
  int channels = 1, grid = 8, patches = 0;

  ArrF patch_w, patch_b;  // [C*ps*ps, D], [D]
  ArrF pos;               // [P, D]
  struct Block {
    ArrF wq, bq, wk, bk, wv, bv, wo, bo;
    ArrF w1, b1, w2, b2;
  };
  std::vector<Block> block_params;

  static TeacherEncoder make(const TeacherConfig& cfg, int channels, int grid);

  // frames: [F, C, G, G] -> tokens [F, P, D]. Pure function of the inputs.
  ArrF encode(const ArrF& frames) const;
};

}  // namespace tjepa
