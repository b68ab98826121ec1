#pragma once

#include <map>
#include <vector>

#include "tjepa/array.hpp"

namespace tjepa {

// Trajectory metrics over [B, T, J, 3] batches, accumulated in double.

double ade(const ArrF& pred, const ArrF& gt);
double fde(const ArrF& pred, const ArrF& gt);
// Fraction of (frame, joint) points with Euclidean error strictly below tau.
double accuracy(const ArrF& pred, const ArrF& gt, double tau = 0.05);

// Latent metrics over token arrays [..., D] of identical shape.
double feature_distance(const ArrF& pred, const ArrF& target);
double latent_smooth_l1(const ArrF& pred, const ArrF& target, double beta = 1.0);
double cosine_distance(const ArrF& pred, const ArrF& target, double eps = 1e-8);

// A@H / F@H on the first H frames of a decoded rollout trajectory.
struct HorizonMetrics {
  std::map<int, double> ade_at;
  std::map<int, double> fde_at;
};
HorizonMetrics horizon_metrics(const ArrF& rollout_pred, const ArrF& gt,
                               const std::vector<int>& horizons);

}  // namespace tjepa
