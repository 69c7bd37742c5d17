#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

// Navigation reward with a perspective-relaxed success notion: reaching the
// goal is judged by geodesic distance plus *yaw* alignment only, so looking
// at the goal from an unexpected pitch still counts. A strict mode that
// penalizes the full view-direction error is kept for comparison.

namespace psl {

enum class RewardMode { Relaxed, Strict };

struct RewardConfig {
  double success_reward = 5.0;          // bonus per satisfied success condition
  double dist_threshold_m = 1.0;        // "near the goal" radius for bonuses
  double angle_threshold_rad = 0.4363;  // ~25 degrees
  double delay_penalty = 0.01;          // per-step cost
  double success_radius_m = 0.25;       // final success radius (episode metric)
  RewardMode mode = RewardMode::Relaxed;
};

// Agent-goal relation at one timestep. Distances are geodesic meters to the
// nearest goal viewpoint; angle errors are absolute, in [0, pi].
struct StepSnapshot {
  double dist_m = 0.0;
  double yaw_err_rad = 0.0;
  double pitch_err_rad = 0.0;
};

inline void validate_snapshot(const StepSnapshot& s) {
  if (!(s.dist_m >= 0.0)) throw std::invalid_argument("reward: negative distance");
  if (s.yaw_err_rad < 0.0 || s.yaw_err_rad > std::numbers::pi + 1e-9) {
    throw std::invalid_argument("reward: yaw error outside [0, pi]");
  }
  if (s.pitch_err_rad < 0.0 || s.pitch_err_rad > std::numbers::pi + 1e-9) {
    throw std::invalid_argument("reward: pitch error outside [0, pi]");
  }
}

// Full angular error between two view directions that differ by a yaw
// rotation and a pitch rotation about orthogonal axes.
inline double view_angle_error(double yaw_err_rad, double pitch_err_rad) {
  const double c = std::cos(yaw_err_rad) * std::cos(pitch_err_rad);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline double angle_error(const StepSnapshot& s, RewardMode mode) {
  return mode == RewardMode::Relaxed ? s.yaw_err_rad : view_angle_error(s.yaw_err_rad, s.pitch_err_rad);
}

// The five reward terms, kept separate so callers can re-weight or gate them.
struct RewardTerms {
  double success_dist = 0.0;   // bonus: within distance threshold
  double success_angle = 0.0;  // bonus: additionally aligned with the goal view
  double dense_dist = 0.0;     // distance progress since the previous step
  double dense_angle = 0.0;    // angular progress, active only near the goal
  double delay = 0.0;          // constant per-step penalty (negative)

  double total() const { return success_dist + success_angle + dense_dist + dense_angle + delay; }
};

inline RewardTerms step_reward_terms(const StepSnapshot& prev, const StepSnapshot& cur,
                                     const RewardConfig& cfg = {}) {
  validate_snapshot(prev);
  validate_snapshot(cur);
  RewardTerms t;
  const bool near_goal = cur.dist_m < cfg.dist_threshold_m;
  const double cur_angle = angle_error(cur, cfg.mode);
  const double prev_angle = angle_error(prev, cfg.mode);
  if (near_goal) {
    t.success_dist = cfg.success_reward;
    if (cur_angle < cfg.angle_threshold_rad) t.success_angle = cfg.success_reward;
    t.dense_angle = prev_angle - cur_angle;
  }
  t.dense_dist = prev.dist_m - cur.dist_m;
  t.delay = -cfg.delay_penalty;
  return t;
}

inline double step_reward(const StepSnapshot& prev, const StepSnapshot& cur, const RewardConfig& cfg = {}) {
  return step_reward_terms(prev, cur, cfg).total();
}

// Episode-level success: the agent stopped within the success radius of a
// goal viewpoint.
inline bool success_test(const StepSnapshot& final_snapshot, bool stopped, const RewardConfig& cfg = {}) {
  validate_snapshot(final_snapshot);
  return stopped && final_snapshot.dist_m <= cfg.success_radius_m;
}

}  // namespace psl
