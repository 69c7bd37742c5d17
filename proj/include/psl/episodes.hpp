#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psl/rng.hpp"
#include "psl/semspace.hpp"
#include "psl/world.hpp"

// Episode construction. A navigation episode fixes a scene, a start pose, a
// goal instance and a handful of goal views. Candidate views are rendered
// around the goal from Omega yaw headings times P pitches; the views kept as
// goals are the ones whose class distribution under the codebook is most
// peaked (lowest normalized entropy), which filters out views dominated by
// background or by the wrong object.

namespace psl {

struct ViewCandidate {
  int index = 0;  // omega index in [0, yaw_divisions * pitch_levels)
  AgentPose pose;
  Embedding embedding;
  Eigen::VectorXd class_probs;  // aligned with the codebook's category order
  double entropy = 0.0;         // normalized to [0, 1]
};

enum class GoalSelection { Entropy, Random };

struct EpisodeConfig {
  double min_optimal_m = 1.5;  // accepted start-to-goal geodesic band
  double max_optimal_m = 10.0;
  GoalSelection selection = GoalSelection::Entropy;
  int k_pool = 10;  // lowest-entropy pool size
  int k_pick = 4;   // goal views drawn from the pool
  int yaw_divisions = 12;
  int pitch_levels = 3;               // candidate pitches, up to {-1, 0, +1}
  double ambiguous_entropy = 0.9;     // report threshold
  int max_attempts = 200;             // start/goal resampling budget
};

struct Episode {
  std::string episode_id;
  std::string scene_id;
  AgentPose start;
  std::string goal_instance;
  std::vector<int> goal_views;  // indices into all_candidates
  std::vector<ViewCandidate> all_candidates;
  double optimal_length_m = 0.0;
  InstanceDescriptor text_goal;  // the goal instance's descriptor
};

// Shannon entropy scaled by log(n) so the value lands in [0, 1].
inline double normalized_entropy(const Eigen::VectorXd& probs) {
  const int n = static_cast<int>(probs.size());
  if (n < 2) throw std::invalid_argument("normalized_entropy: need at least 2 entries");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (probs[i] < -1e-12) throw std::invalid_argument("normalized_entropy: negative probability");
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("normalized_entropy: probabilities must sum to 1");
  double h = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::max(probs[i], 0.0);
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(n)), 0.0, 1.0);
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

// Class distribution of a view embedding against the category prompts.
inline Eigen::VectorXd classify_view(const Codebook& cb, const Embedding& view) {
  const auto& cats = cb.config().categories;
  Eigen::VectorXd logits(static_cast<Eigen::Index>(cats.size()));
  for (std::size_t c = 0; c < cats.size(); ++c) {
    logits[static_cast<Eigen::Index>(c)] =
        scaled_cosine(view, text_embed(cb, cats[c]), cb.config().temperature);
  }
  return softmax(logits);
}

// Render and classify every candidate view at a goal-adjacent cell. Pitches
// are ordered bottom-to-top; index = pitch_slot * yaw_divisions + yaw.
inline std::vector<ViewCandidate> score_views(const Scene& scene, const Cell& at, const Codebook& cb,
                                              const FovConfig& fov, const EpisodeConfig& cfg = {}) {
  if (cfg.yaw_divisions < 4) throw std::invalid_argument("score_views: yaw_divisions must be >= 4");
  if (cfg.pitch_levels < 1 || cfg.pitch_levels > 3) {
    throw std::invalid_argument("score_views: pitch_levels must be in [1, 3]");
  }
  if (!scene.is_floor(at)) throw std::invalid_argument("score_views: cell is not floor");

  const RenderCache cache = build_render_cache(scene, cb);
  FovConfig f = fov;
  f.omega = cfg.yaw_divisions;

  std::vector<ViewCandidate> out;
  out.reserve(static_cast<std::size_t>(cfg.yaw_divisions) * cfg.pitch_levels);
  for (int p = 0; p < cfg.pitch_levels; ++p) {
    const int pitch = p - cfg.pitch_levels / 2;
    for (int yaw = 0; yaw < cfg.yaw_divisions; ++yaw) {
      ViewCandidate v;
      v.index = p * cfg.yaw_divisions + yaw;
      v.pose = AgentPose{at.x + 0.5, at.y + 0.5, yaw, pitch};
      const Observation obs = render(cache, v.pose, f);
      v.embedding = obs.semantic;
      v.class_probs = classify_view(cb, v.embedding);
      v.entropy = normalized_entropy(v.class_probs);
      out.push_back(std::move(v));
    }
  }
  return out;
}

// Pool the k_pool most class-certain candidates, then draw k_pick of them at
// random. Ties break toward the lower candidate index. Returned indices are
// ascending.
inline std::vector<int> select_goal_views(const std::vector<ViewCandidate>& candidates, int k_pool,
                                          int k_pick, Rng& rng) {
  const int n = static_cast<int>(candidates.size());
  if (k_pool < 1 || k_pool > n) throw std::invalid_argument("select_goal_views: k_pool out of range");
  if (k_pick < 1 || k_pick > k_pool) throw std::invalid_argument("select_goal_views: k_pick out of range");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (candidates[static_cast<std::size_t>(a)].entropy != candidates[static_cast<std::size_t>(b)].entropy) {
      return candidates[static_cast<std::size_t>(a)].entropy < candidates[static_cast<std::size_t>(b)].entropy;
    }
    return a < b;
  });

  const std::vector<int> picks = rng.sample_indices(k_pool, k_pick);
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k_pick));
  for (int p : picks) chosen.push_back(order[static_cast<std::size_t>(p)]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline std::vector<Cell> floor_cells(const Scene& scene) {
  std::vector<Cell> out;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.at(x, y) == '.') out.push_back(Cell{x, y});
    }
  }
  return out;
}

inline Episode generate_episode(const Scene& scene, const Codebook& cb, Rng& rng,
                                const EpisodeConfig& cfg = {}, const FovConfig& fov = {},
                                const std::string& episode_id = "") {
  if (scene.objects.empty()) throw std::invalid_argument("generate_episode: scene has no objects");
  const std::vector<Cell> floors = floor_cells(scene);
  if (floors.empty()) throw std::invalid_argument("generate_episode: scene has no floor");

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const SceneObject& goal =
        scene.objects[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(scene.objects.size())))];
    const auto& vps = scene.viewpoints.at(goal.desc.instance_id);
    const std::vector<double> field = distance_field(scene, vps);

    const Cell start = floors[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(floors.size())))];
    const double optimal = field[static_cast<std::size_t>(start.y) * scene.width + start.x];
    if (!(optimal >= cfg.min_optimal_m && optimal <= cfg.max_optimal_m)) continue;

    const Cell goal_cell = vps[static_cast<std::size_t>(rng.uniform_index(static_cast<int>(vps.size())))];

    Episode ep;
    ep.episode_id = episode_id;
    ep.scene_id = scene.id;
    ep.start = AgentPose{start.x + 0.5, start.y + 0.5, rng.uniform_index(cfg.yaw_divisions), 0};
    ep.goal_instance = goal.desc.instance_id;
    ep.all_candidates = score_views(scene, goal_cell, cb, fov, cfg);
    ep.optimal_length_m = optimal;
    ep.text_goal = goal.desc;

    if (cfg.selection == GoalSelection::Entropy) {
      ep.goal_views = select_goal_views(ep.all_candidates, cfg.k_pool, cfg.k_pick, rng);
    } else {
      ep.goal_views = rng.sample_indices(static_cast<int>(ep.all_candidates.size()), cfg.k_pick);
      std::sort(ep.goal_views.begin(), ep.goal_views.end());
    }
    return ep;
  }
  throw std::runtime_error("generate_episode: no start/goal pair inside the optimal-length band after " +
                           std::to_string(cfg.max_attempts) + " attempts");
}

// How the chosen goal views classify: count per winning category, plus an
// "ambiguous" bucket for views whose class distribution is nearly flat.
inline std::map<std::string, int> goal_distribution_report(const std::vector<Episode>& episodes,
                                                           const Codebook& cb,
                                                           double ambiguous_entropy = 0.9) {
  std::map<std::string, int> report;
  for (const std::string& c : cb.config().categories) report[c] = 0;
  report["ambiguous"] = 0;
  for (const Episode& ep : episodes) {
    for (int idx : ep.goal_views) {
      const ViewCandidate& v = ep.all_candidates.at(static_cast<std::size_t>(idx));
      if (v.entropy > ambiguous_entropy) {
        report["ambiguous"]++;
        continue;
      }
      Eigen::Index best = 0;
      v.class_probs.maxCoeff(&best);
      report[cb.config().categories.at(static_cast<std::size_t>(best))]++;
    }
  }
  return report;
}

}  // namespace psl
