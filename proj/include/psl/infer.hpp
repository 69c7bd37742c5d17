#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psl/agent.hpp"
#include "psl/episodes.hpp"
#include "psl/reward.hpp"
#include "psl/rng.hpp"
#include "psl/train.hpp"
#include "psl/world.hpp"

// Inference-time pieces: the support set that bridges text goals into the
// image domain, goal construction for the three goal modes, and episode
// evaluation for learned and scripted policies.

namespace psl {

// --- support set -----------------------------------------------------------------

// A diversity-filtered bank of image embeddings collected from training
// views. A candidate enters only if its best cosine against the existing
// bank stays below lambda, which keeps the bank small and spread out.
struct SupportSet {
  double lambda = 0.8;
  std::vector<Embedding> vectors;
  std::vector<std::string> provenance;  // "episode_id/view_index", parallel to vectors
};

inline bool support_insert(SupportSet& set, const Embedding& v, const std::string& provenance) {
  if (std::abs(v.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("support set: candidate must be unit norm");
  }
  if (set.lambda < 0.0 || set.lambda > 1.0) {
    throw std::invalid_argument("support set: lambda outside [0, 1]");
  }
  for (const Embedding& s : set.vectors) {
    if (v.dot(s) / s.norm() >= set.lambda) return false;
  }
  set.vectors.push_back(v);
  set.provenance.push_back(provenance);
  return true;
}

// Stream every selected goal view of every episode (episode order, then view
// order) through the diversity filter.
inline SupportSet build_support_set(const std::vector<Episode>& episodes, double lambda = 0.8) {
  SupportSet set;
  set.lambda = lambda;
  for (const Episode& ep : episodes) {
    for (int idx : ep.goal_views) {
      const ViewCandidate& v = ep.all_candidates.at(static_cast<std::size_t>(idx));
      support_insert(set, v.embedding, ep.episode_id + "/" + std::to_string(v.index));
    }
  }
  return set;
}

// Retrieval-based goal expansion: attention over the support set with the
// text embedding as query, renormalized to the unit sphere. nearest_only is an
// ablation that returns the single best-matching vector instead of the
// attention mixture.
inline Embedding expand_text_goal(const Embedding& text_goal, const SupportSet& set, double tau,
                                  bool nearest_only = false) {
  if (set.vectors.empty()) throw std::invalid_argument("expand_text_goal: empty support set");
  Eigen::VectorXd logits(static_cast<Eigen::Index>(set.vectors.size()));
  for (std::size_t i = 0; i < set.vectors.size(); ++i) {
    logits[static_cast<Eigen::Index>(i)] = scaled_cosine(text_goal, set.vectors[i], tau);
  }
  if (nearest_only) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return set.vectors[static_cast<std::size_t>(best)];
  }
  const Eigen::VectorXd w = softmax(logits);
  Embedding out = Embedding::Zero(text_goal.size());
  for (std::size_t i = 0; i < set.vectors.size(); ++i) {
    out += w[static_cast<Eigen::Index>(i)] * set.vectors[i];
  }
  const double n = out.norm();
  if (n < 1e-12) throw std::runtime_error("expand_text_goal: degenerate retrieval result");
  return out / n;
}

// --- goal construction -------------------------------------------------------------

enum class GoalMode { Image, Text, TextExpanded };

inline const char* goal_mode_name(GoalMode m) {
  switch (m) {
    case GoalMode::Image: return "image";
    case GoalMode::Text: return "text";
    case GoalMode::TextExpanded: return "text_expanded";
  }
  throw std::invalid_argument("unknown goal mode");
}

inline GoalMode goal_mode_from_string(const std::string& s) {
  if (s == "image") return GoalMode::Image;
  if (s == "text") return GoalMode::Text;
  if (s == "text_expanded" || s == "text-expanded") return GoalMode::TextExpanded;
  throw std::invalid_argument("unknown goal mode '" + s + "' (expected image|text|text-expanded)");
}

// The image goal is a held-out view: the best (lowest-entropy) selected view
// re-rendered at a different pitch, so it is never literally one of the
// episode's stored goal views.
inline const ViewCandidate& best_goal_view(const Episode& ep) {
  if (ep.goal_views.empty()) throw std::invalid_argument("episode has no goal views");
  const ViewCandidate* best = nullptr;
  for (int idx : ep.goal_views) {
    const ViewCandidate& v = ep.all_candidates.at(static_cast<std::size_t>(idx));
    if (best == nullptr || v.entropy < best->entropy || (v.entropy == best->entropy && v.index < best->index)) {
      best = &v;
    }
  }
  return *best;
}

inline AgentPose held_out_goal_pose(const Episode& ep) {
  AgentPose pose = best_goal_view(ep).pose;
  pose.pitch = pose.pitch == 0 ? 1 : 0;
  return pose;
}

inline Embedding make_goal(const Episode& ep, GoalMode mode, const Scene& scene, const Codebook& cb,
                           const FovConfig& fov, const SupportSet* support = nullptr,
                           bool nearest_only = false) {
  switch (mode) {
    case GoalMode::Image:
      return render(scene, held_out_goal_pose(ep), cb, fov).semantic;
    case GoalMode::Text:
      return text_embed(cb, ep.text_goal.category, ep.text_goal.attributes, ep.text_goal.context_tags);
    case GoalMode::TextExpanded: {
      if (support == nullptr) {
        throw std::invalid_argument("make_goal: text_expanded mode needs a support set");
      }
      const Embedding t =
          text_embed(cb, ep.text_goal.category, ep.text_goal.attributes, ep.text_goal.context_tags);
      return expand_text_goal(t, *support, cb.config().temperature, nearest_only);
    }
  }
  throw std::invalid_argument("unknown goal mode");
}

// --- evaluation -------------------------------------------------------------------

struct EvalEpisodeRecord {
  std::string episode_id;
  bool success = false;
  double path_length_m = 0.0;
  double optimal_length_m = 0.0;
  int steps = 0;
  bool stopped = false;
  double final_dist_m = 0.0;
};

// Success weighted by (inverse) path length; free successes (optimal length
// zero) count as weight 1.
inline double spl_summand(bool success, double path_m, double optimal_m) {
  if (!success) return 0.0;
  if (optimal_m <= 0.0) return 1.0;
  return optimal_m / std::max(path_m, optimal_m);
}

struct EvalReport {
  std::vector<EvalEpisodeRecord> records;

  double sr() const {
    if (records.empty()) return 0.0;
    int s = 0;
    for (const auto& r : records) s += r.success ? 1 : 0;
    return static_cast<double>(s) / static_cast<double>(records.size());
  }
  double spl() const {
    if (records.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : records) sum += spl_summand(r.success, r.path_length_m, r.optimal_length_m);
    return sum / static_cast<double>(records.size());
  }
};

// An evaluation policy sees the observation each step; scripted baselines may
// also use the privileged episode context handed to begin_episode.
struct EvalContext {
  const Episode* episode = nullptr;
  const Scene* scene = nullptr;
  const std::vector<double>* goal_dist_field = nullptr;
  const Eigen::VectorXd* goal = nullptr;  // what a learned agent would receive
  int omega = 12;
};

class EvalPolicy {
 public:
  virtual ~EvalPolicy() = default;
  virtual void begin_episode(const EvalContext& ctx) = 0;
  virtual Action decide(const Observation& obs, const AgentPose& pose) = 0;
};

class AgentEvalPolicy : public EvalPolicy {
 public:
  // Owns a copy of the weights so the policy cannot outlive them.
  AgentEvalPolicy(AgentParams params, bool greedy, std::uint64_t seed)
      : params_(std::move(params)), greedy_(greedy), rng_(derive_seed(seed, "eval-actions")) {}

  void begin_episode(const EvalContext& ctx) override {
    state_ = initial_policy_state(params_.config);
    goal_ = *ctx.goal;
  }

  Action decide(const Observation& obs, const AgentPose&) override {
    const PolicyOutput out = policy_step(params_, obs, goal_, state_);
    const int a = greedy_ ? greedy_action(out.logits) : sample_action(out.logits, rng_);
    state_.prev_action = one_hot_action(a);
    return static_cast<Action>(a);
  }

 private:
  AgentParams params_;
  bool greedy_;
  Rng rng_;
  PolicyState state_;
  Eigen::VectorXd goal_;
};

class RandomWalkPolicy : public EvalPolicy {
 public:
  explicit RandomWalkPolicy(std::uint64_t seed) : rng_(derive_seed(seed, "random-walk")) {}
  void begin_episode(const EvalContext&) override {}
  Action decide(const Observation&, const AgentPose&) override {
    return static_cast<Action>(rng_.uniform_index(kNumActions));
  }

 private:
  Rng rng_;
};

// Privileged shortest-path follower: descend the goal distance field, turn
// toward the next cell, stop on arrival. Needs omega divisible by 4 so the
// cardinal directions are exact headings.
class BfsOraclePolicy : public EvalPolicy {
 public:
  void begin_episode(const EvalContext& ctx) override {
    if (ctx.omega % 4 != 0) throw std::invalid_argument("bfs oracle: omega must be divisible by 4");
    ctx_ = ctx;
  }

  Action decide(const Observation&, const AgentPose& pose) override {
    const Scene& scene = *ctx_.scene;
    const std::vector<double>& field = *ctx_.goal_dist_field;
    const Cell c = cell_of(pose);
    const double here = field[static_cast<std::size_t>(c.y) * scene.width + c.x];
    if (here <= 0.0) return Action::Stop;

    // pick the 4-neighbor one BFS step closer to the goal
    const int dx[4] = {1, 0, -1, 0};
    const int dy[4] = {0, 1, 0, -1};
    int dir = -1;
    for (int k = 0; k < 4; ++k) {
      const int nx = c.x + dx[k];
      const int ny = c.y + dy[k];
      if (!scene.is_floor(nx, ny)) continue;
      if (field[static_cast<std::size_t>(ny) * scene.width + nx] < here - 1e-9) {
        dir = k;
        break;
      }
    }
    if (dir < 0) return Action::Stop;  // goal unreachable from here

    const int want_yaw = dir * (ctx_.omega / 4);
    if (pose.yaw != want_yaw) {
      // turn along the shorter arc
      const int left = (want_yaw - pose.yaw + ctx_.omega) % ctx_.omega;
      return left <= ctx_.omega - left ? Action::TurnLeft : Action::TurnRight;
    }
    return Action::MoveForward;
  }

 private:
  EvalContext ctx_;
};

struct EvalConfig {
  GoalMode mode = GoalMode::Image;
  int max_episode_steps = 200;
  bool greedy = true;
  bool nn_retrieval = false;  // ablation: nearest support vector instead of the mixture
  std::uint64_t seed = 0;
};

// Variant-aware goal vector for a learned agent. LO agents navigate by
// geometry alone: their image goal is the goal view's depth scan and text
// goals give them nothing (zero vector), since a layout encoder has no text
// interface.
inline Eigen::VectorXd eval_goal_vector(const EpisodeSet& set, const Episode& ep, Variant variant,
                                        GoalMode mode, const SupportSet* support,
                                        bool nearest_only = false) {
  if (variant == Variant::LO) {
    if (mode == GoalMode::Image) {
      return render(set.cache(ep.scene_id), held_out_goal_pose(ep), set.fov()).layout;
    }
    return Eigen::VectorXd::Zero(set.fov().n_rays);
  }
  return make_goal(ep, mode, set.scene(ep.scene_id), set.codebook(), set.fov(), support, nearest_only);
}

// Run the policy over every episode in the set and score SR/SPL. For learned
// policies pass the goal mode they should be tested under.
inline EvalReport evaluate(const EpisodeSet& set, EvalPolicy& policy, const EvalConfig& cfg,
                           Variant variant = Variant::PSL, const SupportSet* support = nullptr,
                           bool learned = true) {
  EvalReport report;
  const RewardConfig reward_defaults{};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const PreparedEpisode& pe = set.prepared(i);
    const Episode& ep = *pe.ep;

    Eigen::VectorXd goal;
    if (learned) {
      goal = eval_goal_vector(set, ep, variant, cfg.mode, support, cfg.nn_retrieval);
    } else {
      goal = Eigen::VectorXd::Zero(1);  // scripted policies ignore it
    }

    EvalContext ctx;
    ctx.episode = &ep;
    ctx.scene = pe.scene;
    ctx.goal_dist_field = pe.dist_field;
    ctx.goal = &goal;
    ctx.omega = set.fov().omega;
    policy.begin_episode(ctx);

    AgentPose pose = ep.start;
    double path_m = 0.0;
    bool stopped = false;
    int steps = 0;
    for (; steps < cfg.max_episode_steps; ++steps) {
      const Observation obs = render(*pe.cache, pose, set.fov());
      const Action a = policy.decide(obs, pose);
      if (a == Action::Stop) {
        stopped = true;
        ++steps;
        break;
      }
      const AgentPose before = pose;
      pose = step(*pe.scene, pose, a, set.fov().omega).pose;
      if (a == Action::MoveForward && (pose.x != before.x || pose.y != before.y)) path_m += kCellMeters;
    }

    const Cell c = cell_of(pose);
    EvalEpisodeRecord rec;
    rec.episode_id = ep.episode_id;
    rec.final_dist_m = (*pe.dist_field)[static_cast<std::size_t>(c.y) * pe.scene->width + c.x];
    rec.stopped = stopped;
    StepSnapshot snap;
    snap.dist_m = rec.final_dist_m;
    rec.success = success_test(snap, stopped, reward_defaults);
    rec.path_length_m = path_m;
    rec.optimal_length_m = ep.optimal_length_m;
    rec.steps = steps;
    report.records.push_back(std::move(rec));
  }
  return report;
}

// --- diagnostics -------------------------------------------------------------------

struct GapClosureStats {
  double mean_cos_text = 0.0;      // cosine(text goal, image goal)
  double mean_cos_expanded = 0.0;  // cosine(retrieved goal, image goal)
  double closure() const { return mean_cos_expanded - mean_cos_text; }
};

// How much of the text-image modality gap retrieval closes, measured against
// each episode's held-out image goal.
inline GapClosureStats gap_closure_stats(const EpisodeSet& set, const SupportSet& support) {
  GapClosureStats out;
  const double tau = set.codebook().config().temperature;
  int n = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Episode& ep = *set.prepared(i).ep;
    const Embedding image =
        make_goal(ep, GoalMode::Image, set.scene(ep.scene_id), set.codebook(), set.fov(), nullptr);
    const Embedding text =
        make_goal(ep, GoalMode::Text, set.scene(ep.scene_id), set.codebook(), set.fov(), nullptr);
    const Embedding expanded = expand_text_goal(text, support, tau);
    out.mean_cos_text += text.dot(image) / (text.norm() * image.norm());
    out.mean_cos_expanded += expanded.dot(image) / (expanded.norm() * image.norm());
    ++n;
  }
  if (n == 0) throw std::invalid_argument("gap_closure_stats: empty episode set");
  out.mean_cos_text /= n;
  out.mean_cos_expanded /= n;
  return out;
}

}  // namespace psl
